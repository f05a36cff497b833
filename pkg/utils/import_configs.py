import yaml
import os
from config.settings import *
from utils.errors import ConfigError


def _resolve(file_path):
    S = get_settings()
    if not os.path.isabs(file_path):
        file_path = os.path.join(S.BASEPATH, file_path)
    return file_path


def get_registry(file_path='config/problems_registry.yaml'):
    file_path = _resolve(file_path)

    with open(file_path, 'r') as file:
        registry = yaml.safe_load(file)

    return registry or {}


def get_problem_registry(problem, file_path):
    """Section of a per-problem registry; a missing section is a config error."""
    registry = get_registry(file_path)
    if problem not in registry:
        raise ConfigError(f"No entry for problem '{problem}' in {file_path}")
    return registry[problem]


def load_experiment_file(file_path):
    """
    Read an experiment file. JSON is parsed by the YAML loader as well, so both
    formats are accepted; the top level must be a mapping.
    """
    if not os.path.isfile(file_path):
        raise ConfigError(f"Config file not found: {file_path}")
    with open(file_path, 'r') as file:
        try:
            content = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse {file_path}: {e}")
    if not isinstance(content, dict):
        raise ConfigError(f"{file_path} must contain a mapping at the top level")
    return content
