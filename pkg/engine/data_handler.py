"""
DatasetStore Class:
Owns the on-disk layout of a generated dataset:
- <dataset_dir>/manifest.json lists every series with its μ, n and file
- <dataset_dir>/<role>/series_<index>.csv holds one ReparamSeries
- Refuses to clobber an existing dataset unless overwrite is requested
"""

import json
import os
import shutil
from typing import Dict, List, Optional

import pandas as pd

from engine.reporter import write_json
from utils.errors import ConfigError, MissingArtifactError
from utils.problems import GRID_ROLES, ParametricProblem
from utils.transformers import ReparamSeries
from config.settings import *


def series_tag(role: str, index: int) -> str:
    return f"{role}_{index:04d}"


class DatasetStore:
    MANIFEST = "manifest.json"

    def __init__(self, dataset_dir: str):
        """
        Args:
            dataset_dir (str): Folder of one problem's dataset.
        """
        if dataset_dir is None:
            raise ValueError("dataset_dir must be provided")
        self.S = get_settings()
        self.dataset_dir = os.path.abspath(dataset_dir)

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.dataset_dir, self.MANIFEST)

    def exists(self) -> bool:
        return os.path.isfile(self.manifest_path)

    def prepare(self, overwrite: bool = False) -> None:
        """Make the folder ready for a fresh dataset, removing an old one only when overwrite is set."""
        if self.exists() and not overwrite:
            raise ConfigError(f"Dataset already exists at {self.dataset_dir}; pass --overwrite to replace it")
        for role in GRID_ROLES:
            shutil.rmtree(os.path.join(self.dataset_dir, role), ignore_errors=True)
        if os.path.isfile(self.manifest_path):
            os.remove(self.manifest_path)
        self.S.create_directories(self.dataset_dir)

    def series_path(self, role: str, index: int) -> str:
        return os.path.join(self.dataset_dir, role, f"series_{index:04d}.csv")

    def save_series(self, series: ReparamSeries, role: str, index: int) -> str:
        """Write one series and return its path relative to the dataset folder."""
        path = self.series_path(role, index)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        series.to_csv(path)
        return os.path.relpath(path, self.dataset_dir)

    def write_manifest(self, problem: ParametricProblem, seed: int, reference_tol: dict,
                       transforms: list, entries: List[dict], failures: List[dict]) -> str:
        manifest = {
            "problem": problem.name,
            "seed": seed,
            "reference_tol": reference_tol,
            "transforms": transforms,
            "normalizers": problem.normalizers.to_dict(),
            "series": entries,
            "failures": failures,
        }
        return write_json(self.manifest_path, manifest)

    def read_manifest(self) -> Dict:
        if not self.exists():
            raise MissingArtifactError(f"No dataset manifest at {self.manifest_path}; run 'generate' first")
        with open(self.manifest_path, 'r') as fh:
            return json.load(fh)

    def load_series(self, role: str, problem: ParametricProblem,
                    limit: Optional[int] = None) -> List[ReparamSeries]:
        """
        Read the series of one role in manifest order.

        Raises:
            MissingArtifactError: if the manifest or a listed file is missing,
                or the role has no series.
        """
        manifest = self.read_manifest()
        if manifest.get("problem") != problem.name:
            raise ConfigError(f"Dataset at {self.dataset_dir} belongs to '{manifest.get('problem')}', "
                              f"not '{problem.name}'")
        entries = [e for e in manifest["series"] if e["role"] == role]
        if not entries:
            raise MissingArtifactError(f"Dataset at {self.dataset_dir} has no '{role}' series")
        if limit is not None:
            entries = entries[:limit]

        out = []
        for entry in entries:
            path = os.path.join(self.dataset_dir, entry["file"])
            if not os.path.isfile(path):
                raise MissingArtifactError(f"Series file listed in the manifest is missing: {path}")
            frame = pd.read_csv(path)
            out.append(ReparamSeries.from_frame(frame, entry["mu"], tag=entry["tag"],
                                                state_normalizer=problem.normalizers.state))
        return out
