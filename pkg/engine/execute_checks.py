"""
SeriesValidator Class:
- Validates generated series against the checks listed for the problem in
  the validation registry
- Stops at the first failing check and writes a validation report
"""

from typing import Dict, List, Optional

from engine.reporter import Reporter
from utils.import_configs import get_problem_registry
from utils.problems import ParametricProblem
from utils.transformers import ReparamSeries
from utils.validators import VALIDATORS_DICT
from config.settings import *


class SeriesValidator:
    def __init__(self, name: str, registry_path: str, report_dir: str, problem: ParametricProblem):
        """
        Initialize the SeriesValidator.

        Args:
            name (str): Step name, also the report subfolder
            registry_path (str): Path to the validation registry file
            report_dir (str): Report directory of the experiment
            problem (ParametricProblem): Problem whose section of the registry is used

        Raises:
            ValueError: If the registry names an unknown validator
        """
        self.S = get_settings()

        if name is None:
            raise ValueError("Step name must be provided. In this way you can identify the step in the logs")

        self.name = name
        self.validators = get_problem_registry(problem.name, registry_path)["validators"] or {}
        for validator_name in self.validators:
            if validator_name not in VALIDATORS_DICT:
                raise ValueError(f"Validator {validator_name} not found")
        self.reporter = Reporter(report_dir, name)

    def _execute_validator(self, validator_func, series: ReparamSeries, messages: List[str],
                           params: Optional[Dict] = None) -> bool:
        """One check; a check that raises counts as failed and its message is kept."""
        try:
            return bool(validator_func(series, messages, params))
        except (ValueError, ArithmeticError) as e:
            messages.append(f"{series.tag}: {type(e).__name__}: {e}")
            return False

    def validate(self, series: ReparamSeries, messages: Optional[List[str]] = None) -> bool:
        """
        Run every registered check on one series.

        Args:
            messages (list, optional): collects the failure messages for the caller.

        Returns:
            bool: True if all checks passed.
        """
        messages = [] if messages is None else messages
        series_results = {}

        for validator_name, params in self.validators.items():
            result = self._execute_validator(VALIDATORS_DICT[validator_name], series, messages, params)
            if result is False:
                self.reporter.write_report(series.tag, messages)
                return False
            series_results[validator_name] = result

        messages.append("\n\n------ VALIDATION RESULTS -------\n")
        for validator_name, result in series_results.items():
            messages.append(f"{validator_name}: {'Passed' if result else 'Failed'}")
        return True
