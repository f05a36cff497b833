"""
SeriesTransformer Class:
- Turns a reference Trajectory into a ReparamSeries with the transforms listed
  for the problem in the transform registry
- Applies transformations in specified order
- Generates transformation reports
"""

from typing import Any, Dict, List, Optional, Tuple

from engine.reporter import Reporter
from utils.import_configs import get_problem_registry
from utils.ode_core import Trajectory
from utils.problems import ParametricProblem
from utils.transformers import TRANSFORMERS_DICT, ReparamSeries
from config.settings import *


class SeriesTransformer:
    def __init__(self, name: str, registry_path: str, report_dir: str, problem: ParametricProblem,
                 filter_override: Optional[Dict[str, int]] = None):
        """
        Initialize the SeriesTransformer.

        Args:
            name (str): Step name, also the report subfolder
            registry_path (str): Path to the transform registry file
            report_dir (str): Report directory of the experiment
            problem (ParametricProblem): Problem whose section of the registry is used
            filter_override (dict, optional): window/order replacing the registry
                parameters of 'estimate_derivatives'
        """
        self.S = get_settings()

        if name is None:
            raise ValueError("Step name must be provided. In this way you can identify the step in the logs")

        self.name = name
        self.problem = problem
        self.transforms = sorted(get_problem_registry(problem.name, registry_path)["transforms"],
                                 key=lambda x: x["order"])
        if filter_override:
            for transform in self.transforms:
                if transform["function"] == "estimate_derivatives":
                    transform["params"] = {**(transform.get("params") or {}), **filter_override}
        self.reporter = Reporter(report_dir, name)

    def describe(self) -> List[Dict[str, Any]]:
        """The transform chain in force, as written to the dataset manifest."""
        return [{"name": t["name"], "function": t["function"], "params": t.get("params") or {}}
                for t in self.transforms]

    def transform(self, traj: Trajectory, mu, tag: str) -> Tuple[Optional[ReparamSeries], List[Dict[str, Any]]]:
        """
        Run the transform chain on one reference solve.

        Returns:
            (series, transform_log): series is None when any transform failed.
        """
        messages: List[str] = []
        transform_log: List[Dict[str, Any]] = []
        current = traj

        for step in self.transforms:
            entry = {"transform": step["name"], "status": "success"}
            transform_log.append(entry)
            func = TRANSFORMERS_DICT.get(step["function"])
            if func is None:
                entry.update(status="failed", error=f"unknown transform function {step['function']!r}")
            else:
                try:
                    current = func(current, self.problem, mu, messages=messages, **(step.get("params") or {}))
                except (ValueError, ArithmeticError) as e:
                    entry.update(status="failed", error=f"{type(e).__name__}: {e}")
            if entry["status"] == "failed":
                messages.append(f"{step['name']}: {entry['error']}")
                messages.insert(0, f"\n------ TRANSFORMATION RESULTS for {tag} -------\n")
                self.reporter.write_report(tag, messages)
                return None, transform_log
            messages.append(f"{step['name']}: ok")

        current.tag = tag
        return current, transform_log
