import json
import math
import os

import numpy as np
import pandas as pd

from config.constants import CSV_FLOAT_FORMAT
from config.settings import *


def json_safe(value):
    """Plain JSON types: numpy scalars/arrays unwrapped, NaN and infinities as null."""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path, payload):
    """Write payload as indented JSON with sorted keys, creating the folder."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as fh:
        json.dump(json_safe(payload), fh, indent=2, sort_keys=True)
        fh.write('\n')
    return path


def write_csv(path, frame: pd.DataFrame):
    """Write a table with the fixed 17-digit float format, creating the folder."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


class Reporter:
    def __init__(self, report_dir, step):
        """
        Initialize the Reporter for one pipeline step.

        Args:
            report_dir (str): Report directory of the experiment.
            step (str): Step name; reports go to <report_dir>/<RUN_ID>/<step>/.

        Raises:
            ValueError: If report_dir or step is not provided
        """
        if report_dir is None or step is None:
            raise ValueError("report_dir and step must be provided")

        self.S = get_settings()
        self.base_report_path = os.path.join(self.S.reports_run(report_dir), step)

    def _create_report_path(self, item_name):
        report_path = os.path.join(self.base_report_path, os.path.basename(item_name))
        os.makedirs(os.path.dirname(report_path), exist_ok=True)
        return os.path.splitext(report_path)[0]

    def write_report(self, item_name, messages):
        """Text report for one item; skipped when every message is a pass or reports are disabled."""
        if not messages or all("Passed" in message for message in messages) or self.S.DISABLE_REPORTS:
            return None

        report_path = self._create_report_path(item_name) + '.txt'
        with open(report_path, 'w') as report_file:
            for message in messages:
                report_file.write(message + '\n')
        print(f"Report written to {report_path}")
        return report_path

    def write_json(self, item_name, payload):
        if self.S.DISABLE_REPORTS:
            return None
        return write_json(self._create_report_path(item_name) + '.json', payload)
