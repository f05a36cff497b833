from __future__ import annotations
from dotenv import load_dotenv, find_dotenv
import os
from datetime import datetime, timezone
from typing import Optional

# Load .env from project root (or nearest parent)
load_dotenv(find_dotenv())


def _as_bool(val: Optional[str], default: bool = False) -> bool:
    if val is None:
        return default
    return val.strip().lower() in {"1", "true", "t", "yes", "y"}


def _as_int(val: Optional[str], default: int = 0) -> int:
    """Integer env value; unparsable text falls back to default."""
    try:
        return int(val) if val is not None else default
    except ValueError:
        return default


def _as_str(val: Optional[str], default: Optional[str] = None) -> Optional[str]:
    """Stripped env value, default when unset or blank."""
    val = (val or "").strip()
    return val or default


def _resolve_under(base: str, maybe_relative: Optional[str], default_name: Optional[str] = None) -> str:
    """
    Absolute path of maybe_relative, taken relative to base unless already
    absolute. Falls back to base/default_name, then to base itself.
    """
    name = maybe_relative or default_name
    if name and os.path.isabs(name):
        return name
    return os.path.abspath(os.path.join(base, name) if name else base)


PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


class SETTINGS:
    """
    Settings loaded from .env and derived values.
    - One run timestamp shared by every report of the process
    - BASEPATH locates the YAML registries (project root by default)
    - STIFFODE_WORKDIR overrides the experiment workdir and nothing else
    - Directories are created by the commands that write into them
    """

    def __init__(self):
        # Stable per-instance timestamp for the entire run
        # Format is friendly for filenames
        self.RUN_ID = datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S")

        base_path = _as_str(os.getenv("BASEPATH"))
        self.BASEPATH = os.path.abspath(base_path) if base_path else PROJECT_ROOT

        workdir = _as_str(os.getenv("STIFFODE_WORKDIR"))
        self.WORKDIR_OVERRIDE = _resolve_under(os.getcwd(), workdir) if workdir else None

        self.DISABLE_REPORTS = _as_bool(os.getenv("DISABLE_REPORTS"), default=False)
        self.DEFAULT_WORKERS = max(1, _as_int(os.getenv("STIFFODE_WORKERS"), 1))

        # Folder names inside a workdir
        self.DATASETS = _as_str(os.getenv("DATASETS"), "datasets")
        self.MODELS = _as_str(os.getenv("MODELS"), "models")
        self.REPORTS = _as_str(os.getenv("REPORTS"), "reports")

    def workdir(self, configured: Optional[str] = None) -> str:
        """Workdir in force: the env override, else the configured one, else ./workdir."""
        if self.WORKDIR_OVERRIDE:
            return self.WORKDIR_OVERRIDE
        return _resolve_under(os.getcwd(), configured, "workdir")

    def reports_run(self, report_dir: str) -> str:
        """Run-scoped report folder under a report directory."""
        return os.path.abspath(os.path.join(report_dir, self.RUN_ID))

    @staticmethod
    def create_directories(*paths: str) -> None:
        """Create folders if they do not exist."""
        for p in paths:
            os.makedirs(p, exist_ok=True)



_S = None

def get_settings():
    """
    Return a lazily-initialized shared SETTINGS instance for the current process.
    Ensures a single RUN_ID and consistent paths across modules.
    """
    global _S
    if _S is None:
        _S = SETTINGS()
    return _S


def reset_settings():
    """Drop the shared instance so the next get_settings() re-reads the environment."""
    global _S
    _S = None
