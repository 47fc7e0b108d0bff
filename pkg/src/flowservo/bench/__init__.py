from .config import ScenarioConfig, dump_scenario, load_scenario, parse_scenario
from .io import read_flo, read_trajectory_csv, write_flo, write_trajectory_csv
from .metrics import compute_metrics
from .suite import SuiteSummary, run_scenario, run_suite

__all__ = ["ScenarioConfig", "dump_scenario", "load_scenario", "parse_scenario", "read_flo",
           "read_trajectory_csv", "write_flo", "write_trajectory_csv", "compute_metrics",
           "SuiteSummary", "run_scenario", "run_suite", "bundled_suite"]


def bundled_suite():
    """Paths of the scenario files shipped with the package, in run order."""
    from importlib.resources import files
    root = files("flowservo") / "scenarios"
    return sorted(str(p) for p in root.iterdir() if p.name.endswith(".json"))
