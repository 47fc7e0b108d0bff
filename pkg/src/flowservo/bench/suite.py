"""Run scenario x controller grids and write per-episode and summary artifacts."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from ..pipeline import CONTROLLERS, EpisodeResult, Outcome, run_episode
from .config import ScenarioConfig, load_scenario
from .io import write_flo, write_trajectory_csv
from .metrics import compute_metrics

log = logging.getLogger(__name__)


@dataclass
class EpisodeRecord:
    scenario: str
    controller: str
    outcome: str
    min_dist: float
    traj_length: float
    steps: int
    error: str = ""

    @property
    def success(self) -> bool:
        return self.outcome == Outcome.SUCCESS.value


@dataclass
class SuiteSummary:
    records: list = field(default_factory=list)
    results: dict = field(default_factory=dict)   # (scenario, controller) -> EpisodeResult

    @property
    def controllers(self) -> list:
        return list(dict.fromkeys(r.controller for r in self.records))

    @property
    def scenarios(self) -> list:
        return list(dict.fromkeys(r.scenario for r in self.records))

    def successes(self, controller: str) -> int:
        return sum(r.success for r in self.records if r.controller == controller)

    def success_rate(self, controller: str) -> Fraction:
        n = sum(r.controller == controller for r in self.records)
        return Fraction(self.successes(controller), n) if n else Fraction(0)

    def record(self, scenario: str, controller: str) -> EpisodeRecord:
        for r in self.records:
            if r.scenario == scenario and r.controller == controller:
                return r
        raise KeyError((scenario, controller))

    def to_text(self) -> str:
        head = f"{'scenario':<22} {'controller':<10} {'outcome':<10} {'min_dist':>10} {'traj_len':>10} {'steps':>6}"
        lines = [head, "-" * len(head)]
        for r in self.records:
            lines.append(f"{r.scenario:<22} {r.controller:<10} {r.outcome:<10} "
                         f"{r.min_dist:>10.4f} {r.traj_length:>10.3f} {r.steps:>6d}")
        lines.append("")
        lines.append(f"{'controller':<10} {'success':>8} {'rate':>8}")
        for c in self.controllers:
            rate = self.success_rate(c)
            n = sum(r.controller == c for r in self.records)
            lines.append(f"{c:<10} {self.successes(c):>4d}/{n:<3d} {float(rate) * 100:>7.2f}%")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "episodes": [{k: (round(v, 6) if isinstance(v, float) else v) for k, v in r.__dict__.items()}
                         for r in self.records],
            "success": {c: {"successes": self.successes(c),
                            "episodes": sum(r.controller == c for r in self.records),
                            "rate": float(self.success_rate(c))} for c in self.controllers},
        }
        return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def apply_overrides(cfg: ScenarioConfig, seed=None, noise=None, depth_mode=None) -> ScenarioConfig:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if noise is not None:
        cfg = replace(cfg, noise_sigma=noise)
    if depth_mode is not None:
        cfg = replace(cfg, controller=replace(cfg.controller, depth_mode=depth_mode))
    return cfg


def run_scenario(cfg: ScenarioConfig, controller: str, keep_flows: bool = False) -> EpisodeResult:
    return run_episode(cfg.scene, cfg.start, cfg.goal, cfg.camera, controller, cfg.controller,
                       cfg.termination, cfg.noise_sigma, cfg.seed, keep_flows)


def _run_job(args):
    cfg, controller, keep_flows = args
    try:
        return run_scenario(cfg, controller, keep_flows), ""
    except Exception as exc:  # recorded as a failed episode, never aborts the suite
        return None, f"{type(exc).__name__}: {exc}"


def write_episode(result: EpisodeResult, cfg: ScenarioConfig, controller: str, out_dir: Path,
                  dump_flow: bool = False) -> None:
    scen_dir = out_dir / cfg.name
    scen_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result, scen_dir / f"{controller}.csv")
    if dump_flow and result.flows:
        flo_dir = scen_dir / f"{controller}_flo"
        flo_dir.mkdir(exist_ok=True)
        for step, desired, predicted in result.flows:
            write_flo(desired, flo_dir / f"step{step:05d}_desired.flo")
            if predicted is not None:
                write_flo(predicted, flo_dir / f"step{step:05d}_predicted.flo")


def _collect(summary: SuiteSummary, job, output, out_dir: Path) -> None:
    (cfg, ctl, dump_flow), (result, error) = job, output
    if result is None:
        log.warning("%s/%s failed: %s", cfg.name, ctl, error)
        summary.records.append(EpisodeRecord(cfg.name, ctl, "Error", float("nan"), float("nan"), 0, error))
        return
    write_episode(result, cfg, ctl, out_dir, dump_flow)
    min_dist, length = compute_metrics(result.positions, cfg.scene)
    summary.records.append(EpisodeRecord(cfg.name, ctl, result.outcome.value, min_dist, length,
                                         len(result.trajectory)))
    summary.results[(cfg.name, ctl)] = result
    log.info("%s/%s: %s min_dist=%.3f length=%.2f", cfg.name, ctl, result.outcome.value, min_dist, length)


def run_suite(scenarios, controllers=CONTROLLERS, out_dir="out", seed=None, noise=None,
              depth_mode=None, dump_flow: bool = False, plots: bool = True, jobs: int = 1) -> SuiteSummary:
    """Run every (scenario, controller) pair. ``scenarios`` are paths or configs."""
    cfgs = [s if isinstance(s, ScenarioConfig) else load_scenario(s) for s in scenarios]
    if not cfgs:
        raise ValueError("no scenarios to run")
    cfgs = [apply_overrides(c, seed, noise, depth_mode) for c in cfgs]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs_list = [(cfg, ctl, dump_flow) for cfg in cfgs for ctl in controllers]
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    outputs = pool.map(_run_job, jobs_list) if pool else map(_run_job, jobs_list)

    summary = SuiteSummary()
    try:
        for job, output in zip(jobs_list, outputs):
            _collect(summary, job, output, out_dir)
    finally:
        if pool:
            pool.shutdown()

    (out_dir / "summary.txt").write_text(summary.to_text())
    (out_dir / "summary.json").write_text(summary.to_json())
    if plots:
        from .plots import plot_success_rates, plot_trajectories
        for cfg in cfgs:
            runs = {c: summary.results[(cfg.name, c)] for c in controllers if (cfg.name, c) in summary.results}
            plot_trajectories(cfg, runs, out_dir / cfg.name / "trajectories.png")
        plot_success_rates(summary, out_dir / "success_rates.png")
    return summary
