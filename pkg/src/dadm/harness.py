"""Experiment orchestration: configuration, multi-run statistics and CSV output."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, fields as _dc_fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .nets import ContractError
from .optim import TrainConfig
from .problems import BsdeProblem, get_problem
from .schemes import SolveResult, TrainedStack, evaluate_slice, solve
from .sde import Rng, make_uniform_grid

PRESETS = {
    # desk-scale settings so the benchmark suite runs in minutes
    "desk": {"N": 40, "iterations": 1500, "subsequent_iterations": 500,
             "batch_size": 256, "hidden_width": 30},
    # the full-scale settings used for the reference tables
    "paper": {"iterations": 5000, "subsequent_iterations": 5000,
              "batch_size": 1000},
}


@dataclass
class ExperimentConfig:
    problem: str = "bounded"
    scheme: str = "dadm"
    d: int = 1
    T: float = 1.0
    N: int = 40
    runs: int = 5
    seed: int = 42
    mu: Optional[float] = None
    sigma: Optional[float] = None
    x0: Optional[float] = None
    theory_mode: bool = False
    gamma: float = 1.0
    out: str = "out"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.runs < 1 or self.N < 1:
            raise ContractError("runs and N must be positive")

    def make_problem(self) -> BsdeProblem:
        overrides = {"T": self.T}
        if self.problem == "bounded":
            if self.mu is not None:
                overrides["mu"] = self.mu
            if self.sigma is not None:
                overrides["sigma"] = self.sigma
        if self.x0 is not None:
            overrides["x0"] = self.x0
        return get_problem(self.problem, self.d, **overrides)


_TRAIN_KEYS = {f.name for f in _dc_fields(TrainConfig)}
_EXP_KEYS = {f.name for f in _dc_fields(ExperimentConfig)} - {"train"}


def parse_config_file(path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    return values


def _coerce(key: str, val, target_cls):
    for f in _dc_fields(target_cls):
        if f.name == key:
            ann = f.type
            if "bool" in str(ann):
                return str(val).lower() in ("1", "true", "yes", "on")
            if "int" in str(ann):
                return int(val)
            if "float" in str(ann):
                return float(val)
            return str(val)
    raise ContractError(f"unknown config key {key!r}")


def build_config(file_values: Optional[dict] = None, preset: Optional[str] = None,
                 **cli_overrides) -> ExperimentConfig:
    """Merge precedence: defaults < preset < config file < explicit overrides."""
    merged = {}
    if preset:
        if preset not in PRESETS:
            raise ContractError(f"unknown preset {preset!r}")
        merged.update(PRESETS[preset])
    if file_values:
        merged.update(file_values)
    merged.update({k: v for k, v in cli_overrides.items() if v is not None})

    exp_kwargs, train_kwargs = {}, {}
    for key, val in merged.items():
        if key in _TRAIN_KEYS:
            train_kwargs[key] = _coerce(key, val, TrainConfig)
        elif key in _EXP_KEYS:
            exp_kwargs[key] = _coerce(key, val, ExperimentConfig)
        else:
            raise ContractError(f"unknown config key {key!r}")
    return ExperimentConfig(train=TrainConfig(**train_kwargs), **exp_kwargs)


@dataclass
class RunReport:
    scheme: str
    estimates: List[float]
    seeds: List[int]
    converged: List[bool]
    wall_times: List[float]
    exact: Optional[float] = None
    results: List[SolveResult] = field(default_factory=list)
    stacks: List[Optional[TrainedStack]] = field(default_factory=list)

    @property
    def converged_count(self) -> int:
        return sum(self.converged)

    @property
    def not_conv(self) -> bool:
        return self.converged_count < len(self.converged) / 2.0

    @property
    def avg(self) -> float:
        vals = [e for e, c in zip(self.estimates, self.converged) if c]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def std(self) -> float:
        vals = [e for e, c in zip(self.estimates, self.converged) if c]
        if len(vals) < 2:
            return 0.0 if len(vals) == 1 else float("nan")
        return float(np.std(vals, ddof=1))

    @property
    def rel_err_pct(self) -> Optional[float]:
        if self.exact is None or not np.isfinite(self.avg) or self.exact == 0.0:
            return None
        return abs(self.avg - self.exact) / abs(self.exact) * 100.0


def run_experiment(config: ExperimentConfig, keep_stacks: bool = False) -> RunReport:
    """R independent solves with seeds derived as base_seed + r."""
    problem = config.make_problem()
    grid = make_uniform_grid(config.N, problem.T)
    exact = None
    if problem.exact_u is not None:
        exact = float(np.asarray(problem.exact_u(0.0, problem.x0[None, :])).ravel()[0])
    report = RunReport(scheme=config.scheme, estimates=[], seeds=[], converged=[],
                       wall_times=[], exact=exact)
    for r in range(config.runs):
        seed = config.seed + r
        rng = Rng(seed)
        result, stack = solve(config.scheme, problem, grid, config.train, rng,
                              theory_mode=config.theory_mode, gamma=config.gamma)
        report.estimates.append(result.y0)
        report.seeds.append(seed)
        report.converged.append(result.converged)
        report.wall_times.append(result.wall_time)
        report.results.append(result)
        report.stacks.append(stack if keep_stacks else None)
    return report


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    return f"{x:.6g}"


def _timestamp_line() -> str:
    return f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat()}\n"


def emit_table(reports: List[RunReport], path) -> None:
    """Summary CSV: scheme,avg,std,rel_err_pct,converged_runs,notes."""
    if not reports:
        raise ContractError("emit_table requires at least one report")
    lines = [_timestamp_line(), "scheme,avg,std,rel_err_pct,converged_runs,notes\n"]
    for rep in reports:
        notes = "NotConv" if rep.not_conv else ""
        lines.append(",".join([
            rep.scheme, _fmt(rep.avg), _fmt(rep.std), _fmt(rep.rel_err_pct),
            str(rep.converged_count), notes]) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


def emit_runs(reports: List[RunReport], path) -> None:
    """Per-run values, so summary statistics can be recomputed independently.
    Wall times stay out of the file to keep repeated invocations byte-identical."""
    lines = [_timestamp_line(), "scheme,run,seed,y0,converged\n"]
    for rep in reports:
        for r, (est, seed, conv) in enumerate(
                zip(rep.estimates, rep.seeds, rep.converged)):
            lines.append(f"{rep.scheme},{r},{seed},{_fmt(est)},{int(conv)}\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


def read_table(path):
    """Parse a table CSV back into a list of row dicts (timestamp line skipped)."""
    rows = []
    header = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or not line.strip():
            continue
        parts = line.split(",")
        if header is None:
            header = parts
            continue
        rows.append(dict(zip(header, parts)))
    return rows


def emit_slice(stack: TrainedStack, i: int, x_range, n_points: int, path,
               meta: str = "") -> None:
    """Slice CSV along the diagonal direction about x0:
    x_1..x_d,u_hat,z_hat_1..z_hat_d,u_exact,z_exact_1..z_exact_d
    (exact columns left empty when the problem has no closed form)."""
    d = stack.problem.d
    lo, hi = float(x_range[0]), float(x_range[1])
    offsets = np.linspace(lo, hi, n_points)
    xs = stack.problem.x0[None, :] + offsets[:, None]
    table = evaluate_slice(stack, i, xs)

    header = ([f"x_{j+1}" for j in range(d)] + ["u_hat"]
              + [f"z_hat_{j+1}" for j in range(d)] + ["u_exact"]
              + [f"z_exact_{j+1}" for j in range(d)])
    t = float(stack.grid.times[i])
    lines = [_timestamp_line(),
             f"# meta problem={stack.problem.name} step={i} t={t:.6g}\n",
             ",".join(header) + "\n"]
    has_exact = "u_exact" in table
    for k in range(n_points):
        vals = [_fmt(v) for v in xs[k]]
        vals.append(_fmt(float(table["u_hat"][k])))
        vals += [_fmt(v) for v in table["z_hat"][k]]
        if has_exact:
            vals.append(_fmt(float(table["u_exact"][k])))
            vals += [_fmt(v) for v in table["z_exact"][k]]
        else:
            vals += [""] * (d + 1)
        lines.append(",".join(vals) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


def emit_losses(result: SolveResult, path, n_steps: Optional[int] = None) -> None:
    """Training-loss trajectories CSV: step,iteration,loss."""
    lines = [_timestamp_line(), "step,iteration,loss\n"]
    for idx, hist in enumerate(result.loss_history):
        if n_steps is not None and len(result.loss_history) == n_steps:
            step_label = n_steps - 1 - idx
        else:
            step_label = idx
        for it, loss in enumerate(hist):
            lines.append(f"{step_label},{it},{_fmt(float(loss))}\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")
