"""Command line interface: solve, bench, slice and verify subcommands.

Configuration comes from a flat key=value file (--config, or the DADM_CONFIG
environment variable), optionally seeded by a preset (--preset desk|paper),
with individual command-line flags taking precedence. Exit codes: 0 success,
2 usage/config error, 3 the experiment ran but a majority of runs diverged.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import nets as nn
from . import validation
from .harness import (ExperimentConfig, RunReport, build_config, emit_losses,
                      emit_runs, emit_slice, emit_table, parse_config_file,
                      run_experiment)
from .nets import ContractError, WeightConstraint
from .optim import TrainConfig
from .problems import bounded_example, get_problem, pde_residual, unbounded_example
from .sde import Rng, make_uniform_grid, simulate_paths
from .schemes import (SCHEME_KEYS, TrainedStack, dadm_empirical_loss,
                      dbdp1_empirical_loss, dbdp2_empirical_loss, deep_bsde_loss)


def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--problem", choices=("bounded", "unbounded"))
    p.add_argument("--scheme", choices=SCHEME_KEYS)
    p.add_argument("--d", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--out")
    p.add_argument("--iterations", type=int)
    p.add_argument("--subsequent-iterations", dest="subsequent_iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--method", choices=("adam", "sgd"))
    p.add_argument("--activation", choices=("tanh", "relu"))
    p.add_argument("--hidden-width", dest="hidden_width", type=int)
    p.add_argument("--theory-mode", dest="theory_mode", action="store_const", const=True)
    p.add_argument("--gamma", type=float)


def _config_from_args(args) -> ExperimentConfig:
    file_values = None
    cfg_path = args.config or os.environ.get("DADM_CONFIG")
    if cfg_path:
        file_values = parse_config_file(cfg_path)
    keys = ("problem", "scheme", "d", "T", "N", "runs", "seed", "mu", "sigma",
            "x0", "out", "iterations", "subsequent_iterations", "batch_size",
            "lr0", "method", "activation", "hidden_width", "theory_mode", "gamma")
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return build_config(file_values, preset=args.preset, **overrides)


def _print_report(rep: RunReport) -> None:
    tag = " NotConv" if rep.not_conv else ""
    rel = "" if rep.rel_err_pct is None else f"  rel_err={rep.rel_err_pct:.3f}%"
    print(f"{rep.scheme}: avg={rep.avg:.6g} std={rep.std:.6g} "
          f"converged={rep.converged_count}/{len(rep.converged)}{rel}{tag}")


def cmd_solve(args) -> int:
    cfg = _config_from_args(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = run_experiment(cfg)
    _print_report(rep)
    emit_table([rep], out / f"{cfg.problem}_{cfg.scheme}_table.csv")
    emit_runs([rep], out / f"{cfg.problem}_{cfg.scheme}_runs.csv")
    emit_losses(rep.results[0], out / f"{cfg.problem}_{cfg.scheme}_losses.csv",
                n_steps=cfg.N)
    return 3 if rep.not_conv else 0


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for scheme in ("dbdp2", "deepbsde", "dadm", "dbdp1"):
        sub = ExperimentConfig(**{**cfg.__dict__, "scheme": scheme})
        rep = run_experiment(sub)
        _print_report(rep)
        reports.append(rep)
    emit_table(reports, out / f"{cfg.problem}_bench_table.csv")
    emit_runs(reports, out / f"{cfg.problem}_bench_runs.csv")
    return 3 if all(r.not_conv for r in reports) else 0


def cmd_slice(args) -> int:
    cfg = _config_from_args(args)
    if cfg.scheme not in ("dadm", "dbdp2"):
        print("slice requires a stack-producing scheme (dadm or dbdp2)",
              file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    single = ExperimentConfig(**{**cfg.__dict__, "runs": 1})
    rep = run_experiment(single, keep_stacks=True)
    _print_report(rep)
    stack = rep.stacks[0]
    path = out / f"{cfg.problem}_{cfg.scheme}_slice_i{args.step}.csv"
    emit_slice(stack, args.step, (args.x_lo, args.x_hi), args.n_points, path)
    print(f"wrote {path}")
    return 3 if rep.not_conv else 0


def _tiny_stack(problem, N, seed):
    grid = make_uniform_grid(N, problem.T)
    stack = TrainedStack(problem, grid, [
        nn.init_params(problem.d, 3, 1, nn.TANH, seed + 10 + j) for j in range(N)])
    return grid, stack


def run_verify(report_path=None) -> dict:
    """The fast validation suite: gradient oracles, the derivative bound and
    the PDE-residual gates. Returns {check_name: {passed, value}}."""
    results = {}
    d, m, M, N = 1, 3, 8, 3

    prob = bounded_example(d, T=1.0)
    grid, stack = _tiny_stack(prob, N, seed=7)
    rng = Rng(123)
    batch = simulate_paths(prob, grid, M, rng)

    def check(name, fn):
        candidate = nn.init_params(d, m, 1, nn.TANH, 99)
        rep = validation.finite_diff_check(fn, candidate)
        results[name] = {"passed": rep.passed(1e-5), "value": rep.max_rel_error}

    check("grad_dadm", lambda net: dadm_empirical_loss(1, net, stack, batch))
    check("grad_dbdp2", lambda net: dbdp2_empirical_loss(1, net, stack, batch))

    z_net = nn.init_params(d, m, d, nn.TANH, 77)
    def dbdp1_u(net):
        loss, gu, _ = dbdp1_empirical_loss(1, net, z_net, stack, batch)
        return loss, gu
    check("grad_dbdp1_u", dbdp1_u)

    u_fixed = nn.init_params(d, m, 1, nn.TANH, 88)
    def dbdp1_z(net):
        loss, _, gz = dbdp1_empirical_loss(1, u_fixed, net, stack, batch)
        return loss, gz
    candidate = nn.init_params(d, m, d, nn.TANH, 66)
    rep = validation.finite_diff_check(dbdp1_z, candidate)
    results["grad_dbdp1_z"] = {"passed": rep.passed(1e-5), "value": rep.max_rel_error}

    z_nets = [nn.init_params(d, m, d, nn.TANH, 40 + j) for j in range(N)]
    def dbsde_u0(net):
        loss, g, _ = deep_bsde_loss(net, z_nets, prob, grid, batch)
        return loss, g
    check("grad_deepbsde_u0", dbsde_u0)
    u0_fixed = nn.init_params(d, m, 1, nn.TANH, 55)
    def dbsde_z1(net):
        probe = list(z_nets)
        probe[1] = net
        loss, _, gz = deep_bsde_loss(u0_fixed, probe, prob, grid, batch)
        return loss, gz[1]
    rep = validation.finite_diff_check(dbsde_z1, z_nets[1].copy())
    results["grad_deepbsde_z"] = {"passed": rep.passed(1e-5), "value": rep.max_rel_error}

    # input-gradient bound on projected tanh nets
    constraint = WeightConstraint(2.0)
    worst_all = 0.0
    ok_all = True
    for k in range(20):
        net = nn.init_params(4, 12, 1, nn.TANH, 1000 + k)
        net.a *= 5.0
        net.c *= 5.0
        net = nn.project_weights(net, constraint)
        ok, worst = validation.derivative_bound_check(net, constraint,
                                                      n_probes=2000, seed=k)
        ok_all &= ok
        worst_all = max(worst_all, worst)
    results["derivative_bound"] = {"passed": ok_all, "value": worst_all}

    # PDE residual gates on the two benchmark problems
    gen = np.random.Generator(np.random.Philox(key=2024))
    for name, problem, d_ in (("pde_residual_bounded", bounded_example(1, T=2.0), 1),
                              ("pde_residual_unbounded", unbounded_example(2), 2)):
        worst = 0.0
        n_done = 0
        while n_done < 50:
            t = gen.uniform(0.05, problem.T - 0.05)
            x = gen.uniform(-1.5, 1.5, d_)
            if name.endswith("unbounded") and np.any(np.abs(x) < 1e-3):
                continue
            worst = max(worst, abs(pde_residual(problem, t, x, 1e-4).value))
            n_done += 1
        results[name] = {"passed": worst <= 1e-4, "value": worst}

    # conditional-expectation oracle closed-form agreement
    prob_cos = get_oracle_problem()
    grid20 = make_uniform_grid(20, 1.0)
    err = 0.0
    for x in (-0.5, 0.0, 0.8):
        got = validation.conditional_expectation_oracle(prob_cos, grid20, 0, x)
        err = max(err, abs(got - np.cos(x) * np.exp(-0.5)))
    results["gh_oracle_closed_form"] = {"passed": err <= 1e-10, "value": err}

    for name, res in results.items():
        status = "PASS" if res["passed"] else "FAIL"
        print(f"{status} {name}: {res['value']:.3e}")
    if report_path is not None:
        Path(report_path).write_text(json.dumps(results, indent=2))
    return results


def get_oracle_problem():
    """d=1, b=0, sigma=1, f=0, g=cos: the quadrature-checkable test problem."""
    from .problems import BsdeProblem
    return BsdeProblem(
        d=1, T=1.0, x0=np.array([0.0]),
        drift=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda t, x: np.eye(1),
        f=lambda t, x, y, z: np.zeros(np.shape(y)),
        g=lambda x: np.cos(np.sum(x, axis=-1)),
        grad_g=lambda x: -np.sin(np.sum(np.asarray(x, dtype=float), axis=-1))[..., None],
        df_dy=lambda t, x, y, z: np.zeros(np.shape(y)),
        df_dz=lambda t, x, y, z: np.zeros(np.shape(z)),
        name="cos_terminal")


def cmd_verify(args) -> int:
    out = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        out = Path(args.out) / "verify_summary.json"
    results = run_verify(out)
    return 0 if all(r["passed"] for r in results.values()) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dadm",
                                     description="BSDE solver benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one scheme, emit table/runs/losses CSVs")
    _add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run all schemes on one problem")
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_slice = sub.add_parser("slice", help="train one run, emit a plot-slice CSV")
    _add_common(p_slice)
    p_slice.add_argument("--step", type=int, default=0)
    p_slice.add_argument("--x-lo", dest="x_lo", type=float, default=-2.0)
    p_slice.add_argument("--x-hi", dest="x_hi", type=float, default=2.0)
    p_slice.add_argument("--n-points", dest="n_points", type=int, default=101)
    p_slice.set_defaults(func=cmd_slice)

    p_verify = sub.add_parser("verify", help="run the validation suite")
    p_verify.add_argument("--out")
    p_verify.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
