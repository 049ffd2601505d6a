"""Command-line front end: ``flockctl simulate|optimize|sparse|meanfield``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config
from .core import predict_consensus
from .integrator import integrate_forward
from .meanfield import MixtureConfig, run_study, velocity_marginal
from .ocp import bb_descent
from .sparse import NMPCConfig, PSOConfig, heat_map, nmpc_loop, sparsity_fraction

logger = logging.getLogger("flockctl")

SPARSITY_THRESHOLD = 1e-3


def cmd_simulate(cfg: RunConfig) -> int:
    state0 = cfg.initial_state()
    params = cfg.model_for(state0)
    traj = integrate_forward(state0, None, cfg.grid, params)
    io.write_trajectory(cfg.output_dir / "trajectory.csv", traj)
    io.write_functionals(cfg.output_dir / "functionals.csv", traj)
    print(f"verdict: {predict_consensus(state0, params).value}")
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    state0 = cfg.initial_state()
    params = cfg.model_for(state0)
    u0 = np.zeros((cfg.grid.N_T, state0.N, state0.d))
    res = bb_descent(state0, u0, params, cfg.cost, tol=cfg.ocp.tol, k_max=cfg.ocp.k_max,
                     u_max=cfg.ocp.u_max, norm=cfg.ocp.norm)
    out = cfg.output_dir
    io.write_control(out / "control.csv", res.u_opt, cfg.grid)
    io.write_trajectory(out / "trajectory.csv", res.traj)
    io.write_functionals(out / "functionals.csv", res.traj)
    io.write_history(out / "history.csv", res.cost_history, res.grad_norm_history)
    io.write_heatmap(out / "heatmap.csv", heat_map(res.u_opt).values)
    print(f"converged: {str(res.converged).lower()}  iterations: {res.iterations}  "
          f"cost: {res.cost_history[-1]:.6g}  grad_norm: {res.grad_norm_history[-1]:.3g}")
    return 0


def cmd_sparse(cfg: RunConfig) -> int:
    state0 = cfg.initial_state()
    params = cfg.model_for(state0)
    nmpc = cfg.nmpc or NMPCConfig(gamma=cfg.cost.gamma)
    pso = cfg.pso or PSOConfig(seed=cfg.seed)
    u, traj = nmpc_loop(state0, cfg.grid, params, nmpc, pso)
    hmap = heat_map(u)
    frac = sparsity_fraction(hmap, SPARSITY_THRESHOLD)
    out = cfg.output_dir
    io.write_control(out / "control.csv", u, cfg.grid)
    io.write_heatmap(out / "heatmap.csv", hmap.values)
    io.write_functionals(out / "functionals.csv", traj)
    (out / "sparsity.txt").write_text(io.fmt(frac) + "\n")
    print(f"r={nmpc.r} H={nmpc.H} sparsity: {frac:.4f}")
    return 0


def cmd_meanfield(cfg: RunConfig) -> int:
    mixture = cfg.mixture or MixtureConfig(seed=cfg.seed)
    if mixture.d != cfg.model.d:
        raise ConfigError(f"mixture dimension {mixture.d} != model.d {cfg.model.d}")
    study = cfg.study
    out = cfg.output_dir

    def write_marginals(N, state0, res):
        free = integrate_forward(state0, None, cfg.grid, replace(cfg.model, N=N))
        hf, hc = [], []
        for axis in range(state0.d):
            vals = np.concatenate([free.v[-1, :, axis], res.traj.v[-1, :, axis]])
            lo, hi = float(vals.min()), float(vals.max())
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
            hf.append(velocity_marginal(free, -1, axis, study.bins, (lo, hi)))
            hc.append(velocity_marginal(res.traj, -1, axis, study.bins, (lo, hi)))
        io.write_marginals(out / f"marginal_N{N}.csv", hf, hc)

    failures: dict = {}
    records = run_study(study.n_list, mixture, cfg.model, cfg.cost, study.tol, study.k_max, norm=study.norm,
                        callback=write_marginals, failures=failures)
    io.write_study(out / "study.csv", records)
    for r in records:
        print(f"N={r.N:5d}  J*={r.J_star:.5g}  iterations={r.iterations}  wall={r.wall_time:.2f}s")
    for N, msg in failures.items():
        print(f"N={N:5d}  failed: {msg}", file=sys.stderr)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "sparse": cmd_sparse,
    "meanfield": cmd_meanfield,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flockctl", description="Cucker-Smale consensus control")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--seed", type=int, help="master seed; overrides every seed in the config")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration value (repeatable)")
        if name == "meanfield":
            p.add_argument("--n-list", help="comma-separated agent counts, e.g. 50,100,200")
    return parser


def _overrides(args) -> dict:
    over = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        over[key.strip()] = value.strip()
    if args.out is not None:
        over["run.output_dir"] = str(args.out)
    if getattr(args, "n_list", None):
        over["study.n_list"] = args.n_list
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        over = _overrides(args)
        cfg = load_config(args.config, over)
        if args.seed is not None:
            # the flag wins over every seed the file sets
            seeded = dict(over)
            seeded["run.seed"] = str(args.seed)
            for sec in ("pso", "mixture"):
                if getattr(cfg, sec) is not None:
                    seeded[f"{sec}.seed"] = str(args.seed)
            if "seed" in cfg.initial.options:
                seeded["initial.seed"] = str(args.seed)
            cfg = load_config(args.config, seeded)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except (ConfigError, OSError) as exc:
        print(f"flockctl: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError) as exc:
        print(f"flockctl: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
