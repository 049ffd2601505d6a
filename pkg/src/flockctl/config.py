"""Run configuration: an INI file with one section per parameter group.

Example::

    [run]
    seed = 7
    output_dir = out

    [model]
    K = 1
    beta = 1
    d = 2

    [grid]
    T = 10
    dt = 0.1

    [cost]
    gamma = 1

    [initial]
    source = groups      ; groups | dispersed | consensus | mixture | file
    N = 20

Unset keys take the defaults below. Every seed not given explicitly
inherits ``run.seed``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .core import ModelParams, SwarmState, TimeGrid
from .meanfield import MixtureConfig, sample_initial
from .ocp import CostParams
from .sparse import NMPCConfig, PSOConfig

SECTIONS = ("run", "model", "grid", "cost", "ocp", "initial", "nmpc", "pso", "mixture", "study")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OCPSettings:
    tol: float = 1e-3
    k_max: int = 500
    norm: str = "l2"
    u_max: float | None = None


@dataclass(frozen=True)
class InitialSpec:
    source: str = "groups"
    N: int = 20
    path: str | None = None
    options: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class StudySettings:
    n_list: tuple[int, ...] = (50, 100, 200, 400)
    tol: float = 1e-2
    k_max: int = 200
    bins: int = 50
    norm: str = "meanfield"


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    grid: TimeGrid
    cost: CostParams
    ocp: OCPSettings
    initial: InitialSpec
    nmpc: NMPCConfig | None
    pso: PSOConfig | None
    mixture: MixtureConfig | None
    study: StudySettings
    seed: int
    output_dir: Path

    def initial_state(self) -> SwarmState:
        from . import initial, io

        spec = self.initial
        d = self.model.d
        opts = dict(spec.options)
        seed = int(opts.pop("seed", self.seed))
        if spec.source == "file":
            if not spec.path:
                raise ConfigError("initial.source = file requires initial.path")
            state = io.read_state(spec.path)
        elif spec.source == "groups":
            state = initial.counter_moving_groups(spec.N, d, seed, **opts)
        elif spec.source == "dispersed":
            state = initial.dispersed(spec.N, d, seed, **opts)
        elif spec.source == "consensus":
            state = initial.in_consensus(spec.N, d, seed, **opts)
        elif spec.source == "mixture":
            mix = self.mixture or MixtureConfig(seed=self.seed)
            state = sample_initial(spec.N, mix)
        else:
            raise ConfigError(f"unknown initial.source {spec.source!r}")
        if state.d != d:
            raise ConfigError(f"initial state has dimension {state.d}, model.d = {d}")
        return state

    def model_for(self, state: SwarmState) -> ModelParams:
        return ModelParams(self.model.K, self.model.beta, state.N, state.d)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> RunConfig:
    """Parse ``path`` (optional) and apply ``section.key -> value`` overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep K vs k distinct
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
    for key, value in (overrides or {}).items():
        sec, _, opt = key.partition(".")
        if sec not in SECTIONS or not opt:
            raise ConfigError(f"override {key!r} must look like section.key with section in {SECTIONS}")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, opt, str(value))
    try:
        return _build(cp)
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _build(cp: configparser.ConfigParser) -> RunConfig:
    def sec(name):
        return cp[name] if cp.has_section(name) else {}

    def take(name, allowed):
        s = dict(sec(name))
        unknown = set(s) - set(allowed)
        if unknown:
            raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")
        return s

    run = take("run", {"seed", "output_dir"})
    seed = int(run.get("seed", 0))
    output_dir = Path(run.get("output_dir", "out"))

    m = take("model", {"K", "beta", "d", "N"})
    g = take("grid", {"T", "dt"})
    c = take("cost", {"gamma"})
    grid = TimeGrid(float(g.get("T", 10.0)), float(g.get("dt", 0.1)))
    cost = CostParams(float(c.get("gamma", 1.0)), grid)

    o = take("ocp", {"tol", "k_max", "norm", "u_max"})
    ocp = OCPSettings(float(o.get("tol", 1e-3)), int(o.get("k_max", 500)), o.get("norm", "l2"),
                      float(o["u_max"]) if "u_max" in o else None)

    ini = dict(sec("initial"))
    source = ini.pop("source", "groups")
    N = int(ini.pop("N", m.get("N", 20)))
    ipath = ini.pop("path", None)
    options = {k: (_floats(v) if k == "velocity" else float(v)) for k, v in ini.items()}
    initial = InitialSpec(source, N, ipath, options)
    model = ModelParams(float(m.get("K", 1.0)), float(m.get("beta", 1.0)), N, int(m.get("d", 2)))

    nmpc = pso = mixture = None
    if cp.has_section("nmpc"):
        n = take("nmpc", {"H", "r", "gamma"})
        nmpc = NMPCConfig(int(n.get("H", 3)), int(n.get("r", 1)), float(n.get("gamma", cost.gamma)))
    if cp.has_section("pso"):
        p = take("pso", {"swarm_size", "c1", "c2", "inertia", "max_iters", "init_spread", "seed"})
        pso = PSOConfig(int(p.get("swarm_size", 40)), float(p.get("c1", 1.49)), float(p.get("c2", 1.49)),
                        float(p.get("inertia", 0.72)), int(p.get("max_iters", 100)),
                        float(p.get("init_spread", 0.5)), int(p.get("seed", seed)))
    if cp.has_section("mixture"):
        x = take("mixture", {"mu1", "mu2", "sigma1", "sigma2", "weight", "seed"})
        mixture = MixtureConfig(_floats(x.get("mu1", "-1,-1")), _floats(x.get("mu2", "1,1")),
                                float(x.get("sigma1", 0.3)), float(x.get("sigma2", 0.3)),
                                float(x.get("weight", 0.5)), int(x.get("seed", seed)))

    s = take("study", {"n_list", "tol", "k_max", "bins", "norm"})
    study = StudySettings(_ints(s["n_list"]) if "n_list" in s else StudySettings.n_list,
                          float(s.get("tol", 1e-2)), int(s.get("k_max", 200)), int(s.get("bins", 50)),
                          s.get("norm", "meanfield"))

    return RunConfig(model, grid, cost, ocp, initial, nmpc, pso, mixture, study, seed, output_dir)
