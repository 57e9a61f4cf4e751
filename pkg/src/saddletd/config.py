"""Experiment configuration: flat `section.key = value` text.

The format is line-oriented with four sections (problem, topology, solver,
output); unknown keys are rejected with their line number and a parsed
config echoes back canonically, so generate -> echo -> parse round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TOPOLOGY_KINDS = ("ring", "complete", "erdos_renyi")
ALGORITHMS = ("dhpd", "spd_central", "spd_dist")
FEATURE_KINDS = ("tabular", "random")


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass
class ProblemConfig:
    n_states: int = 50
    n_agents: int = 10
    d: int = 8
    gamma: float = 0.95
    branching: int = 5
    features: str = "random"
    seed: int = 1


@dataclass
class TopologyConfig:
    kind: str = "erdos_renyi"
    p: float = 0.3


@dataclass
class SolverConfig:
    algorithm: str = "dhpd"
    eta1: float | None = 0.1
    T1: int | str | None = "auto"
    K: int | None = 7
    eta: float | None = None
    T: int | None = None
    seed: int = 1


@dataclass
class OutputConfig:
    directory: str = "out"
    checkpoint_density: float = 0.1


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def _parse_int(v: str) -> int:
    return int(v)


def _parse_float(v: str) -> float:
    return float(v)


def _parse_t1(v: str):
    return "auto" if v == "auto" else int(v)


def _parse_choice(options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v

    return parse


_SCHEMA = {
    "problem.n_states": _parse_int,
    "problem.n_agents": _parse_int,
    "problem.d": _parse_int,
    "problem.gamma": _parse_float,
    "problem.branching": _parse_int,
    "problem.features": _parse_choice(FEATURE_KINDS),
    "problem.seed": _parse_int,
    "topology.kind": _parse_choice(TOPOLOGY_KINDS),
    "topology.p": _parse_float,
    "solver.algorithm": _parse_choice(ALGORITHMS),
    "solver.eta1": _parse_float,
    "solver.T1": _parse_t1,
    "solver.K": _parse_int,
    "solver.eta": _parse_float,
    "solver.T": _parse_int,
    "solver.seed": _parse_int,
    "output.directory": str,
    "output.checkpoint_density": _parse_float,
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; rejects unknown keys with their line number."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep:
            raise ConfigError(f"line {lineno}: expected `section.key = value`, got {raw!r}")
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    cfg = ExperimentConfig()
    # solver fields not mentioned stay unset rather than inheriting defaults
    if "solver.algorithm" in values:
        cfg.solver = SolverConfig(algorithm=str(values["solver.algorithm"]),
                                  eta1=None, T1=None, K=None, eta=None, T=None)
    for key, value in values.items():
        section, _, name = key.partition(".")
        setattr(getattr(cfg, section), name, value)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    p = cfg.problem
    if p.n_states < 1 or p.n_agents < 1 or p.d < 1:
        raise ConfigError("problem sizes must be positive")
    if not (0.0 < p.gamma < 1.0):
        raise ConfigError("problem.gamma must be in (0,1)")
    if not (1 <= p.branching <= p.n_states):
        raise ConfigError("problem.branching must be in [1, n_states]")
    if p.features == "tabular" and p.d != p.n_states:
        raise ConfigError("tabular features require problem.d == problem.n_states")
    if p.features == "random" and p.d > p.n_states:
        raise ConfigError("random features require problem.d <= problem.n_states")
    t = cfg.topology
    if t.kind == "erdos_renyi" and not (0.0 < t.p <= 1.0):
        raise ConfigError("topology.p must be in (0,1] for erdos_renyi")
    s = cfg.solver
    if s.algorithm == "dhpd":
        if s.eta is not None or s.T is not None:
            raise ConfigError("dhpd takes solver.eta1/T1/K, not solver.eta/T")
        if s.eta1 is None or s.T1 is None or s.K is None:
            raise ConfigError("dhpd needs solver.eta1, solver.T1 and solver.K")
        if s.eta1 <= 0 or s.K < 1:
            raise ConfigError("need solver.eta1 > 0 and solver.K >= 1")
        if s.T1 != "auto" and int(s.T1) < 1:
            raise ConfigError("solver.T1 must be a positive integer or `auto`")
    else:
        if s.eta1 is not None or s.T1 is not None or s.K is not None:
            raise ConfigError(f"{s.algorithm} takes solver.eta/T, not solver.eta1/T1/K")
        if s.eta is None or s.T is None:
            raise ConfigError(f"{s.algorithm} needs solver.eta and solver.T")
        if s.eta <= 0 or s.T < 1:
            raise ConfigError("need solver.eta > 0 and solver.T >= 1")
    if cfg.output.checkpoint_density <= 0:
        raise ConfigError("output.checkpoint_density must be positive")


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(format_config(cfg)) reproduces cfg."""
    validate_config(cfg)
    lines = []
    p = cfg.problem
    for name in ("n_states", "n_agents", "d", "gamma", "branching", "features", "seed"):
        lines.append(f"problem.{name} = {_fmt(getattr(p, name))}")
    lines.append(f"topology.kind = {cfg.topology.kind}")
    if cfg.topology.kind == "erdos_renyi":
        lines.append(f"topology.p = {_fmt(cfg.topology.p)}")
    s = cfg.solver
    lines.append(f"solver.algorithm = {s.algorithm}")
    if s.algorithm == "dhpd":
        lines.append(f"solver.eta1 = {_fmt(s.eta1)}")
        lines.append(f"solver.T1 = {_fmt(s.T1)}")
        lines.append(f"solver.K = {_fmt(s.K)}")
    else:
        lines.append(f"solver.eta = {_fmt(s.eta)}")
        lines.append(f"solver.T = {_fmt(s.T)}")
    lines.append(f"solver.seed = {_fmt(s.seed)}")
    lines.append(f"output.directory = {cfg.output.directory}")
    lines.append(f"output.checkpoint_density = {_fmt(cfg.output.checkpoint_density)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_config(cfg))


def reference_config(seed: int = 1, directory: str = "out") -> ExperimentConfig:
    """The in-repo desk-scale reference problem and solver settings."""
    cfg = ExperimentConfig()
    cfg.problem = ProblemConfig(n_states=50, n_agents=10, d=8, gamma=0.95,
                                branching=5, features="random", seed=seed)
    cfg.topology = TopologyConfig(kind="erdos_renyi", p=0.3)
    cfg.solver = SolverConfig(algorithm="dhpd", eta1=0.1, T1="auto", K=7, seed=seed)
    cfg.output = OutputConfig(directory=directory, checkpoint_density=0.1)
    return cfg
