"""Primal-dual solvers over networks: restart schedule and fixed-step baselines.

`dhpd_run` implements the distributed method with its halving/doubling restart
schedule: every agent keeps lazy and projected primal-dual pairs, mixes lazy
primal iterates through the doubly stochastic matrix, takes a local dual step,
and at the end of each round restarts all iterates at the round's running
averages while the learning rate halves and the horizon doubles.
`spd_run_distributed` is the same inner loop with a fixed rate and no
restarts; `spd_run_centralized` is the single-primal baseline.

The inner loop runs in a compiled kernel when available, with a pure-numpy
fallback selected at import (`SADDLETD_PURE_PYTHON=1` forces the fallback).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._io import FLOAT_FMT, write_kv
from .chain import PolicyChain, sample_trajectory
from .features import FeatureMap
from .network import MixingMatrix
from .objective import SaddleModel, ProblemConstants

if os.environ.get("SADDLETD_PURE_PYTHON"):
    from . import _kernels_py as _impl

    KERNEL_BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        KERNEL_BACKEND = "python"


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the origin-centered ball: radial scaling."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    nrm = float(np.linalg.norm(v))
    if nrm <= radius:
        return v.copy()
    return v * (radius / nrm)


def running_average(accumulator: np.ndarray, count: int) -> np.ndarray:
    """Arithmetic mean of `count` accumulated iterates."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return np.asarray(accumulator, dtype=float) / count


@dataclass(frozen=True)
class DhpdConfig:
    """Restart schedule: rate eta1/2^(k-1) and horizon T1*2^(k-1) for K rounds."""

    eta1: float
    T1: int
    K: int
    seed: int

    def __post_init__(self):
        if self.eta1 <= 0:
            raise ValueError("eta1 must be positive")
        if self.T1 < 1 or self.K < 1:
            raise ValueError("T1 and K must be positive integers")

    def horizons(self) -> list[int]:
        return [self.T1 * 2 ** (k - 1) for k in range(1, self.K + 1)]

    def etas(self) -> list[float]:
        return [self.eta1 / 2 ** (k - 1) for k in range(1, self.K + 1)]

    @property
    def total_iterations(self) -> int:
        return (2 ** self.K - 1) * self.T1

    @property
    def total_samples(self) -> int:
        """Markov transitions consumed: each round uses horizon-1 of them."""
        return self.total_iterations - self.K


@dataclass(frozen=True)
class Checkpoint:
    """Running-average solution snapshot at a cumulative sample count."""

    samples: int
    round_index: int
    x_avg: np.ndarray  # (n_primal, d) per-agent running averages
    y_avg: np.ndarray  # (N, d)
    consensus_dev: float
    gaps: np.ndarray | None  # (N,) per-agent optimality gaps when an oracle ran


@dataclass(frozen=True)
class RoundResult:
    index: int
    eta: float
    horizon: int
    samples_end: int
    x_init: np.ndarray
    y_init: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    x_log: np.ndarray | None = None
    x_lazy_log: np.ndarray | None = None
    y_log: np.ndarray | None = None


@dataclass(frozen=True)
class RunTrace:
    """Everything a run produced: per-round outputs and checkpoint gap curve."""

    algorithm: str
    seed: int
    params: dict
    n_agents: int
    checkpoints: list
    rounds: list
    total_samples: int
    x_final: np.ndarray
    y_final: np.ndarray
    backend: str = KERNEL_BACKEND

    def sample_grid(self) -> np.ndarray:
        return np.array([c.samples for c in self.checkpoints], dtype=np.int64)

    def mean_gaps(self) -> np.ndarray:
        return np.array([float(np.mean(c.gaps)) for c in self.checkpoints])


def checkpoint_marks(total_samples: int, growth: float) -> list[int]:
    """Geometric grid of cumulative sample counts (strictly increasing ints)."""
    if growth <= 0:
        raise ValueError("growth must be positive")
    marks = []
    m = 1
    while m <= total_samples:
        marks.append(m)
        m = max(m + 1, math.ceil(m * (1.0 + growth)))
    return marks


def _round_counts(marks, consumed: int, horizon: int) -> np.ndarray:
    """Map global sample marks into this round's iterate counts; force the end."""
    counts = {horizon}
    for m in marks:
        if consumed < m <= consumed + horizon - 1:
            counts.add(m - consumed + 1)
    return np.array(sorted(counts), dtype=np.int64)


def _consensus_dev(x_cur: np.ndarray) -> float:
    center = x_cur.mean(axis=0)
    return float(np.linalg.norm(x_cur - center[None, :], axis=1).max())


def _validate_shapes(model: SaddleModel, chain: PolicyChain, features: FeatureMap,
                     mixing: MixingMatrix | None) -> None:
    if features.n_states != chain.n_states:
        raise ValueError("feature map and chain disagree on the number of states")
    if features.d != model.d:
        raise ValueError("feature dimension and model dimension disagree")
    if chain.n_agents != model.n_agents:
        raise ValueError("chain and model disagree on the number of agents")
    if mixing is not None and mixing.n_nodes != model.n_agents:
        raise ValueError(
            f"mixing matrix is {mixing.n_nodes}-node but the model has {model.n_agents} agents"
        )


def _trajectory_arrays(chain: PolicyChain, n: int, seed: int, initial_state: int):
    if n == 0:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                np.empty((0, chain.n_agents)))
    traj = sample_trajectory(chain, n, seed, initial_state=initial_state)
    return traj.s, traj.s_next, traj.rewards


def dhpd_run(model: SaddleModel, chain: PolicyChain, features: FeatureMap,
             mixing: MixingMatrix, cfg: DhpdConfig, gap_oracle=None,
             checkpoint_growth: float = 0.1, log_iterates: bool = False,
             initial_state: int = 0,
             problem_constants: ProblemConstants | None = None,
             mixing_tau: int | None = None) -> RunTrace:
    """Run the distributed restart-schedule solver; deterministic given the seed.

    One shared Markov sample per inner iteration drives all agents; the sample
    stream continues across rounds while the iterates restart at the running
    averages. `gap_oracle`, when given, maps an (M, d) block of solution
    candidates to M optimality gaps and is evaluated on a geometric checkpoint
    grid plus every round end. `problem_constants` / `mixing_tau` enable the
    step-size and horizon hypothesis warnings.
    """
    _validate_shapes(model, chain, features, mixing)
    if problem_constants is not None:
        threshold = 1.0 / (4.0 / problem_constants.rho_y + 2.0 / problem_constants.rho_x)
        if cfg.eta1 < threshold:
            warnings.warn(
                f"eta1 = {cfg.eta1:.3g} is below the schedule hypothesis "
                f"1/(4/rho_y + 2/rho_x) = {threshold:.3g}",
                stacklevel=2,
            )
    if mixing_tau is not None and cfg.T1 < mixing_tau:
        warnings.warn(
            f"T1 = {cfg.T1} is below the mixing time tau = {mixing_tau}",
            stacklevel=2,
        )
    N, d = model.n_agents, model.d
    total_updates = cfg.total_samples
    s_all, snext_all, rew_all = _trajectory_arrays(chain, total_updates, cfg.seed, initial_state)
    marks = checkpoint_marks(total_updates, checkpoint_growth)

    x_lazy = np.zeros((N, d))
    x_proj = np.zeros((N, d))
    y_lazy = np.zeros((N, d))
    y_proj = np.zeros((N, d))
    checkpoints: list[Checkpoint] = []
    rounds: list[RoundResult] = []
    consumed = 0
    eta_k = cfg.eta1
    T_k = cfg.T1
    for k in range(1, cfg.K + 1):
        n_upd = T_k - 1
        counts = _round_counts(marks, consumed, T_k)
        x_init, y_init = x_proj.copy(), y_proj.copy()
        sl = slice(consumed, consumed + n_upd)
        x_avg, y_avg, x_cur, x_hat, y_hat, logs = _impl.dist_round(
            mixing.W, features.Phi, model.gamma, eta_k, model.r_x, model.r_y,
            s_all[sl], snext_all[sl], rew_all[sl],
            x_lazy, x_proj, y_lazy, y_proj, counts, log_iterates,
        )
        for i, c in enumerate(counts):
            gaps = None if gap_oracle is None else np.asarray(gap_oracle(x_avg[i]))
            checkpoints.append(Checkpoint(
                samples=consumed + int(c) - 1, round_index=k,
                x_avg=x_avg[i], y_avg=y_avg[i],
                consensus_dev=_consensus_dev(x_cur[i]), gaps=gaps,
            ))
        consumed += n_upd
        rounds.append(RoundResult(
            index=k, eta=eta_k, horizon=T_k, samples_end=consumed,
            x_init=x_init, y_init=y_init, x_hat=x_hat, y_hat=y_hat,
            x_log=logs[0] if logs else None,
            x_lazy_log=logs[1] if logs else None,
            y_log=logs[2] if logs else None,
        ))
        # restart: projected and lazy iterates jump to the round averages
        x_proj[:] = x_hat
        x_lazy[:] = x_hat
        y_proj[:] = y_hat
        y_lazy[:] = y_hat
        eta_k = eta_k / 2.0
        T_k = 2 * T_k
    return RunTrace(
        algorithm="dhpd", seed=cfg.seed,
        params={"eta1": cfg.eta1, "T1": cfg.T1, "K": cfg.K},
        n_agents=N, checkpoints=checkpoints, rounds=rounds,
        total_samples=consumed, x_final=rounds[-1].x_hat, y_final=rounds[-1].y_hat,
    )


def spd_run_distributed(model: SaddleModel, chain: PolicyChain, features: FeatureMap,
                        mixing: MixingMatrix, eta: float, T: int, seed: int,
                        gap_oracle=None, checkpoint_growth: float = 0.1,
                        log_iterates: bool = False, initial_state: int = 0) -> RunTrace:
    """Fixed-step distributed baseline: one dhpd round, no restarts."""
    if eta <= 0 or T < 1:
        raise ValueError("need eta > 0 and T >= 1")
    _validate_shapes(model, chain, features, mixing)
    N, d = model.n_agents, model.d
    n_upd = T - 1
    s_all, snext_all, rew_all = _trajectory_arrays(chain, n_upd, seed, initial_state)
    marks = checkpoint_marks(n_upd, checkpoint_growth)
    counts = _round_counts(marks, 0, T)
    x_lazy = np.zeros((N, d))
    x_proj = np.zeros((N, d))
    y_lazy = np.zeros((N, d))
    y_proj = np.zeros((N, d))
    x_init, y_init = x_proj.copy(), y_proj.copy()
    x_avg, y_avg, x_cur, x_hat, y_hat, logs = _impl.dist_round(
        mixing.W, features.Phi, model.gamma, eta, model.r_x, model.r_y,
        s_all, snext_all, rew_all, x_lazy, x_proj, y_lazy, y_proj,
        counts, log_iterates,
    )
    checkpoints = []
    for i, c in enumerate(counts):
        gaps = None if gap_oracle is None else np.asarray(gap_oracle(x_avg[i]))
        checkpoints.append(Checkpoint(
            samples=int(c) - 1, round_index=1,
            x_avg=x_avg[i], y_avg=y_avg[i],
            consensus_dev=_consensus_dev(x_cur[i]), gaps=gaps,
        ))
    rounds = [RoundResult(
        index=1, eta=eta, horizon=T, samples_end=n_upd,
        x_init=x_init, y_init=y_init, x_hat=x_hat, y_hat=y_hat,
        x_log=logs[0] if logs else None,
        x_lazy_log=logs[1] if logs else None,
        y_log=logs[2] if logs else None,
    )]
    return RunTrace(
        algorithm="spd_dist", seed=seed, params={"eta": eta, "T": T},
        n_agents=N, checkpoints=checkpoints, rounds=rounds,
        total_samples=n_upd, x_final=x_hat, y_final=y_hat,
    )


def spd_run_centralized(model: SaddleModel, chain: PolicyChain, features: FeatureMap,
                        eta: float, T: int, seed: int, gap_oracle=None,
                        checkpoint_growth: float = 0.1, log_iterates: bool = False,
                        initial_state: int = 0) -> RunTrace:
    """Centralized baseline: a single primal vector and N stacked duals."""
    if eta <= 0 or T < 1:
        raise ValueError("need eta > 0 and T >= 1")
    _validate_shapes(model, chain, features, None)
    N, d = model.n_agents, model.d
    n_upd = T - 1
    s_all, snext_all, rew_all = _trajectory_arrays(chain, n_upd, seed, initial_state)
    marks = checkpoint_marks(n_upd, checkpoint_growth)
    counts = _round_counts(marks, 0, T)
    x_lazy = np.zeros(d)
    x_proj = np.zeros(d)
    y_lazy = np.zeros((N, d))
    y_proj = np.zeros((N, d))
    x_init, y_init = x_proj.copy(), y_proj.copy()
    x_avg, y_avg, x_cur, x_hat, y_hat, logs = _impl.central_round(
        features.Phi, model.gamma, eta, model.r_x, model.r_y,
        s_all, snext_all, rew_all, x_lazy, x_proj, y_lazy, y_proj,
        counts, log_iterates,
    )
    checkpoints = []
    for i, c in enumerate(counts):
        if gap_oracle is None:
            gaps = None
        else:
            gap = float(np.asarray(gap_oracle(x_avg[i][None, :]))[0])
            gaps = np.full(N, gap)
        checkpoints.append(Checkpoint(
            samples=int(c) - 1, round_index=1,
            x_avg=x_avg[i][None, :], y_avg=y_avg[i],
            consensus_dev=0.0, gaps=gaps,
        ))
    rounds = [RoundResult(
        index=1, eta=eta, horizon=T, samples_end=n_upd,
        x_init=x_init[None, :], y_init=y_init, x_hat=x_hat[None, :], y_hat=y_hat,
        x_log=logs[0] if logs else None,
        x_lazy_log=logs[1] if logs else None,
        y_log=logs[2] if logs else None,
    )]
    return RunTrace(
        algorithm="spd_central", seed=seed, params={"eta": eta, "T": T},
        n_agents=N, checkpoints=checkpoints, rounds=rounds,
        total_samples=n_upd, x_final=x_hat[None, :], y_final=y_hat,
    )


# -- persistence ----------------------------------------------------------

def save_trace_csv(trace: RunTrace, path) -> None:
    """`samples,agent,gap` rows, one per checkpoint per agent."""
    with open(path, "w", newline="\n") as fh:
        fh.write("samples,agent,gap\n")
        for c in trace.checkpoints:
            gaps = c.gaps if c.gaps is not None else [float("nan")] * trace.n_agents
            for j in range(trace.n_agents):
                fh.write(f"{c.samples},{j},{FLOAT_FMT % gaps[j]}\n")


def save_trace_meta(trace: RunTrace, path, extra: dict | None = None) -> None:
    meta = {"algorithm": trace.algorithm, "seed": trace.seed}
    meta.update(trace.params)
    meta["total_samples"] = trace.total_samples
    meta["n_agents"] = trace.n_agents
    if extra:
        meta.update(extra)
    write_kv(path, meta)


def load_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back (samples, mean_gap_over_agents) from a trace CSV."""
    samples: dict[int, list[float]] = {}
    order: list[int] = []
    with open(path, "r") as fh:
        fh.readline()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            s_str, _, gap_str = line.split(",")
            s = int(s_str)
            if s not in samples:
                samples[s] = []
                order.append(s)
            samples[s].append(float(gap_str))
    xs = np.array(order, dtype=np.int64)
    ys = np.array([np.mean(samples[s]) for s in order])
    return xs, ys
