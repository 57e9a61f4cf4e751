"""Fixed-policy multi-agent environments as ergodic Markov chains.

A :class:`PolicyChain` stores the policy-induced transition matrix, the
per-agent expected rewards and the discount factor, i.e. everything policy
evaluation consumes. The module also provides the stationary distribution,
seeded Markovian trajectory sampling, total-variation diagnostics and a
geometric-decay envelope fit (Gamma, rho) for the chain's mixing behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-10
TV_FLOOR = 1e-12
INSTANT_MIX_RHO = 1e-6


class NonErgodicChainError(ValueError):
    """Raised when a transition matrix is not irreducible and aperiodic."""


@dataclass(frozen=True)
class SampleTransition:
    """One observed transition: joint state, successor and realized local rewards."""

    s: int
    s_next: int
    local_rewards: np.ndarray


@dataclass(frozen=True)
class MixingEstimate:
    """Envelope d_tv(t) <= Gamma * rho**t fitted to a chain's measured tv decay."""

    Gamma: float
    rho: float

    def __post_init__(self):
        if not (self.Gamma >= 1.0):
            raise ValueError(f"Gamma must be >= 1, got {self.Gamma}")
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must be in (0,1), got {self.rho}")


def _is_primitive(P: np.ndarray) -> bool:
    """Wielandt primitivity test on the boolean adjacency of positive entries.

    P^m strictly positive for some m <= (n-1)^2 + 1 iff the chain is
    irreducible and aperiodic. Row-stochastic matrices have no zero row, so
    once a boolean power is all-True it stays all-True under further squaring.
    """
    n = P.shape[0]
    if n == 1:
        return True
    reach = P > 0.0
    cap = (n - 1) * (n - 1) + 1
    power = 1
    while power < cap:
        if reach.all():
            return True
        reach = reach @ reach
        power *= 2
    return bool(reach.all())


@dataclass(frozen=True)
class PolicyChain:
    """Markov chain induced by a fixed policy, with per-agent expected rewards.

    P is row stochastic over n_states; rewards has one row per agent with the
    expected local reward in each state; gamma is the discount factor.
    Immutable after construction and safe to share across threads.
    """

    P: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.ascontiguousarray(np.asarray(self.P, dtype=float))
        rewards = np.ascontiguousarray(np.atleast_2d(np.asarray(self.rewards, dtype=float)))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "rewards", rewards)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"P must be square, got shape {P.shape}")
        n = P.shape[0]
        if rewards.shape[1] != n:
            raise ValueError(
                f"rewards must have one column per state: {rewards.shape} vs {n} states"
            )
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if P.min() < 0.0:
            raise ValueError("P has negative entries")
        row_err = np.abs(P.sum(axis=1) - 1.0).max()
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"P rows must sum to 1 within {ROW_SUM_TOL}, max error {row_err:.3e}")
        if not _is_primitive(P):
            raise NonErgodicChainError("transition matrix is not irreducible and aperiodic")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_agents(self) -> int:
        return self.rewards.shape[0]

    def global_rewards(self) -> np.ndarray:
        """Average of the local expected rewards, one entry per state."""
        return self.rewards.mean(axis=0)


@dataclass(frozen=True)
class Trajectory:
    """Columnar transition dataset; behaves as a sequence of SampleTransition."""

    s: np.ndarray
    s_next: np.ndarray
    rewards: np.ndarray  # shape (len, n_agents)

    def __post_init__(self):
        object.__setattr__(self, "s", np.ascontiguousarray(self.s, dtype=np.int64))
        object.__setattr__(self, "s_next", np.ascontiguousarray(self.s_next, dtype=np.int64))
        object.__setattr__(self, "rewards", np.ascontiguousarray(self.rewards, dtype=float))
        if not (len(self.s) == len(self.s_next) == self.rewards.shape[0]):
            raise ValueError("trajectory arrays must have equal length")

    @property
    def n_agents(self) -> int:
        return self.rewards.shape[1]

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, i) -> SampleTransition:
        if isinstance(i, slice):
            return Trajectory(self.s[i], self.s_next[i], self.rewards[i])
        return SampleTransition(int(self.s[i]), int(self.s_next[i]), self.rewards[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def stationary_distribution(chain: PolicyChain, tol: float = 1e-15,
                            max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution Pi of an ergodic chain.

    For chains with at most 500 states the linear system (P^T - I, sum = 1)
    is solved directly, which leaves Pi accurate to machine precision (power
    iteration stops at tol/(1 - lambda_2), which is too coarse for the
    tv-decay diagnostics). Larger chains use power iteration to `tol` with an
    iteration cap. The result satisfies ||Pi^T P - Pi^T||_1 <= 1e-10.
    """
    P = chain.P
    n = chain.n_states
    pi = None
    if n <= 500:
        M = P.T - np.eye(n)
        M[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        try:
            pi = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            pi = None
    if pi is None or np.abs(pi @ P - pi).sum() > STATIONARY_RESIDUAL_TOL:
        pi = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            nxt = pi @ P
            if np.abs(nxt - pi).sum() < tol:
                pi = nxt
                break
            pi = nxt
    pi = np.maximum(pi, 0.0)
    pi = pi / pi.sum()
    residual = np.abs(pi @ P - pi).sum()
    if residual > STATIONARY_RESIDUAL_TOL:
        raise NonErgodicChainError(
            f"stationary solve did not converge (residual {residual:.3e}); chain looks non-ergodic"
        )
    return pi


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance sum_i |p_i - q_i| (twice the sup-deviation)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} does not sum to 1 (sum={v.sum()!r})")
    return float(np.abs(p - q).sum())


def sample_trajectory(chain: PolicyChain, length: int, seed: int,
                      reward_noise: float | None = None,
                      initial_state: int = 0) -> Trajectory:
    """Sample a Markovian trajectory of `length` transitions.

    States follow chain.P starting from `initial_state`. Realized local
    rewards are rewards[j][s] plus, when `reward_noise` is a positive
    amplitude a, independent uniform(-a, a) noise (zero mean, bounded).
    Deterministic given the seed; the state path does not depend on whether
    noise is requested.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if not (0 <= initial_state < chain.n_states):
        raise ValueError(f"initial_state {initial_state} out of range")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(chain.P, axis=1)
    cum[:, -1] = 1.0  # guard rounding at the top end
    us = rng.random(length)
    states = np.empty(length + 1, dtype=np.int64)
    states[0] = initial_state
    s = initial_state
    for t in range(length):
        s = int(np.searchsorted(cum[s], us[t], side="right"))
        states[t + 1] = s
    s_idx = states[:-1]
    rewards = chain.rewards.T[s_idx].copy()
    if reward_noise:
        rewards += rng.uniform(-reward_noise, reward_noise, size=rewards.shape)
    return Trajectory(s_idx, states[1:], rewards)


def stationary_dataset(chain: PolicyChain, length: int, seed: int,
                       reward_noise: float | None = None,
                       chunk: int = 100_000) -> Trajectory:
    """Draw `length` independent transitions with s ~ Pi and s' ~ P(s, .).

    Unlike :func:`sample_trajectory` the rows are iid from the stationary law,
    which is what population expectations average over; Monte-Carlo oracle
    tests use this so that standard errors are the iid ones.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    pi = stationary_distribution(chain)
    cum_pi = np.cumsum(pi)
    cum_pi[-1] = 1.0
    cum = np.cumsum(chain.P, axis=1)
    cum[:, -1] = 1.0
    s_parts, nxt_parts = [], []
    done = 0
    while done < length:
        m = min(chunk, length - done)
        s = np.searchsorted(cum_pi, rng.random(m), side="right")
        u = rng.random(m)
        nxt = (cum[s] < u[:, None]).sum(axis=1)
        s_parts.append(s)
        nxt_parts.append(nxt)
        done += m
    s_idx = np.concatenate(s_parts)
    nxt_idx = np.concatenate(nxt_parts)
    rewards = chain.rewards.T[s_idx].copy()
    if reward_noise:
        rewards += rng.uniform(-reward_noise, reward_noise, size=rewards.shape)
    return Trajectory(s_idx, nxt_idx, rewards)


def tv_decay_curve(chain: PolicyChain, t_max: int = 20_000,
                   floor: float = TV_FLOOR) -> np.ndarray:
    """Worst-case-over-start-states tv distance to Pi for t = 1, 2, ...

    Stops before recording values below `floor` and truncates once the curve
    stalls below 1e-9 (the matrix-power noise plateau), so every returned
    point reflects genuine decay.
    """
    pi = stationary_distribution(chain)
    Pt = chain.P.copy()
    out: list[float] = []
    for _ in range(t_max):
        d = float(np.abs(Pt - pi[None, :]).sum(axis=1).max())
        if d < floor:
            break
        if len(out) >= 25 and d < 1e-9 and d > 0.5 * out[-25]:
            break
        out.append(d)
        Pt = Pt @ chain.P
    return np.asarray(out)


def estimate_mixing(chain: PolicyChain, t_max: int = 20_000) -> MixingEstimate:
    """Fit the smallest geometric envelope d_tv(t) <= Gamma * rho**t.

    rho comes from a log-linear regression of the measured worst-case decay,
    clamped from below by |lambda_2(P)| (the asymptotic rate for
    diagonalizable chains) so the envelope stays valid past the measured
    window; Gamma then makes the envelope dominate every measured point.
    Chains that mix to the floor immediately get (Gamma, rho) = (1, 1e-6).
    """
    curve = tv_decay_curve(chain, t_max=t_max)
    ts = np.arange(1, len(curve) + 1)
    live = curve > TV_FLOOR
    if not live.any():
        return MixingEstimate(Gamma=1.0, rho=INSTANT_MIX_RHO)
    if live.all() and len(curve) >= 3 and curve[-1] > 0.5 * curve[0]:
        raise NonErgodicChainError("tv distance does not decay; cannot fit a mixing envelope")
    eigs = np.abs(np.linalg.eigvals(chain.P))
    eigs.sort()
    lam2 = eigs[-2] if len(eigs) >= 2 else 0.0
    t_live = ts[live]
    log_d = np.log(curve[live])
    if len(t_live) >= 2:
        slope = np.polyfit(t_live, log_d, 1)[0]
        rho_fit = math.exp(min(slope, -1e-12))
    else:
        rho_fit = float(curve[live][0])
    rho = min(max(rho_fit, lam2, INSTANT_MIX_RHO), 1.0 - 1e-9)
    gamma_env = max(1.0, float(np.max(curve[live] / rho ** t_live)))
    return MixingEstimate(Gamma=gamma_env, rho=rho)


def random_ergodic_chain(n_states: int, n_agents: int, branching: int,
                         seed: int, gamma: float = 0.95,
                         self_loop: float = 0.05) -> PolicyChain:
    """Generate a random ergodic chain with proportionally split local rewards.

    Each row puts Dirichlet-uniform mass on `branching` support states (the
    cyclic successor is always included, which makes the chain irreducible)
    and reserves `self_loop` mass on the diagonal for aperiodicity. Local
    rewards split a per-state uniform(0,1) total across agents with
    Dirichlet-uniform proportions, so sum_j rewards[j][s] recovers the total.
    """
    if n_states < 1 or n_agents < 1:
        raise ValueError("n_states and n_agents must be positive")
    if not (1 <= branching <= n_states):
        raise ValueError(f"branching must be in [1, n_states], got {branching}")
    rng = np.random.default_rng(seed)
    P = np.zeros((n_states, n_states))
    if n_states == 1:
        P[0, 0] = 1.0
    else:
        for s in range(n_states):
            succ = (s + 1) % n_states
            others = [v for v in range(n_states) if v != succ]
            extra = rng.choice(others, size=branching - 1, replace=False) if branching > 1 else []
            support = np.array([succ, *extra], dtype=np.int64)
            mass = rng.dirichlet(np.ones(len(support)))
            P[s, support] = (1.0 - self_loop) * mass
            P[s, s] += self_loop
    total = rng.random(n_states)
    proportions = rng.dirichlet(np.ones(n_agents), size=n_states)  # (S, N)
    rewards = (proportions * total[:, None]).T
    return PolicyChain(P=P, rewards=rewards, gamma=gamma)


# -- persistence ---------------------------------------------------------

TRAJECTORY_FLOAT_FMT = "%.17g"


def save_trajectory(traj: Trajectory, path) -> None:
    """Write `t,s,s_next,r_1,...,r_N` rows, reals with 17 significant digits."""
    n_agents = traj.n_agents
    header = "t,s,s_next," + ",".join(f"r_{j + 1}" for j in range(n_agents))
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for t in range(len(traj)):
            row = ",".join(TRAJECTORY_FLOAT_FMT % r for r in traj.rewards[t])
            fh.write(f"{t},{traj.s[t]},{traj.s_next[t]},{row}\n")


def load_trajectory(path) -> Trajectory:
    """Read a trajectory written by :func:`save_trajectory`, bit-exactly."""
    with open(path, "r") as fh:
        header = fh.readline().strip().split(",")
        n_agents = len(header) - 3
        s, s_next, rewards = [], [], []
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            s.append(int(parts[1]))
            s_next.append(int(parts[2]))
            rewards.append([float(x) for x in parts[3:3 + n_agents]])
    return Trajectory(np.array(s), np.array(s_next), np.array(rewards))
