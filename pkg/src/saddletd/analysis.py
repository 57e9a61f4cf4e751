"""Optimality/surrogate gaps, bound shapes, and empirical inequality verifiers.

The verifiers turn the method's supporting inequalities into executable
checks over logged runs and synthetic instances: consensus error against its
network bound, the lazy-projection regret inequality, the bounded-martingale
mean-square bound, the gap ordering and quadratic growth lower bounds, the
surrogate-gap decomposition, and mixing-time consistency. Each check yields a
:class:`CheckRecord` row so reports can be rendered as text or CSV.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._io import FLOAT_FMT
from .chain import MixingEstimate, PolicyChain, stationary_distribution, tv_distance
from .objective import ProblemConstants, SaddleModel, psi, saddle_solution
from .solver import RunTrace, project_ball


@dataclass(frozen=True)
class GapReport:
    """Mean optimality and surrogate gaps with the per-agent breakdown."""

    eps: float
    eps_surrogate: float
    per_agent: np.ndarray

    def __post_init__(self):
        scale = 1e-9 * max(1.0, abs(self.eps), abs(self.eps_surrogate))
        if self.eps < -scale or self.eps > self.eps_surrogate + scale:
            raise ValueError(
                f"gap ordering violated: eps={self.eps!r}, surrogate={self.eps_surrogate!r}"
            )


@dataclass(frozen=True)
class BoundShape:
    """The two rate-bound terms with unit leading constants, plus tau."""

    term_network: float
    term_horizon: float
    tau: int

    def __post_init__(self):
        if self.term_network < 0 or self.term_horizon < 0:
            raise ValueError("bound terms must be nonnegative")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")

    @property
    def total(self) -> float:
        return self.term_network + self.term_horizon


@dataclass(frozen=True)
class CheckRecord:
    check: str
    round: int
    agent: int
    lhs: float
    rhs: float
    passed: bool


def all_passed(records) -> bool:
    return all(r.passed for r in records)


def save_report_csv(records, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("check,round,agent,lhs,rhs,pass\n")
        for r in records:
            fh.write(f"{r.check},{r.round},{r.agent},"
                     f"{FLOAT_FMT % r.lhs},{FLOAT_FMT % r.rhs},{int(r.passed)}\n")


def format_report(records) -> str:
    lines = []
    by_check: dict[str, list[CheckRecord]] = {}
    for r in records:
        by_check.setdefault(r.check, []).append(r)
    for name, rs in by_check.items():
        bad = [r for r in rs if not r.passed]
        status = "PASS" if not bad else "FAIL"
        lines.append(f"{status} {name}: {len(rs) - len(bad)}/{len(rs)} checks hold")
        for r in bad[:5]:
            lines.append(f"   round {r.round} agent {r.agent}: "
                         f"lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
    return "\n".join(lines)


# -- gaps ------------------------------------------------------------------

def _local_values(model: SaddleModel, X: np.ndarray) -> np.ndarray:
    """f_j(x_i) for every row x_i of X: returns (M, N)."""
    X = np.atleast_2d(X)
    M = X.shape[0]
    N = model.n_agents
    resid = X @ model.A.T  # (M, d)
    resid = resid[:, None, :] - model.b_locals[None, :, :]  # (M, N, d)
    flat = resid.reshape(M * N, -1).T
    Z = model.apply_Cinv(flat)
    vals = 0.5 * np.einsum("dk,dk->k", flat, Z)
    return vals.reshape(M, N)


def make_gap_oracle(model: SaddleModel):
    """Vectorized Eq.-style optimality gap: (M, d) candidates -> (M,) gaps."""
    point = saddle_solution(model)
    f_star = _local_values(model, point.x[None, :])[0]  # (N,)

    def oracle(X: np.ndarray) -> np.ndarray:
        gaps = (_local_values(model, X) - f_star[None, :]).mean(axis=1)
        return np.maximum(gaps, 0.0)

    return oracle


def optimality_gap(model: SaddleModel, x_hat: np.ndarray) -> float:
    """(1/N) sum_j (f_j(x_hat) - f_j(x*)); nonnegative by optimality of x*."""
    return float(make_gap_oracle(model)(np.asarray(x_hat)[None, :])[0])


def best_response_duals(model: SaddleModel, x_hat: np.ndarray) -> np.ndarray:
    """Ball-constrained maximizers of psi_j(x_hat, .): C^-1 (A x_hat - b_j) projected."""
    resid = (model.A @ x_hat)[:, None] - model.b_locals.T  # (d, N)
    Y = model.apply_Cinv(resid).T
    return np.array([project_ball(y, model.r_y) for y in Y])


def surrogate_gap(model: SaddleModel, x_hat: np.ndarray, y_hats: np.ndarray,
                  x_star: np.ndarray | None = None) -> float:
    """(1/N) sum_j (psi_j(x_hat, y*_j(x_hat)) - psi_j(x*, y_hat_j)).

    The inner maximizer is exact whenever it is interior to the dual ball,
    which the model's radius invariant guarantees for x_hat in the primal
    ball; the included projection only matters outside the domain.
    """
    if x_star is None:
        x_star = np.linalg.solve(model.A, model.b)
    y_best = best_response_duals(model, x_hat)
    n = model.n_agents
    total = 0.0
    for j in range(n):
        total += psi(model, j, x_hat, y_best[j]) - psi(model, j, x_star, y_hats[j])
    return max(total / n, 0.0)


def gap_report(model: SaddleModel, x_avg: np.ndarray, y_avg: np.ndarray) -> GapReport:
    """Per-agent gaps at a checkpoint plus the matching mean surrogate gap."""
    oracle = make_gap_oracle(model)
    per_agent = oracle(x_avg)
    x_star = np.linalg.solve(model.A, model.b)
    surr = [surrogate_gap(model, x_i, y_avg, x_star=x_star) for x_i in np.atleast_2d(x_avg)]
    return GapReport(eps=float(per_agent.mean()), eps_surrogate=float(np.mean(surr)),
                     per_agent=per_agent)


# -- mixing time and bound shape ------------------------------------------

def mixing_time_bound(Gamma: float, rho: float, eps: float) -> int:
    """Steps to eps-stationarity from the envelope: ceil(log(Gamma/eps)/|log rho|) + 1."""
    if Gamma < 1.0:
        raise ValueError("Gamma must be >= 1")
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must be in (0,1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    lead = math.ceil(math.log(Gamma / eps) / abs(math.log(rho)))
    return max(0, lead) + 1


def measured_tv(chain: PolicyChain, t: int) -> float:
    """Worst-case-over-start-states tv distance of the t-step law to Pi."""
    pi = stationary_distribution(chain)
    Pt = np.linalg.matrix_power(chain.P, t)
    return max(tv_distance(row, pi) for row in Pt)


def measured_mixing_time(chain: PolicyChain, eps: float, t_cap: int = 100_000) -> int:
    """Smallest t with worst-case tv distance <= eps."""
    pi = stationary_distribution(chain)
    Pt = chain.P.copy()
    for t in range(1, t_cap + 1):
        if np.abs(Pt - pi[None, :]).sum(axis=1).max() <= eps:
            return t
        Pt = Pt @ chain.P
    raise RuntimeError(f"chain did not reach eps={eps} within {t_cap} steps")


def theorem_bound_shape(G: float, R: float, L: float, sigma2: float,
                        T: int, T1: int, N: int,
                        mixing: MixingEstimate | None = None) -> BoundShape:
    """Evaluate the two rate-bound terms with unit constants.

    term_network = G(RL+G) log^2(T sqrt(N)) / (T (1-sigma2)); term_horizon =
    G(G+RL)(1+T1)/T. tau is the mixing-time bound at eps = 1/T when an
    envelope is supplied (1 otherwise). Violated preconditions (T not of the
    form (2^K - 1) T1, or T1 < tau) warn rather than fail.
    """
    ratio = T / T1 + 1
    k_est = math.log2(ratio)
    if abs(k_est - round(k_est)) > 1e-9:
        warnings.warn(f"T={T} is not (2^K - 1) * T1 for integer K (T1={T1})", stacklevel=2)
    tau = 1 if mixing is None else mixing_time_bound(mixing.Gamma, mixing.rho, 1.0 / T)
    if T1 < tau:
        warnings.warn(f"T1={T1} is below the mixing-time bound tau={tau}", stacklevel=2)
    log_term = math.log(T * math.sqrt(N)) ** 2
    term_network = G * (R * L + G) * log_term / (T * (1.0 - sigma2))
    term_horizon = G * (G + R * L) * (1.0 + T1) / T
    return BoundShape(term_network=term_network, term_horizon=term_horizon, tau=tau)


def verify_mixing_consistency(chain: PolicyChain, estimate: MixingEstimate,
                              T_values=(1000, 10_000)) -> list[CheckRecord]:
    """Measured tv distance at t = bound(Gamma, rho, 1/T) must be <= 1/T."""
    records = []
    for T in T_values:
        eps = 1.0 / T
        t = mixing_time_bound(estimate.Gamma, estimate.rho, eps)
        d = measured_tv(chain, t)
        records.append(CheckRecord("mixing_time_consistency", round=T, agent=-1,
                                   lhs=d, rhs=eps, passed=d <= eps))
    return records


# -- lemma verifiers -------------------------------------------------------

def consensus_error_bound(eta_k: float, T_k: int, G: float, sigma2: float,
                          sum_eta_T: float, N: int) -> float:
    """Per-round consensus bound: mixing term + restart-carry term + step term."""
    gap = 1.0 - sigma2
    log_term = math.log(math.sqrt(N) * T_k)
    return (2.0 * eta_k * G * log_term / gap
            + (4.0 * G / T_k) * (log_term / gap + 1.0) * sum_eta_T
            + 2.0 * eta_k * G)


def verify_lemma1(trace: RunTrace, model: SaddleModel, sigma2: float,
                  G: float) -> list[CheckRecord]:
    """Average consensus error per round and agent against its network bound.

    The network average is the primal-ball projection of the mean lazy
    iterate. Requires a run with iterate logging enabled.
    """
    records = []
    sum_eta_T = 0.0
    n = trace.n_agents
    for rnd in trace.rounds:
        sum_eta_T += rnd.eta * rnd.horizon
        if rnd.x_log is None or rnd.x_lazy_log is None:
            raise ValueError("verify_lemma1 needs a trace run with log_iterates=True")
        bar_lazy = rnd.x_lazy_log.mean(axis=1)  # (T, d)
        norms = np.linalg.norm(bar_lazy, axis=1)
        scale = np.where(norms > model.r_x, model.r_x / np.maximum(norms, 1e-300), 1.0)
        bar = bar_lazy * scale[:, None]
        dev = np.linalg.norm(rnd.x_log - bar[:, None, :], axis=2)  # (T, N)
        lhs = dev.mean(axis=0)
        rhs = consensus_error_bound(rnd.eta, rnd.horizon, G, sigma2, sum_eta_T, n)
        for j in range(n):
            records.append(CheckRecord("lemma1_consensus", round=rnd.index, agent=j,
                                       lhs=float(lhs[j]), rhs=rhs,
                                       passed=bool(lhs[j] <= rhs)))
    return records


def verify_lemma2(n_instances: int = 100, seed: int = 0) -> list[CheckRecord]:
    """Lazy-projection regret on random bounded gradient sequences.

    For w(t+1) = w(t) - eta g(t), u(t+1) = P(w(t+1)) started at u(1) = w(1)
    in a ball, and any u* in the ball:
    sum_t <g(t), u(t) - u*> <= ||u(1) - u*||^2 / (2 eta) + (eta/2) sum_t ||g(t)||^2.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_instances):
        d = int(rng.integers(1, 9))
        T = int(rng.integers(1, 61))
        eta = float(rng.uniform(1e-3, 1.0))
        radius = float(rng.uniform(0.1, 5.0))
        u = project_ball(rng.standard_normal(d) * radius, radius)
        w = u.copy()
        u_star = project_ball(rng.standard_normal(d) * radius, radius)
        gs = rng.standard_normal((T, d)) * rng.uniform(0.1, 3.0)
        lhs = 0.0
        sq = 0.0
        init_dist = float(np.linalg.norm(u - u_star) ** 2)
        for t in range(T):
            g = gs[t]
            lhs += float(g @ (u - u_star))
            sq += float(g @ g)
            w = w - eta * g
            u = project_ball(w, radius)
        rhs = init_dist / (2.0 * eta) + 0.5 * eta * sq
        records.append(CheckRecord("lemma2_lazy_regret", round=i, agent=-1,
                                   lhs=lhs, rhs=rhs, passed=lhs <= rhs))
    return records


def _martingale_sequences(M: float, T: int, trials: int, d: int, family: str,
                          rng: np.random.Generator) -> np.ndarray:
    """Bounded martingale-difference sequences of shape (trials, T, d)."""
    signs = np.where(rng.random((trials, T)) < 0.5, -1.0, 1.0)
    coords = rng.integers(0, d, size=(trials, T))
    X = np.zeros((trials, T, d))
    if family == "iid_signs":
        mags = np.full((trials, T), M)
    elif family == "path_dependent":
        # magnitude depends on the sign history only (predictable), still <= M
        cum = np.cumsum(signs, axis=1)
        prev = np.concatenate([np.zeros((trials, 1)), cum[:, :-1]], axis=1)
        mags = M * np.abs(np.cos(prev))
    else:
        raise ValueError(f"unknown family {family!r}")
    rows = np.repeat(np.arange(trials), T)
    cols = np.tile(np.arange(T), trials)
    X[rows, cols, coords.ravel()] = (signs * mags).ravel()
    return X


def verify_lemma3(M: float, T: int, trials: int, seed: int = 0,
                  d: int = 4) -> list[CheckRecord]:
    """Monte-Carlo check of E||(1/T) sum_t X(t)||^2 <= 4 M^2 / T.

    Two bounded martingale-difference families: iid signed coordinates and a
    path-dependent-magnitude variant. The assertion allows Monte-Carlo slack
    (1 + 3/sqrt(trials)).
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    rng = np.random.default_rng(seed)
    rhs = 4.0 * M * M / T * (1.0 + 3.0 / math.sqrt(trials))
    records = []
    for family in ("iid_signs", "path_dependent"):
        X = _martingale_sequences(M, T, trials, d, family, rng)
        step_norms = np.linalg.norm(X, axis=2)
        if step_norms.max() > M * (1 + 1e-12):
            raise AssertionError("martingale construction exceeded its bound")
        means = X.mean(axis=1)
        est = float((means * means).sum(axis=1).mean())
        records.append(CheckRecord(f"lemma3_martingale_{family}", round=T, agent=-1,
                                   lhs=est, rhs=rhs, passed=est <= rhs))
    return records


def verify_gap_ordering(model: SaddleModel, trace: RunTrace) -> list[CheckRecord]:
    """0 <= eps(x_hat_i) <= eps'(x_hat_i, y_hat) at every checkpoint."""
    records = []
    x_star = np.linalg.solve(model.A, model.b)
    oracle = make_gap_oracle(model)
    for c in trace.checkpoints:
        eps_agents = oracle(c.x_avg)
        for i, x_i in enumerate(np.atleast_2d(c.x_avg)):
            eps = float(eps_agents[i])
            surr = surrogate_gap(model, x_i, c.y_avg, x_star=x_star)
            tol = 1e-9 * max(1.0, eps, surr)
            ok = (eps >= 0.0) and (eps <= surr + tol)
            records.append(CheckRecord("lemma4_gap_ordering", round=c.samples, agent=i,
                                       lhs=eps, rhs=surr, passed=ok))
    return records


def verify_quadratic_growth(model: SaddleModel, trace: RunTrace,
                            consts: ProblemConstants) -> list[CheckRecord]:
    """Quadratic lower bounds on the gaps at every checkpoint.

    Primal: eps >= (rho_cert/2) ||x* - x_hat||^2 with the certified modulus.
    Dual: eps' >= (rho_y/2N) sum_j ||y_j* - y_hat_j||^2, and the same with the
    best-response duals in place of y_hat.
    """
    records = []
    point = saddle_solution(model)
    x_star = point.x
    oracle = make_gap_oracle(model)
    n = model.n_agents
    for c in trace.checkpoints:
        eps_agents = oracle(c.x_avg)
        for i, x_i in enumerate(np.atleast_2d(c.x_avg)):
            eps = float(eps_agents[i])
            surr = surrogate_gap(model, x_i, c.y_avg, x_star=x_star)
            slack = lambda v: v * (1.0 + 1e-9) + 1e-12
            lhs1 = 0.5 * consts.rho_cert * float(np.linalg.norm(x_star - x_i) ** 2)
            records.append(CheckRecord("lemma5_primal_growth", round=c.samples, agent=i,
                                       lhs=lhs1, rhs=eps, passed=lhs1 <= slack(eps)))
            lhs2 = (0.5 * consts.rho_y / n
                    * float(((point.y_locals - c.y_avg) ** 2).sum()))
            records.append(CheckRecord("lemma5_dual_growth", round=c.samples, agent=i,
                                       lhs=lhs2, rhs=surr, passed=lhs2 <= slack(surr)))
            y_best = best_response_duals(model, x_i)
            lhs3 = (0.5 * consts.rho_y / n
                    * float(((point.y_locals - y_best) ** 2).sum()))
            records.append(CheckRecord("lemma5_best_response_growth", round=c.samples,
                                       agent=i, lhs=lhs3, rhs=surr,
                                       passed=lhs3 <= slack(surr)))
    return records


def verify_gap_decomposition(model: SaddleModel, trace: RunTrace,
                             G: float) -> list[CheckRecord]:
    """Surrogate gap <= NET + PDG per round and reference agent (logged runs).

    NET accumulates consensus deviations from the mean projected iterate; PDG
    averages the local primal-dual gaps along the round, evaluated at the
    reference agent's best-response duals and at x*.
    """
    records = []
    x_star = np.linalg.solve(model.A, model.b)
    A, C = model.A, model.C
    n = model.n_agents
    for rnd in trace.rounds:
        if rnd.x_log is None or rnd.y_log is None:
            raise ValueError("verify_gap_decomposition needs log_iterates=True")
        T_k = rnd.horizon
        x_log, y_log = rnd.x_log, rnd.y_log
        bar = x_log.mean(axis=1)  # (T, d) mean of projected iterates
        dev = np.linalg.norm(x_log - bar[:, None, :], axis=2)  # (T, N)
        mean_dev = dev.mean(axis=1)  # (T,)
        r_star = (A @ x_star)[:, None] - model.b_locals.T  # (d, N)
        for i in range(n):
            x_hat_i = rnd.x_hat[i]
            surr = surrogate_gap(model, x_hat_i, rnd.y_hat, x_star=x_star)
            net = G / T_k * float((dev[:, i] + mean_dev).sum())
            y_best = best_response_duals(model, x_hat_i)  # (N, d)
            pdg = 0.0
            for j in range(n):
                yb = y_best[j]
                const_b = float(yb @ model.b_locals[j]) + 0.5 * float(yb @ C @ yb)
                term1 = x_log[:, j, :] @ (A.T @ yb) - const_b
                Yj = y_log[:, j, :]
                term2 = Yj @ r_star[:, j] - 0.5 * np.einsum("td,td->t", Yj @ C, Yj)
                pdg += float((term1 - term2).sum())
            pdg /= n * T_k
            rhs = net + pdg
            records.append(CheckRecord("lemma6_gap_decomposition", round=rnd.index,
                                       agent=i, lhs=surr, rhs=rhs,
                                       passed=surr <= rhs * (1 + 1e-9) + 1e-12))
    return records


def verify_schedule(trace: RunTrace) -> list[CheckRecord]:
    """Exact schedule identities: eta_k T_k constant, T total, restarts at averages."""
    records = []
    rounds = trace.rounds
    if trace.algorithm == "dhpd":
        prod0 = rounds[0].eta * rounds[0].horizon
        for rnd in rounds:
            prod = rnd.eta * rnd.horizon
            records.append(CheckRecord("schedule_eta_T_constant", round=rnd.index,
                                       agent=-1, lhs=prod, rhs=prod0,
                                       passed=prod == prod0))
        T1, K = rounds[0].horizon, len(rounds)
        total_iter = sum(r.horizon for r in rounds)
        expected = (2 ** K - 1) * T1
        records.append(CheckRecord("schedule_total_iterations", round=K, agent=-1,
                                   lhs=float(total_iter), rhs=float(expected),
                                   passed=total_iter == expected))
        for prev, nxt in zip(rounds, rounds[1:]):
            err = max(float(np.abs(nxt.x_init - prev.x_hat).max()),
                      float(np.abs(nxt.y_init - prev.y_hat).max()))
            records.append(CheckRecord("schedule_restart_at_average", round=nxt.index,
                                       agent=-1, lhs=err, rhs=1e-12,
                                       passed=err <= 1e-12))
    return records
