"""The projected-Bellman-error objective and its saddle-point form.

A :class:`SaddleModel` bundles the population or empirical matrices (A, C)
and per-agent vectors b_j together with the primal/dual ball radii. The
module evaluates the quadratic objective f and its per-agent parts f_j, the
bilinear-concave payoffs psi_j whose ball-constrained maxima recover f_j,
population and single-sample gradients, the exact saddle point, and the
curvature/bound constants the solver analysis consumes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._io import load_matrix_csv, read_kv, write_kv, write_matrix_csv
from .chain import PolicyChain, SampleTransition, Trajectory, stationary_distribution
from .features import FeatureBounds, FeatureMap

MIN_SINGULAR_A = 1e-10
MIN_EIG_C = 1e-12


class ModelAssumptionError(ValueError):
    """The model violates a standing assumption (full-rank A, positive definite C)."""


@dataclass(frozen=True)
class SaddleModel:
    """Problem data (A, C, {b_j}) plus primal/dual ball radii R_x, R_y."""

    A: np.ndarray
    C: np.ndarray
    b_locals: np.ndarray  # (N, d)
    gamma: float
    r_x: float
    r_y: float

    def __post_init__(self):
        A = np.ascontiguousarray(np.asarray(self.A, dtype=float))
        C = np.ascontiguousarray(np.asarray(self.C, dtype=float))
        b_locals = np.ascontiguousarray(np.atleast_2d(np.asarray(self.b_locals, dtype=float)))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b_locals", b_locals)
        d = A.shape[0]
        if A.shape != (d, d) or C.shape != (d, d) or b_locals.shape[1] != d:
            raise ValueError("A, C must be d x d and b_locals N x d")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if np.abs(C - C.T).max() > 1e-9 * max(1.0, np.abs(C).max()):
            raise ModelAssumptionError("matrix C is not symmetric")
        eig_min = float(np.linalg.eigvalsh(0.5 * (C + C.T)).min())
        if eig_min <= MIN_EIG_C:
            raise ModelAssumptionError(
                f"matrix C is not positive definite (smallest eigenvalue {eig_min:.3e})"
            )
        smin = float(np.linalg.svd(A, compute_uv=False).min())
        if smin <= MIN_SINGULAR_A:
            raise ModelAssumptionError(
                f"matrix A is rank deficient (smallest singular value {smin:.3e})"
            )
        if not (self.r_x > 0 and self.r_y > 0):
            raise ValueError("ball radii must be positive")
        # Dual ball must contain every Fenchel maximizer C^-1 (A x - b_j) over
        # the primal ball; ||A|| R_x + ||b_j|| bounds the numerator.
        required = dual_radius_requirement(A, b_locals, eig_min, self.r_x)
        if self.r_y < required * (1.0 - 1e-12):
            raise ValueError(
                f"R_y = {self.r_y:.6g} too small: dual maximizers need at least {required:.6g}"
            )
        object.__setattr__(self, "_cho", cho_factor(C, lower=True))
        object.__setattr__(self, "_lambda_min_C", eig_min)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def n_agents(self) -> int:
        return self.b_locals.shape[0]

    @property
    def b(self) -> np.ndarray:
        return self.b_locals.mean(axis=0)

    @property
    def lambda_min_C(self) -> float:
        return self._lambda_min_C

    def apply_Cinv(self, V: np.ndarray) -> np.ndarray:
        """Solve C Z = V via the cached SPD factorization (never explicit inverse)."""
        return cho_solve(self._cho, V)


@dataclass(frozen=True)
class PrimalDualPoint:
    """A primal vector with its N dual vectors."""

    x: np.ndarray
    y_locals: np.ndarray  # (N, d)


@dataclass(frozen=True)
class ProblemConstants:
    """Curvature and bound constants for the saddle problem.

    rho_y is the dual strong-concavity modulus lambda_min(C); rho_x is the
    closed-form primal modulus 2*lambda + sigma_max(A)^2 / sigma_min(C)
    reported as stated, while rho_cert = lambda_min(A^T C^-1 A) is the
    certified Hessian modulus that asserted inequalities use.
    """

    rho_x: float
    rho_y: float
    G: float
    L: float
    lambda_reg: float
    rho_cert: float


def dual_radius_requirement(A, b_locals, lambda_min_C, r_x) -> float:
    """Sufficient dual radius: (1/lambda_min(C)) max_j (||A|| R_x + ||b_j||)."""
    a_norm = float(np.linalg.norm(A, 2))
    return float((a_norm * r_x + np.linalg.norm(b_locals, axis=1).max()) / lambda_min_C)


def default_radii(A, C, b_locals, rx_scale: float = 2.0, ry_scale: float = 1.5):
    """Ball radii keeping the saddle point strictly interior.

    R_x = rx_scale * ||A^-1 b|| (floored at 1 when b = 0); R_y = ry_scale
    times the sufficient dual-radius bound for that R_x.
    """
    b = b_locals.mean(axis=0)
    x_star_norm = float(np.linalg.norm(np.linalg.solve(A, b)))
    r_x = rx_scale * x_star_norm if x_star_norm > 1e-12 else 1.0
    lam_min = float(np.linalg.eigvalsh(0.5 * (C + C.T)).min())
    r_y = ry_scale * dual_radius_requirement(A, b_locals, lam_min, r_x)
    return r_x, r_y


def population_model(chain: PolicyChain, features: FeatureMap,
                     rx_scale: float = 2.0, ry_scale: float = 1.5) -> SaddleModel:
    """Exact model under the stationary distribution.

    A = Phi^T D (I - gamma P) Phi, C = Phi^T D Phi, b_j = Phi^T D R_j with
    D = diag(Pi); radii from :func:`default_radii`.
    """
    if features.n_states != chain.n_states:
        raise ValueError("feature map and chain disagree on the number of states")
    pi = stationary_distribution(chain)
    Phi = features.Phi
    DPhi = pi[:, None] * Phi
    A = Phi.T @ (DPhi - chain.gamma * pi[:, None] * (chain.P @ Phi))
    C = Phi.T @ DPhi
    b_locals = chain.rewards @ DPhi  # (N, d)
    r_x, r_y = default_radii(A, C, b_locals, rx_scale, ry_scale)
    return SaddleModel(A=A, C=C, b_locals=b_locals, gamma=chain.gamma, r_x=r_x, r_y=r_y)


def _as_arrays(dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(dataset, Trajectory):
        return dataset.s, dataset.s_next, dataset.rewards
    rows = list(dataset)
    if not rows:
        raise ValueError("dataset is empty")
    s = np.array([r.s for r in rows], dtype=np.int64)
    s_next = np.array([r.s_next for r in rows], dtype=np.int64)
    rewards = np.array([r.local_rewards for r in rows], dtype=float)
    return s, s_next, rewards


def empirical_model(dataset, features: FeatureMap, gamma: float,
                    rx_scale: float = 2.0, ry_scale: float = 1.5) -> SaddleModel:
    """Flat sample averages of the A, C, b_j terms over a transition dataset.

    Each row pairs phi(s) with phi(s_next) from the same transition. Raises
    :class:`ModelAssumptionError` when the dataset is too small or degenerate
    for C-hat to be positive definite (or A-hat to be full rank).
    """
    s, s_next, rewards = _as_arrays(dataset)
    if len(s) == 0:
        raise ValueError("dataset is empty")
    Phi = features.Phi
    Ps = Phi[s]
    Pn = Phi[s_next]
    T = len(s)
    A = Ps.T @ (Ps - gamma * Pn) / T
    C = Ps.T @ Ps / T
    C = 0.5 * (C + C.T)
    b_locals = (rewards.T @ Ps) / T
    r_x, r_y = default_radii(A, C, b_locals, rx_scale, ry_scale)
    return SaddleModel(A=A, C=C, b_locals=b_locals, gamma=gamma, r_x=r_x, r_y=r_y)


# -- objective values -----------------------------------------------------

def mspbe(model: SaddleModel, x: np.ndarray) -> float:
    """f(x) = 1/2 ||A x - b||^2 in the C^-1 metric."""
    r = model.A @ x - model.b
    return 0.5 * float(r @ model.apply_Cinv(r))


def local_mspbe(model: SaddleModel, j: int, x: np.ndarray) -> float:
    """f_j(x): the agent's own objective, with b_j in place of b."""
    r = model.A @ x - model.b_locals[j]
    return 0.5 * float(r @ model.apply_Cinv(r))


def mean_local_mspbe(model: SaddleModel, x: np.ndarray) -> float:
    """(1/N) sum_j f_j(x); exceeds f(x) by an x-independent spread term."""
    R = (model.A @ x)[:, None] - model.b_locals.T  # (d, N) residuals per agent
    Z = model.apply_Cinv(R)
    return 0.5 * float(np.einsum("dn,dn->n", R, Z).mean())


def psi(model: SaddleModel, j: int, x: np.ndarray, y_j: np.ndarray) -> float:
    """psi_j(x, y_j) = y_j^T (A x - b_j) - 1/2 y_j^T C y_j."""
    return float(y_j @ (model.A @ x - model.b_locals[j]) - 0.5 * y_j @ model.C @ y_j)


def psi_gradients(model: SaddleModel, j: int, x: np.ndarray, y_j: np.ndarray):
    """Population gradients (d psi_j / dx, d psi_j / dy_j)."""
    g_x = model.A.T @ y_j
    g_y = model.A @ x - model.b_locals[j] - model.C @ y_j
    return g_x, g_y


def stochastic_gradient(features: FeatureMap, gamma: float, j: int,
                        x: np.ndarray, y_j: np.ndarray, xi: SampleTransition):
    """Single-sample gradients of psi_j from one transition.

    With A(xi) = phi(s)(phi(s) - gamma phi(s'))^T, b_j(xi) = r_j phi(s) and
    C(xi) = phi(s) phi(s)^T: g_x = A(xi)^T y_j, g_y = A(xi) x - b_j(xi) -
    C(xi) y_j. Averaged over stationary samples these are unbiased for
    :func:`psi_gradients`.
    """
    phi_s = features.Phi[xi.s]
    dphi = phi_s - gamma * features.Phi[xi.s_next]
    u = float(phi_s @ y_j)
    g_x = u * dphi
    g_y = (float(dphi @ x) - float(xi.local_rewards[j]) - u) * phi_s
    return g_x, g_y


def saddle_solution(model: SaddleModel) -> PrimalDualPoint:
    """Exact saddle point: x* = A^-1 b, y_j* = C^-1 (A x* - b_j).

    Raises when x* (or any y_j*) falls outside its ball; the fix is to
    rebuild the model with larger radii.
    """
    x_star = np.linalg.solve(model.A, model.b)
    if np.linalg.norm(x_star) > model.r_x:
        raise ValueError(
            f"x* has norm {np.linalg.norm(x_star):.6g} > R_x = {model.r_x:.6g}; "
            "enlarge R_x (rebuild the model with a larger rx_scale)"
        )
    resid = (model.A @ x_star)[:, None] - model.b_locals.T  # (d, N)
    y_locals = model.apply_Cinv(resid).T
    y_norms = np.linalg.norm(y_locals, axis=1)
    if y_norms.max() > model.r_y:
        raise ValueError(
            f"a dual maximizer has norm {y_norms.max():.6g} > R_y = {model.r_y:.6g}; "
            "enlarge R_y (rebuild the model with a larger ry_scale)"
        )
    return PrimalDualPoint(x=x_star, y_locals=y_locals)


def constants(model: SaddleModel, bounds: FeatureBounds,
              lambda_reg: float = 0.0) -> ProblemConstants:
    """Assemble the curvature, gradient-bound and smoothness constants.

    G and L use the closed forms in terms of (beta0, beta1, beta2) with
    R = max(R_x, R_y); rho_cert is the smallest eigenvalue of the objective
    Hessian A^T C^-1 A, computed independently of the rho_x closed form.
    """
    lam = lambda_reg
    rho_y = model.lambda_min_C
    sigma_max_A = float(np.linalg.norm(model.A, 2))
    rho_x = 2.0 * lam + sigma_max_A ** 2 / rho_y
    R = max(model.r_x, model.r_y)
    b0, b1, b2 = bounds.beta0, bounds.beta1, bounds.beta2
    G = float(np.sqrt((2.0 * b1 ** 2 + b2 ** 2 + 4.0 * lam ** 2) * R ** 2 + b0 ** 2))
    L = float(max(np.sqrt(b1 ** 2 + b2 ** 2), np.sqrt(4.0 * lam ** 2 + b1 ** 2)))
    H = model.A.T @ model.apply_Cinv(model.A)
    rho_cert = float(np.linalg.eigvalsh(0.5 * (H + H.T)).min())
    return ProblemConstants(rho_x=rho_x, rho_y=rho_y, G=G, L=L,
                            lambda_reg=lam, rho_cert=rho_cert)


def objective_hessian(model: SaddleModel) -> np.ndarray:
    """Hessian A^T C^-1 A of f (symmetrized)."""
    H = model.A.T @ model.apply_Cinv(model.A)
    return 0.5 * (H + H.T)


# -- persistence ----------------------------------------------------------

def save_model(model: SaddleModel, directory) -> None:
    """CSV bundle: A.csv, C.csv, b_locals.csv plus a key-value meta file."""
    os.makedirs(directory, exist_ok=True)
    write_matrix_csv(os.path.join(directory, "A.csv"), model.A)
    write_matrix_csv(os.path.join(directory, "C.csv"), model.C)
    write_matrix_csv(os.path.join(directory, "b_locals.csv"), model.b_locals)
    write_kv(os.path.join(directory, "model_meta.txt"), {
        "gamma": model.gamma,
        "n_agents": model.n_agents,
        "d": model.d,
        "r_x": model.r_x,
        "r_y": model.r_y,
    })


def load_model(directory) -> SaddleModel:
    meta = read_kv(os.path.join(directory, "model_meta.txt"))
    return SaddleModel(
        A=load_matrix_csv(os.path.join(directory, "A.csv")),
        C=load_matrix_csv(os.path.join(directory, "C.csv")),
        b_locals=load_matrix_csv(os.path.join(directory, "b_locals.csv")),
        gamma=float(meta["gamma"]),
        r_x=float(meta["r_x"]),
        r_y=float(meta["r_y"]),
    )
