"""Linear function approximation: feature dictionaries and their bounds.

The value function is approximated as V(s) = phi(s)^T x with a full-column-
rank dictionary. The beta bounds collect the worst-case norms of the
sampled-data terms (reward-weighted features, the rank-one transition outer
product and the feature Gram outer product) that the solver's gradient and
smoothness constants are assembled from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import PolicyChain

MIN_SINGULAR_VALUE = 1e-10


@dataclass(frozen=True)
class FeatureMap:
    """State-indexed feature dictionary Phi with full column rank."""

    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.ascontiguousarray(np.asarray(self.Phi, dtype=float))
        object.__setattr__(self, "Phi", Phi)
        if Phi.ndim != 2:
            raise ValueError(f"Phi must be 2-D, got shape {Phi.shape}")
        if not np.isfinite(Phi).all():
            raise ValueError("Phi has non-finite entries")
        smin = np.linalg.svd(Phi, compute_uv=False)[-1]
        if smin <= MIN_SINGULAR_VALUE:
            raise ValueError(
                f"Phi must have full column rank (smallest singular value {smin:.3e})"
            )

    @property
    def n_states(self) -> int:
        return self.Phi.shape[0]

    @property
    def d(self) -> int:
        return self.Phi.shape[1]

    def row(self, s: int) -> np.ndarray:
        return self.Phi[s]


@dataclass(frozen=True)
class FeatureBounds:
    """Worst-case norms over the chain's support.

    beta0 bounds ||R_j(s) phi(s)||, beta1 bounds the spectral norm of
    phi(s) (phi(s) - gamma phi(s'))^T over transitions with positive
    probability, beta2 bounds ||phi(s) phi(s)^T|| = ||phi(s)||^2.
    """

    beta0: float
    beta1: float
    beta2: float

    def __post_init__(self):
        for name in ("beta0", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def tabular_features(n_states: int) -> FeatureMap:
    """Identity dictionary: one indicator feature per state (exact representation)."""
    if n_states < 1:
        raise ValueError("n_states must be positive")
    return FeatureMap(np.eye(n_states))


def random_features(n_states: int, d: int, seed: int, max_attempts: int = 100) -> FeatureMap:
    """Gaussian dictionary with unit-norm rows, resampled until well conditioned."""
    if not (1 <= d <= n_states):
        raise ValueError(f"need 1 <= d <= n_states, got d={d}, n_states={n_states}")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        Phi = rng.standard_normal((n_states, d))
        norms = np.linalg.norm(Phi, axis=1)
        if norms.min() <= 0:
            continue
        Phi = Phi / norms[:, None]
        if np.linalg.svd(Phi, compute_uv=False)[-1] > 1e-6:
            return FeatureMap(Phi)
    raise RuntimeError(f"no well-conditioned feature matrix in {max_attempts} attempts")


def compute_bounds(features: FeatureMap, chain: PolicyChain) -> FeatureBounds:
    """Evaluate beta0, beta1, beta2 on the chain's support.

    Uses the rank-one identity ||u v^T|| = ||u|| ||v|| for the spectral norm,
    and maximizes beta1 only over transitions (s, s') with P(s, s') > 0.
    """
    Phi = features.Phi
    if Phi.shape[0] != chain.n_states:
        raise ValueError("feature map and chain disagree on the number of states")
    row_norms = np.linalg.norm(Phi, axis=1)
    beta0 = float(np.max(np.abs(chain.rewards) * row_norms[None, :]))
    beta2 = float(np.max(row_norms ** 2))
    beta1 = 0.0
    gamma = chain.gamma
    for s in range(chain.n_states):
        succ = np.flatnonzero(chain.P[s] > 0.0)
        diff = Phi[s][None, :] - gamma * Phi[succ]
        beta1 = max(beta1, row_norms[s] * float(np.linalg.norm(diff, axis=1).max()))
    return FeatureBounds(beta0=beta0, beta1=beta1, beta2=beta2)


FEATURE_FLOAT_FMT = "%.17g"


def save_features(features: FeatureMap, path) -> None:
    """One CSV row per state, 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        for row in features.Phi:
            fh.write(",".join(FEATURE_FLOAT_FMT % v for v in row) + "\n")


def load_features(path) -> FeatureMap:
    with open(path, "r") as fh:
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return FeatureMap(np.array(rows))
