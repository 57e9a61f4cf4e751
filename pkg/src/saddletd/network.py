"""Communication graphs and doubly stochastic mixing matrices.

Agents average their primal iterates through a symmetric mixing matrix
supported on a connected undirected graph; the second largest absolute
eigenvalue sigma2 controls how fast disagreement contracts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._io import load_matrix_csv, write_matrix_csv

STOCHASTICITY_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Connected undirected graph without self-loops; edges stored once as (i, j), i < j."""

    n_nodes: int
    edges: frozenset

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        edges = frozenset((min(i, j), max(i, j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i},{j}) out of range")
        if not _connected(self.n_nodes, edges):
            raise ValueError("graph is not connected")

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_nodes, self.n_nodes))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A


def _connected(n: int, edges) -> bool:
    if n == 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def ring(n: int) -> Graph:
    """Cycle over n nodes (single edge for n = 2, empty for n = 1)."""
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return Graph(1, frozenset())
    if n == 2:
        return Graph(2, frozenset({(0, 1)}))
    return Graph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def complete(n: int) -> Graph:
    if n < 1:
        raise ValueError("n must be positive")
    return Graph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


def erdos_renyi(n: int, p: float, seed: int, max_attempts: int = 1000) -> Graph:
    """G(n, p) conditioned on connectivity; resamples with fresh sub-seeds."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0,1], got {p}")
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(max_attempts):
        rng = np.random.default_rng(child)
        mask = rng.random((n, n)) < p
        edges = frozenset((i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j])
        if _connected(n, edges):
            return Graph(n, edges)
    raise RuntimeError(
        f"no connected graph in {max_attempts} attempts (n={n}, p={p}); increase p"
    )


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic matrix supported on a graph, with its sigma2."""

    W: np.ndarray
    sigma2: float

    def __post_init__(self):
        W = np.ascontiguousarray(np.asarray(self.W, dtype=float))
        object.__setattr__(self, "W", W)
        n = W.shape[0]
        if W.shape != (n, n):
            raise ValueError("W must be square")
        if W.min() < 0:
            raise ValueError("W has negative entries")
        if np.abs(W.sum(axis=0) - 1.0).max() > STOCHASTICITY_TOL:
            raise ValueError("columns of W must sum to 1")
        if np.abs(W.sum(axis=1) - 1.0).max() > STOCHASTICITY_TOL:
            raise ValueError("rows of W must sum to 1")
        if not (0.0 <= self.sigma2 < 1.0):
            raise ValueError(f"sigma2 must be in [0,1) for a connected graph, got {self.sigma2}")

    @property
    def n_nodes(self) -> int:
        return self.W.shape[0]


def laplacian_mixing(graph: Graph) -> MixingMatrix:
    """W = I - L / (delta_max + 1) with L the combinatorial Laplacian.

    Symmetric and doubly stochastic by construction, with diagonal at least
    1/(delta_max + 1) > 0; sigma2 is the second largest absolute eigenvalue
    from a symmetric eigensolve (defined as 0 for a single node).
    """
    n = graph.n_nodes
    if n == 1:
        return MixingMatrix(W=np.ones((1, 1)), sigma2=0.0)
    deg = graph.degrees().astype(float)
    L = np.diag(deg) - graph.adjacency()
    W = np.eye(n) - L / (deg.max() + 1.0)
    eigs = np.abs(np.linalg.eigvalsh(W))
    eigs.sort()
    sigma2 = float(eigs[-2])
    return MixingMatrix(W=W, sigma2=sigma2)


def spectral_gap(mixing: MixingMatrix) -> float:
    """1 - sigma2: larger means faster consensus averaging."""
    return 1.0 - mixing.sigma2


# -- persistence ----------------------------------------------------------

def save_graph(graph: Graph, path) -> None:
    """Edge list `i j` per line, sorted; first line `n <n_nodes>`."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"n {graph.n_nodes}\n")
        for i, j in sorted(graph.edges):
            fh.write(f"{i} {j}\n")


def load_graph(path) -> Graph:
    edges = set()
    n_nodes = None
    with open(path, "r") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "n":
                n_nodes = int(parts[1])
            else:
                edges.add((int(parts[0]), int(parts[1])))
    if n_nodes is None:
        raise ValueError(f"{path} is missing the `n <n_nodes>` header line")
    return Graph(n_nodes, frozenset(edges))


def save_mixing(mixing: MixingMatrix, path) -> None:
    write_matrix_csv(path, mixing.W)


def load_mixing(path) -> MixingMatrix:
    W = load_matrix_csv(path)
    if W.shape[0] == 1:
        return MixingMatrix(W=W, sigma2=0.0)
    eigs = np.abs(np.linalg.eigvalsh(0.5 * (W + W.T)))
    eigs.sort()
    return MixingMatrix(W=W, sigma2=float(eigs[-2]))
