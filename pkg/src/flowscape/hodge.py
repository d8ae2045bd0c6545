"""Combinatorial Hodge operators and the weighted least-squares potential.

Given a skew-symmetric net-flow matrix Y on a weighted undirected graph, the
scalar potential s minimizes sum over edges of W_ij ((s_j - s_i) - Y_ij)^2.
Its normal equation is L0 s = -div_W(Y), where L0 is the weighted graph
Laplacian (weighted degree on the diagonal, -W_ij off it) and div_W is the
divergence taken in the weighted inner product <X, Y> = sum W_ij X_ij Y_ij.
The returned potential is the minimal-norm solution: mean-zero on every
connected component, which is exactly the Moore-Penrose solve since the
Laplacian kernel is spanned by per-component indicator vectors.

The standalone ``div`` operator is the unweighted per-vertex sum; the solve
path uses the weighted form (they coincide for binary weights). L0 is never
pseudo-inverted explicitly: the default solver is conjugate gradients with
the right-hand side and iterates projected mean-zero per component each
iteration, and a dense eigendecomposition route is kept as an oracle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (
    DimensionMismatch,
    EdgeNotInSystem,
    EmptyEdgeSet,
    SolverDiverged,
)
from .grid import DistanceMatrix, ODSnapshot, SpatialGrid


class SolverMethod(enum.Enum):
    dense_eigen = "dense_eigen"
    deflated_cg = "deflated_cg"


@dataclass(frozen=True)
class SolverConfig:
    """Potential solver settings.

    ``max_iter=None`` resolves to 10 * N at solve time.
    """

    method: SolverMethod = SolverMethod.deflated_cg
    rel_tol: float = 1e-10
    max_iter: int | None = None

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise DimensionMismatch(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise DimensionMismatch(f"max_iter must be >= 1, got {self.max_iter}")


class EdgeFlow:
    """Skew-symmetric N x N edge flow (net trips per hour per ordered pair)."""

    def __init__(self, Y, grid: SpatialGrid | None = None):
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise DimensionMismatch(f"edge flow must be square, got {Y.shape}")
        if not bool((Y == -Y.T).all()):
            raise DimensionMismatch("edge flow must be exactly skew-symmetric")
        if grid is not None and grid.n != Y.shape[0]:
            raise DimensionMismatch(f"flow size {Y.shape[0]} != grid n {grid.n}")
        self.Y = Y
        self.Y.setflags(write=False)
        self.grid = grid

    @property
    def n(self) -> int:
        return self.Y.shape[0]


class EdgeSystem:
    """Edge set, weights, Laplacian, and component structure of the fit.

    Built from a symmetric weight matrix with entries in [0, 1] and zero
    diagonal; the edge set is every unordered pair with positive weight.
    Immutable after construction and shareable across workers.
    """

    def __init__(self, W, grid: SpatialGrid | None = None):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DimensionMismatch(f"weight matrix must be square, got {W.shape}")
        if not np.array_equal(W, W.T):
            raise DimensionMismatch("weight matrix must be symmetric")
        if np.any(np.diag(W) != 0.0):
            raise DimensionMismatch("weight matrix diagonal must be zero")
        if np.any(W < 0.0) or np.any(W > 1.0):
            raise DimensionMismatch("weights must lie in [0, 1]")
        if grid is not None and grid.n != W.shape[0]:
            raise DimensionMismatch(f"weights size {W.shape[0]} != grid n {grid.n}")
        mask = W > 0.0
        if not mask.any():
            raise EmptyEdgeSet("weighting rule produced no edges")
        self.W = W
        self.W.setflags(write=False)
        self.mask = mask
        self.mask.setflags(write=False)
        self.grid = grid
        adj = sparse.csr_matrix(W)
        degrees = np.asarray(W.sum(axis=1)).ravel()
        self.laplacian = (sparse.diags(degrees) - adj).tocsr()
        self.n_components, self.component_labels = csgraph.connected_components(
            adj, directed=False
        )

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.mask.sum()) // 2

    def edges(self) -> np.ndarray:
        """(n_edges, 2) array of unordered edges with i < j."""
        i, j = np.nonzero(np.triu(self.mask, k=1))
        return np.column_stack([i, j])

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.mask[i, j])

    def component_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.component_labels == c) for c in range(self.n_components)]


@dataclass(frozen=True)
class PotentialField:
    """Scalar potential for one slice, mean-zero per connected component.

    ``residual_norm`` is ||L0 s + div_W(Y)||_2 / ||div_W(Y)||_2, reported as
    0 when div_W(Y) = 0.
    """

    s: np.ndarray
    residual_norm: float
    component_means: np.ndarray
    grid: SpatialGrid | None = None
    method: SolverMethod = SolverMethod.deflated_cg
    iterations: int = 0
    n_components: int = 1

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        self.s.setflags(write=False)


WeightRule = Callable[[int, int, float], float]


def net_flow(snapshot: ODSnapshot) -> EdgeFlow:
    """Net flow Y = M - M^T; exactly skew-symmetric by construction."""
    return EdgeFlow(snapshot.M - snapshot.M.T, grid=snapshot.grid)


def build_edge_system(
    d: DistanceMatrix, w_rule: WeightRule, grid: SpatialGrid | None = None
) -> EdgeSystem:
    """Evaluate a weighting rule on every unordered pair and assemble the
    edge set, Laplacian, and connected components.

    ``w_rule(i, j, d_ij)`` must return a weight in [0, 1]; pairs with
    positive weight become edges.
    """
    n = d.n
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w = float(w_rule(i, j, d.d[i, j]))
            if not 0.0 <= w <= 1.0:
                raise DimensionMismatch(f"weight rule returned {w} for pair ({i}, {j})")
            W[i, j] = W[j, i] = w
    return EdgeSystem(W, grid=grid)


def grad(s, system: EdgeSystem) -> EdgeFlow:
    """Combinatorial gradient: (grad s)(i, j) = s_j - s_i on edges of E."""
    if isinstance(s, PotentialField):
        s = s.s
    s = np.asarray(s, dtype=float)
    if s.shape != (system.n,):
        raise DimensionMismatch(f"potential shape {s.shape} != ({system.n},)")
    G = np.where(system.mask, s[None, :] - s[:, None], 0.0)
    return EdgeFlow(G, grid=system.grid)


def curl(flow: EdgeFlow, system: EdgeSystem, triangle: Sequence[int]) -> float:
    """Combinatorial curl on a triangle: Y_ij + Y_jk + Y_ki.

    All three edges must belong to the edge set.
    """
    i, j, k = (int(v) for v in triangle)
    for a, b in ((i, j), (j, k), (k, i)):
        if not system.has_edge(a, b):
            raise EdgeNotInSystem(f"edge ({a}, {b}) not in edge set")
    Y = flow.Y
    return float(Y[i, j] + Y[j, k] + Y[k, i])


def div(flow: EdgeFlow, system: EdgeSystem) -> np.ndarray:
    """Unweighted divergence: per-vertex sum of Y_ij over incident edges."""
    _check_flow(flow, system)
    return (flow.Y * system.mask).sum(axis=1)


def weighted_div(flow: EdgeFlow, system: EdgeSystem) -> np.ndarray:
    """Divergence in the weighted inner product: sum_j W_ij Y_ij.

    This is the form the normal equation requires; it reduces to ``div``
    when all weights are 0 or 1.
    """
    _check_flow(flow, system)
    return (system.W * flow.Y).sum(axis=1)


def flow_inner(a: EdgeFlow, b: EdgeFlow, system: EdgeSystem) -> float:
    """Weighted inner product over unordered edges: sum_E W_ij a_ij b_ij."""
    _check_flow(a, system)
    _check_flow(b, system)
    return 0.5 * float((system.W * a.Y * b.Y).sum())


def flow_norm_sq(a: EdgeFlow, system: EdgeSystem) -> float:
    return flow_inner(a, a, system)


def solve_potential(
    flow: EdgeFlow, system: EdgeSystem, config: SolverConfig | None = None
) -> PotentialField:
    """Minimal-norm solution of L0 s = -div_W(Y).

    Each connected component is solved independently; isolated vertices get
    s = 0; every component of s is shifted to zero mean, which realizes the
    Moore-Penrose pseudoinverse without materializing it.
    """
    config = config or SolverConfig()
    _check_flow(flow, system)
    b = -weighted_div(flow, system)
    n = system.n
    max_iter = config.max_iter if config.max_iter is not None else 10 * n
    s = np.zeros(n)
    iterations = 0
    for idx in system.component_indices():
        if idx.size == 1:
            continue  # isolated vertex: s = 0 by Moore-Penrose semantics
        if idx.size == n:
            L_c, b_c = system.laplacian, b
        else:
            L_c = system.laplacian[idx][:, idx]
            b_c = b[idx]
        if config.method is SolverMethod.dense_eigen:
            s_c = _dense_pinv_solve(L_c, b_c)
        else:
            s_c, used = _deflated_cg(L_c, b_c, config.rel_tol, max_iter)
            iterations += used
        s_c = s_c - s_c.mean()
        s[idx] = s_c
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        residual = 0.0
    else:
        residual = float(np.linalg.norm(system.laplacian @ s - b)) / b_norm
    means = np.array([s[idx].mean() for idx in system.component_indices()])
    return PotentialField(
        s=s,
        residual_norm=residual,
        component_means=means,
        grid=system.grid,
        method=config.method,
        iterations=iterations,
        n_components=system.n_components,
    )


def gradient_projection(
    flow: EdgeFlow, system: EdgeSystem, config: SolverConfig | None = None
) -> tuple[EdgeFlow, EdgeFlow]:
    """Split Y into its gradient part G = grad(s) and the residual R = Y - G
    on the edge set; the two are W-orthogonal and G + R = Y on E."""
    s = solve_potential(flow, system, config)
    G = grad(s, system)
    R = EdgeFlow(np.where(system.mask, flow.Y - G.Y, 0.0), grid=system.grid)
    return G, R


def _check_flow(flow: EdgeFlow, system: EdgeSystem):
    if flow.n != system.n:
        raise DimensionMismatch(f"flow size {flow.n} != system size {system.n}")


def _dense_pinv_solve(L, b: np.ndarray) -> np.ndarray:
    """Moore-Penrose solve by full symmetric eigendecomposition.

    Eigenvalues above eps * m * lambda_max are inverted; the rest belong to
    the (numerical) kernel and are dropped.
    """
    dense = L.toarray() if sparse.issparse(L) else np.asarray(L, dtype=float)
    lam, V = np.linalg.eigh(dense)
    cutoff = np.finfo(float).eps * dense.shape[0] * lam[-1]
    inv = np.where(lam > cutoff, 1.0, 0.0) / np.where(lam > cutoff, lam, 1.0)
    return V @ (inv * (V.T @ b))


def _deflated_cg(L, b: np.ndarray, rel_tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Conjugate gradients on one connected component of the Laplacian.

    The kernel on a component is the constant vector, so the right-hand
    side and the iterates are projected mean-zero every iteration; that
    deflation keeps the solve inside the image of L.
    """
    b = b - b.mean()
    b_norm = math.sqrt(float(b @ b))
    x = np.zeros_like(b)
    if b_norm == 0.0:
        return x, 0
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iter + 1):
        Ap = L @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:  # numerically outside the SPD subspace
            raise SolverDiverged(f"CG breakdown at iteration {it} (p'Ap = {pAp})")
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        x -= x.mean()
        r -= r.mean()
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= rel_tol * b_norm:
            return x, it
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverDiverged(
        f"CG did not reach rel_tol={rel_tol} within {max_iter} iterations"
    )
