"""Communication digraph among followers and two reference leaders.

Followers are numbered ``1..N`` and the two leaders ``N+1`` and ``N+2``.
``adjacency[i, j]`` is the weight of the edge ``j -> i`` and
``pinning[k][i]`` the weight of the edge ``leader k -> follower i``.
"""

from __future__ import annotations

import threading
import warnings
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

PIVOT_RATIO_TOL = 1e-10
# concurrent LAPACK calls on one shared factorization gave corrupted results under
# threaded sweeps; the solves are tiny, so serialize them
_SOLVE_LOCK = threading.Lock()


class GraphError(ValueError):
    """Malformed adjacency or pinning data."""


class SingularGraphError(GraphError):
    """The summed leader matrix is singular (some follower sees no leader)."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CommGraph:
    adjacency: np.ndarray
    pinning: np.ndarray  # shape (2, N)

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    @property
    def leader_ids(self) -> tuple[int, int]:
        n = self.n_followers
        return (n + 1, n + 2)

    @cached_property
    def laplacian(self) -> np.ndarray:
        return laplacian(self)

    @cached_property
    def phi_per_leader(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_followers
        return (phi(self, n + 1), phi(self, n + 2))

    @cached_property
    def phi_sum(self) -> np.ndarray:
        return _frozen(self.phi_per_leader[0] + self.phi_per_leader[1])

    @cached_property
    def _phi_sum_lu(self):
        with warnings.catch_warnings():
            # exact zero pivots are reported below with a graph-level reason
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(self.phi_sum, check_finite=True)
        d = np.abs(np.diag(lu))
        if d.max() == 0.0 or d.min() < PIVOT_RATIO_TOL * d.max():
            raise SingularGraphError(
                "sum of leader matrices is singular "
                f"(pivot ratio {d.min() / d.max() if d.max() else 0.0:.3e}); "
                "some follower has no directed path from a leader"
            )
        return lu, piv

    def solve_phi_sum(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``phi_sum @ x = rhs`` (rhs may be 1-D or have samples along axis 1)."""
        lu = self._phi_sum_lu
        with _SOLVE_LOCK:
            return scipy.linalg.lu_solve(lu, np.asarray(rhs, dtype=float))

    @cached_property
    def phi_sum_inverse(self) -> np.ndarray:
        return _frozen(self.solve_phi_sum(np.eye(self.n_followers)))

    def __repr__(self) -> str:
        return f"CommGraph(n_followers={self.n_followers}, edges={int((self.adjacency > 0).sum())})"


def build_graph(adjacency, pinning) -> CommGraph:
    """Validate and freeze a communication graph.

    ``pinning`` is a pair of length-N vectors, one per leader.
    """
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise GraphError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
    n = a.shape[0]
    if not np.all(np.isfinite(a)):
        raise GraphError("adjacency contains non-finite entries")
    neg = np.argwhere(a < 0)
    if neg.size:
        i, j = neg[0]
        raise GraphError(f"negative weight a[{i + 1},{j + 1}] = {a[i, j]}")
    diag = np.flatnonzero(np.diag(a))
    if diag.size:
        i = diag[0]
        raise GraphError(f"nonzero diagonal a[{i + 1},{i + 1}] = {a[i, i]}")

    if len(pinning) != 2:
        raise GraphError(f"expected pinning vectors for 2 leaders, got {len(pinning)}")
    g = np.zeros((2, n))
    for k, vec in enumerate(pinning):
        v = np.asarray(vec, dtype=float).ravel()
        if v.shape != (n,):
            raise GraphError(f"pinning vector for leader {n + 1 + k} has length {v.size}, expected {n}")
        if not np.all(np.isfinite(v)):
            raise GraphError(f"pinning vector for leader {n + 1 + k} has non-finite entries")
        bad = np.flatnonzero(v < 0)
        if bad.size:
            raise GraphError(f"negative pinning gain g[{bad[0] + 1},{n + 1 + k}] = {v[bad[0]]}")
        g[k] = v
    return CommGraph(_frozen(a), _frozen(g))


def laplacian(g: CommGraph) -> np.ndarray:
    a = g.adjacency
    return _frozen(np.diag(a.sum(axis=1)) - a)


def phi(g: CommGraph, leader: int) -> np.ndarray:
    """Half the Laplacian plus the pinning diagonal of ``leader`` (N+1 or N+2)."""
    n = g.n_followers
    if leader not in (n + 1, n + 2):
        raise GraphError(f"leader index must be {n + 1} or {n + 2}, got {leader}")
    return _frozen(0.5 * g.laplacian + np.diag(g.pinning[leader - n - 1]))


def check_reachability(g: CommGraph) -> bool:
    """True iff every follower has a directed path from at least one leader."""
    n = g.n_followers
    # node n is a virtual source feeding both leaders
    seen = np.zeros(n, dtype=bool)
    queue = deque(int(i) for i in np.flatnonzero((g.pinning > 0).any(axis=0)))
    for i in queue:
        seen[i] = True
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(g.adjacency[:, j] > 0):
            if not seen[i]:
                seen[i] = True
                queue.append(int(i))
    return bool(seen.all())


def check_lemma1(g: CommGraph) -> bool:
    """Nonsingular summed leader matrix with spectrum in the open right half-plane.

    For symmetric graphs the symmetric part must also be positive definite.
    """
    m = g.phi_sum
    try:
        g._phi_sum_lu
    except SingularGraphError:
        return False
    if np.linalg.eigvals(m).real.min() <= 0.0:
        return False
    if np.allclose(g.adjacency, g.adjacency.T):
        return bool(np.linalg.eigvalsh(0.5 * (m + m.T)).min() > 0.0)
    return True


def pinned_leader_term(g: CommGraph, leader_values) -> np.ndarray:
    """Sum over leaders of ``G_k x_k`` for scalar or per-follower leader values.

    For scalar ``x_k`` this equals ``Phi_k (1_N x_k)`` because the Laplacian
    annihilates constant vectors.
    """
    n = g.n_followers
    if len(leader_values) != 2:
        raise GraphError("need exactly two leader values")
    out = 0.0
    for k in range(2):
        x = np.asarray(leader_values[k], dtype=float)
        if x.ndim == 0:
            x = np.full(n, float(x))
        elif x.shape[0] != n:
            raise GraphError(f"leader value vector has length {x.shape[0]}, expected {n}")
        gk = g.pinning[k].reshape((n,) + (1,) * (x.ndim - 1))
        out = out + gk * x
    return out


def containment_reference(g: CommGraph, leader_values) -> np.ndarray:
    """Point inside the leaders' convex hull that the followers converge to.

    Leader values may be scalars or per-follower arrays (shape ``(N,)`` or
    ``(N, samples)``).
    """
    return g.solve_phi_sum(pinned_leader_term(g, leader_values))
