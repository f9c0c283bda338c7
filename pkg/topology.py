from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from errors import ConvergenceError, InvalidArgumentError


class Graph:
    """
    Weighted undirected communication graph.

    Arguments:
        adj (array-like): N×N weighted adjacency matrix, symmetric, zero diagonal, entries >= 0
    """
    def __init__(self, adj):
        adj = np.array(adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InvalidArgumentError(f"adjacency must be square, got shape {adj.shape}")
        if not np.allclose(adj, adj.T, rtol=0.0, atol=1e-12):
            raise InvalidArgumentError("adjacency must be symmetric (undirected graph)")
        if np.any(np.diag(adj) != 0.0):
            raise InvalidArgumentError("adjacency must have a zero diagonal")
        if np.any(adj < 0.0):
            raise InvalidArgumentError("adjacency weights must be non-negative")
        self.adj = adj
        self.N = adj.shape[0]

    def neighbors(self, i):
        return np.flatnonzero(self.adj[i] > 0.0)

    def degree(self, i):
        return len(self.neighbors(i))

    def edges(self):
        """1-based [i, j, w] edge list, i < j"""
        rows, cols = np.nonzero(np.triu(self.adj))
        return [[int(i) + 1, int(j) + 1, float(self.adj[i, j])] for i, j in zip(rows, cols)]

    def __repr__(self):
        return f"Graph(N={self.N}, edges={len(self.edges())})"


@dataclass(frozen=True)
class EstimationOperator:
    H: np.ndarray


def graph_from_edges(N, edges):
    """
    config 형식의 edge list로 Graph를 만듭니다.

    Arguments:
        N (int): node 수
        edges (list): [[i, j], ...] 또는 [[i, j, w], ...], 1-based node index, w 기본값 1.0
    """
    if N < 1:
        raise InvalidArgumentError(f"graph needs at least one node, got N={N}")
    adj = np.zeros((N, N))
    for edge in edges:
        if len(edge) not in (2, 3):
            raise InvalidArgumentError(f"edge must be [i, j] or [i, j, w], got {edge}")
        i, j = int(edge[0]) - 1, int(edge[1]) - 1
        w = float(edge[2]) if len(edge) == 3 else 1.0
        if not (0 <= i < N and 0 <= j < N) or i == j:
            raise InvalidArgumentError(f"invalid edge {edge} for N={N}")
        adj[i, j] = adj[j, i] = w
    return Graph(adj)


def laplacian(g):
    L = -g.adj.copy()
    # 대각 성분을 off-diagonal 합으로 채워 row sum 0을 보장
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def is_connected(g):
    """breadth-first traversal from node 0 over positive-weight edges"""
    if g.N == 0:
        return False
    seen = {0}
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in g.neighbors(node):
            if nb not in seen:
                seen.add(int(nb))
                queue.append(int(nb))
    return len(seen) == g.N


def algebraic_connectivity(g):
    """λ₂(L), used to cross-check is_connected"""
    if g.N < 2:
        return 0.0
    return float(eig_sym(laplacian(g))[1])


def estimation_operator(g):
    """L⊗I_N + diag(a11, ..., a1N, a21, ..., aNN)"""
    N = g.N
    H = np.kron(laplacian(g), np.eye(N)) + np.diag(g.adj.ravel())
    return EstimationOperator(H=H)


def leader_follower_residual(adj, y_own, y_nb, x):
    """
    r[i, j] = Σ_m a_im·(y_own[i, j] − y_nb[m, j]) + a_ij·(y_own[i, j] − x[j])

    Arguments:
        adj (ndarray): N×N adjacency of the active graph
        y_own (ndarray): (N, N, n) estimates each player uses for itself
        y_nb (ndarray): (N, N, n) estimates as seen by the neighbors
        x (ndarray): (N, n) leader signal (true or sampled actions)
    """
    deg = adj.sum(axis=1)
    r = deg[:, None, None] * y_own - np.einsum('im,mjk->ijk', adj, y_nb)
    r += adj[:, :, None] * (y_own - x[None, :, :])
    return r


@lru_cache(maxsize=None)
def _round_robin(n):
    """
    disjoint (p, q) pair rounds covering every pair once per sweep
    (tournament ordering, dummy index n when n is odd)
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[k], players[m - 1 - k]) for k in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            P = np.array([p for p, _ in pairs])
            Q = np.array([q for _, q in pairs])
            rounds.append((P, Q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def eig_sym(M, tol=1e-12, vectors=False, max_sweeps=60):
    """
    Cyclic Jacobi eigensolver for symmetric matrices.

    Every sweep visits all (p, q) pairs in round-robin order; within one round
    the pairs are disjoint so their rotations are applied together.

    Arguments:
        M (array-like): symmetric matrix, symmetrized internally as (M + Mᵀ)/2
        tol (float): stop when the off-diagonal Frobenius norm is below tol·‖M‖_F
        vectors (bool): also return eigenvectors as columns

    Returns:
        ascending eigenvalues, and the eigenvector matrix V when vectors=True
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"eig_sym needs a square matrix, got shape {A.shape}")
    A = (A + A.T) / 2.0
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)

    def _finish():
        w = np.diag(A).copy()
        order = np.argsort(w, kind="stable")
        if vectors:
            return w[order], V[:, order]
        return w[order]

    if n <= 1 or scale == 0.0:
        return _finish()

    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            return _finish()
        for P, Q in _round_robin(n):
            app, aqq, apq = A[P, P], A[Q, Q], A[P, Q]
            active = apq != 0.0
            safe = np.where(active, apq, 1.0)
            theta = np.where(active, (aqq - app) / (2.0 * safe), 0.0)
            with np.errstate(over="ignore"):
                t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(1.0 + theta * theta))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            Ap, Aq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = Ap * c - Aq * s
            A[:, Q] = Ap * s + Aq * c
            Ap, Aq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * Ap - s[:, None] * Aq
            A[Q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            if vectors:
                Vp, Vq = V[:, P].copy(), V[:, Q].copy()
                V[:, P] = Vp * c - Vq * s
                V[:, Q] = Vp * s + Vq * c
        A = (A + A.T) / 2.0

    off = np.linalg.norm(A - np.diag(np.diag(A)))
    if off <= tol * scale:
        return _finish()
    raise ConvergenceError(f"Jacobi sweeps did not converge (off-diagonal norm {off:.3e})", residual=off)


def min_eig(M):
    return float(eig_sym(M)[0])


def max_eig(M):
    return float(eig_sym(M)[-1])
