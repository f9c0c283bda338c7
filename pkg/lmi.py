"""
Mean-square stability conditions of the sampled, event-triggered estimator
under semi-Markov switching, plus a Kronecker Lyapunov solver.

Stacking: the estimation error vector is ordered (player i, estimate j,
component k), component-minor, dimension D = N²n. An N×N decision matrix X
acts on the estimate index, lifted as I_N⊗X⊗I_n; for n = 1 this is I_{Nn}⊗X.
"""
from dataclasses import dataclass, replace
from itertools import product

import numpy as np
from scipy import linalg

from errors import InvalidArgumentError, InvalidInstanceError, LyapunovError
from switching import rate_vertices
from topology import eig_sym, estimation_operator
from trigger import phi_weight

STRICT_MARGIN = 1e-9
PD_TOL = 1e-10


@dataclass
class Theorem4Instance:
    """
    Arguments:
        graphs (list): one Graph per mode
        K (array): per-mode scalar gains K(m)
        P (list): per-mode N×N symmetric PD ℙ(m)
        Q, U, R (ndarray): N×N symmetric PD
        S (ndarray): D×D coupling 𝕊
        Phi (ndarray): N×N symmetric PD trigger weight
        zeta (array): per-player trigger thresholds (Λ = diag ζ)
        h, epsilon (float): sampling period and time-scale parameter
        rate_intervals (ndarray): s×s×2 transition-rate intervals [lo, hi]
        n (int): action dimension
    """
    graphs: list
    K: np.ndarray
    P: list
    Q: np.ndarray
    U: np.ndarray
    R: np.ndarray
    S: np.ndarray
    Phi: np.ndarray
    zeta: np.ndarray
    h: float
    epsilon: float
    rate_intervals: np.ndarray
    n: int = 1

    def __post_init__(self):
        self.K = np.atleast_1d(np.asarray(self.K, dtype=float))
        self.P = [np.asarray(p, dtype=float) for p in self.P]
        for name in ("Q", "U", "R", "S", "Phi"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        self.rate_intervals = np.asarray(self.rate_intervals, dtype=float)

    @property
    def s(self):
        return len(self.graphs)

    @property
    def N(self):
        return self.graphs[0].N

    @property
    def D(self):
        return self.N * self.N * self.n

    @property
    def Lambda(self):
        return np.diag(self.zeta)

    def validate(self):
        N, s, D = self.N, self.s, self.D
        if len(self.K) != s or len(self.P) != s:
            raise InvalidInstanceError(f"need one K(m) and one P(m) per mode ({s})")
        if any(g.N != N for g in self.graphs):
            raise InvalidInstanceError("all mode graphs must have the same node count")
        if self.rate_intervals.shape != (s, s, 2):
            raise InvalidInstanceError(f"rate intervals must be {s}x{s}x2, got {self.rate_intervals.shape}")
        if self.zeta.shape != (N,):
            raise InvalidInstanceError(f"need {N} zeta values, got {self.zeta.shape}")
        if self.S.shape != (D, D):
            raise InvalidInstanceError(f"S must be {D}x{D}, got {self.S.shape}")
        if not (self.h > 0 and self.epsilon > 0):
            raise InvalidInstanceError("h and epsilon must be positive")
        named = [(f"P({m + 1})", p) for m, p in enumerate(self.P)]
        named += [("Q", self.Q), ("U", self.U), ("R", self.R), ("Phi", self.Phi)]
        for name, M in named:
            if M.shape != (N, N):
                raise InvalidInstanceError(f"{name} must be {N}x{N}, got {M.shape}")
            if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
                raise InvalidInstanceError(f"{name} must be symmetric")
            if eig_sym(M)[0] <= PD_TOL:
                raise InvalidInstanceError(f"{name} must be positive definite")
        return self


def lift(inst, X):
    """I_N⊗X⊗I_n"""
    return np.kron(np.kron(np.eye(inst.N), X), np.eye(inst.n))


def selectors(D):
    """Ⅱ₁..Ⅱ₄, each D×4D"""
    eye = np.eye(D)
    zero = np.zeros((D, D))
    return [np.hstack([eye if k == b else zero for k in range(4)]) for b in range(4)]


def build_H(g_mode, n=1):
    """ℋ(m) = (L(m)⊗I_N + A₀(m))⊗I_n"""
    return np.kron(estimation_operator(g_mode).H, np.eye(n))


def build_B(inst, m):
    """𝔅(m) = −K(m)·ℋ(m)(Ⅱ₂ + Ⅱ₄); m is 0-based"""
    _, II2, _, II4 = selectors(inst.D)
    return -inst.K[m] * build_H(inst.graphs[m], inst.n) @ (II2 + II4)


def xi1_terms(inst, m, rate_vertex):
    """the seven summands of Ξ₁(m), keyed by name (m 0-based)"""
    D = inst.D
    II1, II2, II3, II4 = selectors(D)
    rate_vertex = np.asarray(rate_vertex, dtype=float)
    if rate_vertex.shape != (inst.s,):
        raise InvalidArgumentError(f"rate_vertex must have {inst.s} entries, got {rate_vertex.shape}")

    H = build_H(inst.graphs[m], inst.n)
    B = -inst.K[m] * H @ (II2 + II4)
    Phi_full = phi_weight(inst.Phi, inst.n)
    Pm = lift(inst, inst.P[m])

    coupling = sum(rate_vertex[a] * lift(inst, inst.P[a]) for a in range(inst.s))
    rc_left = np.vstack([II2 - II3, II1 - II2])
    rc_mid = np.block([[lift(inst, inst.R), inst.S], [inst.S.T, lift(inst, inst.R)]])
    trig = H.T @ np.kron(inst.Lambda, Phi_full) @ H

    terms = {
        "rate": II1.T @ coupling @ II1,
        "Q": -II3.T @ lift(inst, inst.Q) @ II3,
        "QU": II1.T @ lift(inst, inst.Q + inst.U) @ II1,
        "Phi": -II4.T @ np.kron(np.eye(inst.N), Phi_full) @ II4,
        "PB": II1.T @ Pm @ B + B.T @ Pm @ II1,
        "reciprocal": -rc_left.T @ rc_mid @ rc_left,
        "trigger": (II2 + II4).T @ trig @ (II2 + II4),
    }
    for name, T in terms.items():
        if T.shape != (4 * D, 4 * D):
            raise InvalidArgumentError(f"term {name} has shape {T.shape}, expected {(4 * D, 4 * D)}")
    return terms


def build_xi1(inst, m, rate_vertex):
    M = sum(xi1_terms(inst, m, rate_vertex).values())
    asym = np.linalg.norm(M - M.T)
    assert asym < 1e-10 * max(1.0, np.linalg.norm(M)), f"Xi1 asymmetry {asym:.3e}"
    return (M + M.T) / 2.0


def _inverse_pd(R):
    w, V = eig_sym(R, vectors=True)
    if w[0] <= PD_TOL:
        raise InvalidInstanceError(f"R must be positive definite (min eigenvalue {w[0]:.3e})")
    return (V / w) @ V.T


def check_condition_19(inst, m, rate_vertex):
    """[[Ξ₁(m), (h/ε)𝔅(m)ᵀ], [(h/ε)𝔅(m), −(I⊗ℝ)⁻¹]] ≺ 0"""
    R_inv = _inverse_pd(inst.R)
    xi1 = build_xi1(inst, m, rate_vertex)
    B = build_B(inst, m)
    c = inst.h / inst.epsilon
    M = np.block([[xi1, c * B.T], [c * B, -lift(inst, R_inv)]])
    top = float(eig_sym(M)[-1])
    return {"feasible": bool(top < -STRICT_MARGIN), "max_eig": top}


def check_condition_20(inst):
    """[[I⊗ℝ, 𝕊], [𝕊ᵀ, I⊗ℝ]] ≻ 0"""
    R_full = lift(inst, inst.R)
    M = np.block([[R_full, inst.S], [inst.S.T, R_full]])
    low = float(eig_sym(M)[0])
    return {"feasible": bool(low > STRICT_MARGIN), "min_eig": low}


def verify_theorem4(inst):
    """
    Condition (19) at every mode and every vertex of the rate intervals,
    plus condition (20).
    """
    inst.validate()
    modes = []
    worst = -np.inf
    for m in range(inst.s):
        vertices = []
        for vertex in rate_vertices(inst.rate_intervals, m):
            verdict = check_condition_19(inst, m, vertex)
            vertices.append({"rates": vertex.tolist(), **verdict})
        mode_worst = max(v["max_eig"] for v in vertices)
        worst = max(worst, mode_worst)
        modes.append({
            "mode": m + 1,
            "feasible": all(v["feasible"] for v in vertices),
            "worst_max_eig": mode_worst,
            "vertices": vertices,
        })
    cond20 = check_condition_20(inst)
    return {
        "modes": modes,
        "condition_20": cond20,
        "worst_max_eig": worst,
        "feasible": bool(all(md["feasible"] for md in modes) and cond20["feasible"]),
    }


def solve_lyapunov(H, Q):
    """
    P with PH + HᵀP = −Q, from (Hᵀ⊗I + I⊗Hᵀ)·vec(P) = −vec(Q) (column-major vec)
    solved by LU with partial pivoting.
    """
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if H.ndim == 0:
        H = H.reshape(1, 1)
    if Q.ndim == 0:
        Q = Q.reshape(1, 1)
    n = H.shape[0]
    if H.shape != (n, n) or Q.shape != (n, n):
        raise InvalidArgumentError(f"H and Q must be square of equal size, got {H.shape}, {Q.shape}")

    I = np.eye(n)
    A = np.kron(H.T, I) + np.kron(I, H.T)
    lu, piv = linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-14 * max(pivots.max(), 1.0):
        raise LyapunovError("singular Lyapunov operator: H has eigenvalues with λi + λj = 0")
    p = linalg.lu_solve((lu, piv), -Q.ravel(order="F"))
    P = p.reshape(n, n, order="F")
    P = (P + P.T) / 2.0

    residual = np.linalg.norm(P @ H + H.T @ P + Q)
    if residual > 1e-10 * max(np.linalg.norm(Q), 1e-300):
        raise LyapunovError(f"Lyapunov residual {residual:.3e} above tolerance")
    if eig_sym(P)[0] <= 0.0:
        raise LyapunovError("solution is not positive definite: H is not Hurwitz")
    return P


def _scaled(base, p=None, q=None, u=None, r=None, phi=None, k=None):
    N = base.N
    eye = np.eye(N)
    changes = {}
    if p is not None:
        changes["P"] = [p * eye for _ in range(base.s)]
    if q is not None:
        changes["Q"] = q * eye
    if u is not None:
        changes["U"] = u * eye
    if r is not None:
        changes["R"] = r * eye
    if phi is not None:
        changes["Phi"] = phi * eye
    if k is not None:
        changes["K"] = np.full(base.s, float(k))
    return replace(base, **changes)


def worst_condition_19(inst):
    return max(
        check_condition_19(inst, m, vertex)["max_eig"]
        for m in range(inst.s)
        for vertex in rate_vertices(inst.rate_intervals, m)
    )


def heuristic_search_theorem4(base, grid):
    """
    Scan identity-template multiples for ℙ(m), ℚ, 𝕌, ℝ, Φ and a common K(m).

    Arguments:
        base (Theorem4Instance): supplies graphs, 𝕊, ζ, h, ε and rates
        grid (dict): optional keys P, Q, U, R, Phi, K -> lists of scalars;
            a missing key keeps the base matrix

    Returns:
        best instance (least worst-case max eigenvalue of (19)), report dict
    """
    keys = ("P", "Q", "U", "R", "Phi", "K")
    unknown = set(grid) - set(keys)
    if unknown:
        raise InvalidArgumentError(f"unknown grid keys {sorted(unknown)}")
    axes = [list(grid.get(key, [None])) for key in keys]
    if not any(key in grid for key in keys) or any(len(a) == 0 for a in axes):
        raise InvalidArgumentError("heuristic search grid is empty")

    best, best_val, best_point = None, np.inf, None
    tried = 0
    for point in product(*axes):
        cand = _scaled(base, *point)
        try:
            cand.validate()
        except InvalidInstanceError:
            continue
        tried += 1
        val = worst_condition_19(cand)
        if val < best_val:
            best, best_val, best_point = cand, val, point

    if best is None:
        raise InvalidInstanceError("no grid point produced a valid instance")
    cond20 = check_condition_20(best)
    report = {
        "tried": tried,
        "best": {k: v for k, v in zip(keys, best_point) if v is not None},
        "worst_max_eig": float(best_val),
        "condition_20": cond20,
        "feasible": bool(best_val < -STRICT_MARGIN and cond20["feasible"]),
    }
    return best, report
