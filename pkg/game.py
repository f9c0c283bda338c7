from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from errors import ConfigError, ConvergenceError, InvalidArgumentError
from switching import make_rng
from topology import eig_sym


@dataclass
class GameDefinition:
    """
    Noncooperative game over stacked actions x = col(x_1, ..., x_N), x_i ∈ ℝⁿ.
    Players are 0-based everywhere in code.

    cost(i, x) -> float, grad(i, x) -> n-vector ∂f_i/∂x_i; x is the full N·n profile.
    """
    N: int
    n: int
    cost: Callable[[int, np.ndarray], float]
    grad: Callable[[int, np.ndarray], np.ndarray]
    mu: float
    lipschitz: Sequence[float]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise InvalidArgumentError(f"invalid game size N={self.N}, n={self.n}")
        if not self.mu > 0:
            raise InvalidArgumentError(f"strong-monotonicity modulus must be positive, got {self.mu}")
        self.lipschitz = [float(l) for l in self.lipschitz]
        if len(self.lipschitz) != self.N or min(self.lipschitz) <= 0:
            raise InvalidArgumentError("one positive Lipschitz modulus per player is required")

    @property
    def dim(self):
        return self.N * self.n

    @property
    def k1_bound(self):
        """μ / max l_i²"""
        return self.mu / max(self.lipschitz) ** 2


def as_profile(game, x):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != game.dim:
        raise InvalidArgumentError(f"action profile must have length {game.dim}, got {x.shape[0]}")
    return x


def pseudo_gradient(game, x):
    """col(∇_1 f_1(x), ..., ∇_N f_N(x))"""
    x = as_profile(game, x)
    return np.concatenate([np.asarray(game.grad(i, x), dtype=float) for i in range(game.N)])


def connectivity_game(c, include_sin=True):
    """
    Mobile-sensor connectivity control game:
        J_i = ‖x_i‖² + c_iᵀx_i + sin(x_i1) + Σ_j ‖x_i − x_j‖²

    Arguments:
        c (list): N private 2-vectors c_i
        include_sin (bool): False drops the sin term (linear pseudo-gradient)
    """
    if c is None or len(c) == 0:
        raise InvalidArgumentError("connectivity game needs at least one c_i")
    C = np.array(c, dtype=float)
    if C.ndim != 2 or C.shape[1] != 2:
        raise InvalidArgumentError(f"each c_i must be a 2-vector, got shape {C.shape}")
    N = C.shape[0]
    sin_weight = 1.0 if include_sin else 0.0

    def cost(i, x):
        X = x.reshape(N, 2)
        xi = X[i]
        return float(xi @ xi + C[i] @ xi + sin_weight * np.sin(xi[0]) + np.sum((xi - X) ** 2))

    def grad(i, x):
        X = x.reshape(N, 2)
        xi = X[i]
        g = 2.0 * xi + C[i] + 2.0 * (N * xi - X.sum(axis=0))
        g[0] += sin_weight * np.cos(xi[0])
        return g

    return GameDefinition(
        N=N, n=2, cost=cost, grad=grad, mu=2.0, lipschitz=[22.0] * N,
        name="connectivity", params={"c": C.tolist(), "include_sin": include_sin},
    )


def quadratic_game(Q_blocks, c):
    """
    J_i = ½ x_iᵀQ_ii x_i + x_iᵀ Σ_{j≠i} Q_ij x_j + c_iᵀx_i

    Arguments:
        Q_blocks (list): per-player n×(N·n) row block [Q_i1 ... Q_iN], Q_ii symmetric
        c (list): per-player n-vectors
    """
    C = np.array(c, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    N, n = C.shape
    if len(Q_blocks) != N:
        raise InvalidArgumentError(f"need {N} Q blocks, got {len(Q_blocks)}")
    Q = np.vstack([np.array(q, dtype=float).reshape(n, N * n) for q in Q_blocks])
    for i in range(N):
        Qii = Q[i * n:(i + 1) * n, i * n:(i + 1) * n]
        if not np.allclose(Qii, Qii.T):
            raise InvalidArgumentError(f"Q_ii of player {i} must be symmetric")

    mu = float(eig_sym((Q + Q.T) / 2.0)[0])
    if mu <= 0:
        raise InvalidArgumentError(f"quadratic game is not strongly monotone (λ_min = {mu:.4g})")
    lipschitz = [float(np.sqrt(eig_sym(Q[i * n:(i + 1) * n] @ Q[i * n:(i + 1) * n].T)[-1])) for i in range(N)]

    def cost(i, x):
        rows = slice(i * n, (i + 1) * n)
        xi = x[rows]
        Qi = Q[rows]
        Qii = Qi[:, rows]
        return float(0.5 * xi @ Qii @ xi + xi @ (Qi @ x - Qii @ xi) + C[i] @ xi)

    def grad(i, x):
        rows = slice(i * n, (i + 1) * n)
        return Q[rows] @ x + C[i]

    return GameDefinition(
        N=N, n=n, cost=cost, grad=grad, mu=mu, lipschitz=lipschitz,
        name="quadratic", params={"Q": Q.tolist(), "c": C.tolist()},
    )


def _fd_jacobian(game, x, step=1e-6):
    dim = x.shape[0]
    J = np.empty((dim, dim))
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        J[:, k] = (pseudo_gradient(game, x + e) - pseudo_gradient(game, x - e)) / (2.0 * step)
    return J


def solve_ne(game, x0=None, tol=1e-8, max_iter=200):
    """
    Independent NE oracle: damped Newton on F(x) = 0 with a finite-difference
    Jacobian, falling back to the fixed-step flow x <- x - γF(x), γ = μ/max l_i².
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")
    x = np.zeros(game.dim) if x0 is None else as_profile(game, x0).copy()
    F = pseudo_gradient(game, x)
    res = np.linalg.norm(F)
    newton = True
    gamma = game.k1_bound

    for _ in range(max_iter):
        if res <= tol:
            break
        if newton:
            try:
                step = np.linalg.solve(_fd_jacobian(game, x), -F)
            except np.linalg.LinAlgError:
                newton = False
                continue
            damping = 1.0
            while damping > 1e-8:
                x_new = x + damping * step
                F_new = pseudo_gradient(game, x_new)
                if np.linalg.norm(F_new) < res:
                    break
                damping *= 0.5
            else:
                # Newton stalled
                newton = False
                continue
            x, F = x_new, F_new
        else:
            # gradient flow fallback, one iteration is a batch of cheap steps
            for _ in range(1000):
                x = x - gamma * F
                F = pseudo_gradient(game, x)
                if np.linalg.norm(F) <= tol:
                    break
        res = np.linalg.norm(F)

    if res > tol:
        raise ConvergenceError(f"NE solver did not reach tol={tol:.1e} (residual {res:.3e})", residual=res)
    return x


def check_strong_monotonicity(game, n_samples=1000, seed=0, box=10.0):
    """
    Sampled check of (x-y)ᵀ(F(x)-F(y)) >= μ‖x-y‖² on [-box, box]^{Nn}.

    Returns:
        {"min_ratio": float, "pass": bool}
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"n_samples must be >= 1, got {n_samples}")
    rng = make_rng(seed)
    min_ratio = np.inf
    taken = 0
    while taken < n_samples:
        x = rng.uniform(-box, box, game.dim)
        y = rng.uniform(-box, box, game.dim)
        d = x - y
        dd = d @ d
        if dd == 0.0:
            continue
        ratio = d @ (pseudo_gradient(game, x) - pseudo_gradient(game, y)) / dd
        min_ratio = min(min_ratio, float(ratio))
        taken += 1
    return {"min_ratio": min_ratio, "pass": bool(min_ratio >= game.mu - 1e-9)}


def estimate_lipschitz(game, n_samples=200, seed=0, box=10.0):
    """empirical max_i ‖∇_i f_i(x) − ∇_i f_i(y)‖ / ‖x − y‖ per player"""
    rng = make_rng(seed)
    est = np.zeros(game.N)
    for _ in range(n_samples):
        x = rng.uniform(-box, box, game.dim)
        y = rng.uniform(-box, box, game.dim)
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        for i in range(game.N):
            est[i] = max(est[i], np.linalg.norm(game.grad(i, x) - game.grad(i, y)) / dist)
    return est.tolist()


def _connectivity_from_config(c, include_sin=True):
    return connectivity_game(c, include_sin=include_sin)


def _quadratic_from_config(Q, c):
    return quadratic_game(Q, c)


_game_entrypoints = {
    'connectivity': _connectivity_from_config,
    'quadratic': _quadratic_from_config,
}


def game_entrypoint(game_name):
    return _game_entrypoints[game_name]


def is_game(game_name):
    return game_name in _game_entrypoints


def create_game(game_name, **kwargs):
    if is_game(game_name):
        create_fn = game_entrypoint(game_name)
        try:
            game = create_fn(**kwargs)
        except (TypeError, InvalidArgumentError) as err:
            raise ConfigError(f"invalid '{game_name}' game parameters: {err}") from err
    else:
        raise ConfigError('Unknown game (%s)' % game_name)
    return game
