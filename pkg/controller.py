from dataclasses import dataclass

import numpy as np

from errors import ConfigError, ConsistencyError, InvalidArgumentError, NumericalBlowupError
from topology import leader_follower_residual

ALGORITHMS = ("alg1", "alg2", "baseline")


def sgn(z, nu=None):
    """sign with sgn(0) = 0; tanh(z/ν) when a boundary layer ν is given"""
    z = np.asarray(z, dtype=float)
    if nu is None:
        return np.sign(z)
    return np.tanh(z / nu)


def sig(z, q=0.5, nu=None):
    """sig^q(z) = sgn(z)·|z|^q componentwise"""
    z = np.asarray(z, dtype=float)
    return np.abs(z) ** q * sgn(z, nu)


@dataclass
class PlayerState:
    """
    한 player의 상태 (xᵢ, vᵢ, φᵢ, βᵢ, Iᵢ, yⁱ) 와 초기 속도 vᵢ(0).
    y는 N×n 추정 행렬이며 row i 는 항상 자기 x 입니다.
    """
    x: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    beta: float
    u0_integral: np.ndarray
    y: np.ndarray
    v0: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.u0_integral = np.asarray(self.u0_integral, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.v0 = np.zeros_like(self.v) if self.v0 is None else np.asarray(self.v0, dtype=float)
        self.beta = float(self.beta)

    @property
    def s(self):
        """sliding variable sᵢ = vᵢ − vᵢ(0) − Iᵢ"""
        return self.v - self.v0 - self.u0_integral

    @property
    def eta(self):
        return self.beta + float(np.linalg.norm(self.v))


@dataclass
class NetworkState:
    """
    Stacked PlayerStates of all players; the integrator advances this.

    shapes: x, v, phi, u0_integral, v0 (N, n); beta (N,); y (N, N, n) with y[i] = yⁱ
    """
    x: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    beta: np.ndarray
    u0_integral: np.ndarray
    y: np.ndarray
    v0: np.ndarray

    @property
    def N(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    def sliding_variable(self):
        return self.v - self.v0 - self.u0_integral

    def eta(self):
        return self.beta + np.linalg.norm(self.v, axis=1)

    def estimate_error(self):
        """y − 𝟙_N⊗x"""
        return self.y - self.x[None, :, :]

    def enforce_own_rows(self):
        idx = np.arange(self.N)
        self.y[idx, idx] = self.x

    def player(self, i):
        return PlayerState(
            x=self.x[i].copy(), v=self.v[i].copy(), phi=self.phi[i].copy(), beta=self.beta[i],
            u0_integral=self.u0_integral[i].copy(), y=self.y[i].copy(), v0=self.v0[i].copy(),
        )

    def copy(self):
        return NetworkState(**{k: np.array(getattr(self, k), copy=True) for k in self.__dataclass_fields__})


@dataclass
class StateDerivative:
    x: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    beta: np.ndarray
    u0_integral: np.ndarray
    y: np.ndarray


def initial_state(N, n, x0=None, v0=None, y0=None, estimate_noise=0.0, rng=None):
    """
    Default start: x = 0, v = 0, yⁱ = own x plus zeros for every other player.
    estimate_noise > 0 adds N(0, σ²) to every yⁱⱼ with j ≠ i (needs rng).
    """
    x = np.zeros((N, n)) if x0 is None else np.array(x0, dtype=float).reshape(N, n)
    v = np.zeros((N, n)) if v0 is None else np.array(v0, dtype=float).reshape(N, n)
    if y0 is None:
        y = np.zeros((N, N, n))
    else:
        y = np.array(y0, dtype=float).reshape(N, N, n)
    if estimate_noise > 0.0:
        if rng is None:
            raise InvalidArgumentError("estimate_noise needs a random generator")
        noise = rng.normal(0.0, estimate_noise, size=(N, N, n))
        noise[np.arange(N), np.arange(N)] = 0.0
        y = y + noise
    st = NetworkState(
        x=x, v=v, phi=np.zeros((N, n)), beta=np.zeros(N), u0_integral=np.zeros((N, n)),
        y=y, v0=v.copy(),
    )
    st.enforce_own_rows()
    return st


@dataclass
class GainSet:
    """
    Algorithm gains. k2, k3 are per player; k4 is per player under alg1 and
    per mode (K(m)) under alg2.
    """
    k1: float
    k2: np.ndarray
    k3: np.ndarray
    k4: np.ndarray
    alpha: float
    epsilon: float
    g_tilde: float = 0.0

    def __post_init__(self):
        self.k1 = float(self.k1)
        self.k2 = np.atleast_1d(np.asarray(self.k2, dtype=float))
        self.k3 = np.atleast_1d(np.asarray(self.k3, dtype=float))
        self.k4 = np.atleast_1d(np.asarray(self.k4, dtype=float))
        self.alpha = float(self.alpha)
        self.epsilon = float(self.epsilon)
        self.g_tilde = float(self.g_tilde)
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.g_tilde < 0:
            raise ConfigError(f"g_tilde must be >= 0, got {self.g_tilde}")
        for name in ("k2", "k3", "k4"):
            if np.any(getattr(self, name) < 0):
                raise ConfigError(f"{name} must be non-negative")

    @classmethod
    def broadcast(cls, N, k1, k2, k3, k4, alpha, epsilon, g_tilde=0.0, n_k4=None):
        """scalar gains are repeated per player (k4: per mode when n_k4 is given)"""
        def _vec(value, size, name):
            arr = np.atleast_1d(np.asarray(value, dtype=float))
            if arr.size == 1:
                arr = np.full(size, float(arr[0]))
            if arr.size != size:
                raise ConfigError(f"{name} needs 1 or {size} entries, got {arr.size}")
            return arr
        return cls(
            k1=k1, k2=_vec(k2, N, "k2"), k3=_vec(k3, N, "k3"),
            k4=_vec(k4, n_k4 or N, "k4"), alpha=alpha, epsilon=epsilon, g_tilde=g_tilde,
        )

    def violations(self, game, disturbance, algorithm="alg1"):
        """list of human-readable gain-invariant violations (empty if all hold)"""
        found = []
        bound = game.k1_bound
        if not 0.0 < self.k1 < bound:
            found.append(f"k1={self.k1:g} outside (0, mu/max l^2 = {bound:.6g})")
        if algorithm != "baseline":
            for i, (k3, wd) in enumerate(zip(self.k3, disturbance.omega_dot_bound)):
                if not k3 > wd:
                    found.append(f"k3[{i + 1}]={k3:g} <= ||d omega_{i + 1}/dt||_inf = {wd:g}")
            if algorithm == "alg1" and disturbance.has_varrho:
                g_norm = disturbance.g_norm()
                if self.g_tilde < g_norm:
                    found.append(f"g_tilde={self.g_tilde:g} < ||G||_2 = {g_norm:.6g}")
        return found

    def to_dict(self):
        return {
            "k1": self.k1, "k2": self.k2.tolist(), "k3": self.k3.tolist(), "k4": self.k4.tolist(),
            "alpha": self.alpha, "epsilon": self.epsilon, "g_tilde": self.g_tilde,
        }


def u_nominal(game, st, i, k1):
    """u⁰ᵢ = −k₁∇ᵢfᵢ(yⁱ) − vᵢ"""
    return -k1 * np.asarray(game.grad(i, st.y.ravel()), dtype=float) - st.v


def u_ismc(st, k2_i, nu=None):
    """supertwisting compensator uʳᵢ = −k₂ᵢ·sig^{1/2}(sᵢ) + φᵢ"""
    return -k2_i * sig(st.s, 0.5, nu) + st.phi


def phi_derivative(st, k3_i, g_tilde, N, variant="alg1", nu=None):
    if variant not in ("alg1", "alg2"):
        raise InvalidArgumentError(f"unknown variant {variant}")
    sgn_s = sgn(st.s, nu)
    if variant == "alg2":
        return -k3_i * sgn_s
    if g_tilde < 0:
        raise InvalidArgumentError(f"g_tilde must be >= 0, got {g_tilde}")
    return -k3_i * sgn_s - g_tilde * N * st.eta * sgn_s


def beta_derivative(all_eta, g, i, alpha, nu=None):
    """−α·Σ_{j∈𝒩ᵢ} sign(ηᵢ − ηⱼ)"""
    if not alpha > 0:
        raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
    all_eta = np.asarray(all_eta, dtype=float)
    nb = g.neighbors(i)
    return float(-alpha * np.sum(sgn(all_eta[i] - all_eta[nb], nu)))


def estimation_derivative_alg1(states, g, i, j, k4_i, epsilon):
    """ẏⁱⱼ = −(k₄ᵢ/ε)·(Σₘ aᵢₘ(yⁱⱼ − yᵐⱼ) + aᵢⱼ(yⁱⱼ − xⱼ))"""
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    adj = g.adj
    y = states.y
    r = adj[i].sum() * y[i, j] - adj[i] @ y[:, j]
    r = r + adj[i, j] * (y[i, j] - states.x[j])
    return -(k4_i / epsilon) * r


def estimation_derivative_alg2(held, sampled_x, g_mode, K_m, i, j, epsilon):
    """
    Event-triggered estimator: the same law as alg1 evaluated only on the
    broadcast values yᵐ(t_kᵐ) and the sampled actions x(qh).
    """
    if held is None or held.held_y is None:
        raise ConsistencyError("no held broadcast values; the trigger state must be initialized at t=0")
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    adj = g_mode.adj
    Y = held.held_y
    x = np.asarray(sampled_x, dtype=float).reshape(Y.shape[0], -1)
    r = adj[i].sum() * Y[i, j] - adj[i] @ Y[:, j] + adj[i, j] * (Y[i, j] - x[j])
    return -(K_m / epsilon) * r


def average_tracking_rhs(eta, adj, alpha, nu=None):
    mask = adj > 0.0
    return -alpha * np.sum(np.where(mask, sgn(eta[:, None] - eta[None, :], nu), 0.0), axis=1)


def _smoothing_nu(config):
    smoothing = getattr(config, "smoothing", None) or {}
    if smoothing.get("enabled", False):
        return float(smoothing.get("nu", 1e-3))
    return None


def _check_finite(t, terms):
    for name, arr in terms:
        bad = ~np.isfinite(arr)
        if np.any(bad):
            player = int(np.argwhere(bad)[0][0])
            raise NumericalBlowupError(
                f"non-finite {name} for player {player + 1} at t={t:.6g}", t=t, player=player + 1, term=name,
            )


def closed_loop_derivative(state, t, config, mode=None, trigger_state=None, sampled_x=None):
    """
    Right-hand side of the full closed loop.

    Arguments:
        state (NetworkState): current snapshot, not modified
        t (float): time
        config: object with game, algorithm, gains, disturbance, graph (alg1/baseline)
            or modes (alg2), and optional smoothing
        mode (int): 1-based active mode (alg2)
        trigger_state (TriggerState), sampled_x (ndarray): held/sampled data (alg2)

    Returns:
        StateDerivative
    """
    algorithm = config.algorithm
    if algorithm not in ALGORITHMS:
        raise ConfigError('Unknown algorithm (%s)' % algorithm)
    game, gains, dist = config.game, config.gains, config.disturbance
    N, n = state.N, state.n
    nu = _smoothing_nu(config)

    grad = np.stack([np.asarray(game.grad(i, state.y[i].ravel()), dtype=float) for i in range(N)])
    u0 = -gains.k1 * grad - state.v
    omega = dist.omega(t)
    varrho = dist.varrho(state.x)

    zeros = np.zeros((N, n))
    if algorithm == "baseline":
        ur, dphi, dbeta = zeros, zeros, np.zeros(N)
    else:
        s = state.sliding_variable()
        sgn_s = sgn(s, nu)
        ur = -gains.k2[:, None] * sig(s, 0.5, nu) + state.phi
        dphi = -gains.k3[:, None] * sgn_s
        if algorithm == "alg1":
            eta = state.eta()
            dphi = dphi - gains.g_tilde * N * eta[:, None] * sgn_s
            dbeta = average_tracking_rhs(eta, config.graph.adj, gains.alpha, nu)
        else:
            dbeta = np.zeros(N)

    if algorithm == "alg2":
        if trigger_state is None or trigger_state.held_y is None or sampled_x is None:
            raise ConsistencyError("alg2 needs held broadcasts and a sampled profile")
        if mode is None:
            raise ConsistencyError("alg2 needs the active mode")
        adj = config.modes[mode - 1].adj
        held = trigger_state.held_y
        dy = -(gains.k4[mode - 1] / gains.epsilon) * leader_follower_residual(adj, held, held, sampled_x)
    else:
        adj = config.graph.adj
        dy = -(gains.k4[:, None, None] / gains.epsilon) * leader_follower_residual(adj, state.y, state.y, state.x)

    dv = u0 + ur + omega + varrho
    _check_finite(t, [("u0", u0), ("ur", ur), ("omega", omega), ("varrho", varrho),
                      ("phi", dphi), ("beta", dbeta), ("y", dy)])
    return StateDerivative(x=state.v.copy(), v=dv, phi=dphi, beta=dbeta, u0_integral=u0, y=dy)


def euler_step(state, deriv, dt):
    """explicit Euler step; the own-estimate rows are re-pinned to x afterward"""
    nxt = NetworkState(
        x=state.x + dt * deriv.x,
        v=state.v + dt * deriv.v,
        phi=state.phi + dt * deriv.phi,
        beta=state.beta + dt * deriv.beta,
        u0_integral=state.u0_integral + dt * deriv.u0_integral,
        y=state.y + dt * deriv.y,
        v0=state.v0,
    )
    nxt.enforce_own_rows()
    return nxt


def finite_time_bound(H0, zeta, a):
    """
    Settling-time bound of Ḣ ≤ −ζ·Hᵃ, a ∈ (0, 1):
        T_max = H0^{1−a} / (ζ(1−a))
    """
    if not 0.0 < a < 1.0:
        raise InvalidArgumentError(f"exponent a must be in (0, 1), got {a}")
    if not zeta > 0:
        raise InvalidArgumentError(f"zeta must be positive, got {zeta}")
    if H0 < 0:
        raise InvalidArgumentError(f"H0 must be >= 0, got {H0}")
    return H0 ** (1.0 - a) / (zeta * (1.0 - a))
