import numpy as np

from errors import ConfigError
from topology import eig_sym


class Sinusoid:
    """
    ω_i(t) = A·(sin(f·k_i·t), cos(f·k_i·t), sin(...), ...), k_i = i+1 when
    index_scaled (player-dependent frequency), else 1.
    """
    def __init__(self, N, n, amplitude=1.0, frequency=1.0, index_scaled=True):
        self.N, self.n = N, n
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.index_scaled = bool(index_scaled)
        k = np.arange(1, N + 1, dtype=float) if self.index_scaled else np.ones(N)
        self._w = self.frequency * k
        self._use_sin = (np.arange(n) % 2 == 0)

    def __call__(self, t):
        phase = self._w[:, None] * t
        return self.amplitude * np.where(self._use_sin[None, :], np.sin(phase), np.cos(phase))

    def dot_bound(self):
        return (abs(self.amplitude) * self._w).tolist()


class Constant:
    def __init__(self, N, n, value=0.0):
        self.N, self.n = N, n
        self.value = np.broadcast_to(np.asarray(value, dtype=float), (N, n)).copy()

    def __call__(self, t):
        return self.value.copy()

    def dot_bound(self):
        return [0.0] * self.N


class Ramp:
    def __init__(self, N, n, slope=0.1):
        self.N, self.n = N, n
        self.slope = float(slope)

    def __call__(self, t):
        return np.full((self.N, self.n), self.slope * t)

    def dot_bound(self):
        return [abs(self.slope)] * self.N


class Zero(Constant):
    def __init__(self, N, n):
        super().__init__(N, n, 0.0)


_omega_entrypoints = {
    'sinusoid': Sinusoid,
    'constant': Constant,
    'ramp': Ramp,
    'zero': Zero,
}


def paper_friction_matrix(N, n=2, scale=1.0):
    """
    Linear lumped-friction uncertainty of the vehicle example: player i (1-based)
    couples to k = i+1 (k = 1 for i = N),
        ϱ_i = (i·x_i1 + i·x_i2 + k·x_k1 + k·x_k2,  3i·x_i1 + 2i·x_i2 + 3k·x_k1 + 2k·x_k2)
    """
    if n != 2:
        raise ConfigError("paper_friction uncertainty is defined for planar actions (n = 2)")
    G = np.zeros((N * n, N * n))
    pattern = np.array([[1.0, 1.0], [3.0, 2.0]])
    for i in range(N):
        k = (i + 1) % N
        G[2 * i:2 * i + 2, 2 * i:2 * i + 2] += (i + 1) * pattern
        G[2 * i:2 * i + 2, 2 * k:2 * k + 2] += (k + 1) * pattern
    return scale * G


def _none_matrix(N, n):
    return np.zeros((N * n, N * n))


def _linear_matrix(N, n, G):
    G = np.vstack([np.asarray(g, dtype=float).reshape(n, N * n) for g in G])
    if G.shape != (N * n, N * n):
        raise ConfigError(f"linear uncertainty needs {N} blocks of shape {n}x{N * n}")
    return G


_varrho_entrypoints = {
    'none': _none_matrix,
    'paper_friction': paper_friction_matrix,
    'linear': _linear_matrix,
}


class DisturbanceSpec:
    """
    External disturbance ω_i(t) plus linear uncertain dynamics ϱ(x) = G·x.

    Arguments:
        omega: callable t -> (N, n) array with dot_bound() -> per-player ‖ω̇_i‖_∞
        G (ndarray): (N·n)×(N·n) uncertainty map
    """
    def __init__(self, omega, G, omega_name="custom", varrho_name="custom"):
        self.omega = omega
        self.G = np.asarray(G, dtype=float)
        self.omega_name = omega_name
        self.varrho_name = varrho_name

    @property
    def omega_dot_bound(self):
        return self.omega.dot_bound()

    @property
    def has_varrho(self):
        return bool(np.any(self.G != 0.0))

    def varrho(self, x):
        """ϱ(x) for the stacked profile, returned as (N, n)"""
        return (self.G @ x.ravel()).reshape(self.omega.N, self.omega.n)

    def g_norm(self):
        """‖∇ϱ‖₂ = ‖G‖₂"""
        if not self.has_varrho:
            return 0.0
        return float(np.sqrt(max(eig_sym(self.G.T @ self.G)[-1], 0.0)))


def create_disturbance(N, n, omega=None, varrho=None):
    """
    Arguments:
        omega (dict): {"type": "sinusoid" | "constant" | "ramp" | "zero", ...params}
        varrho (dict): {"type": "none" | "paper_friction" | "linear", ...params}
    """
    omega = dict(omega or {"type": "zero"})
    varrho = dict(varrho or {"type": "none"})
    omega_name = omega.pop("type", "zero")
    varrho_name = varrho.pop("type", "none")
    if omega_name not in _omega_entrypoints:
        raise ConfigError('Unknown disturbance (%s)' % omega_name)
    if varrho_name not in _varrho_entrypoints:
        raise ConfigError('Unknown uncertainty (%s)' % varrho_name)
    try:
        omega_fn = _omega_entrypoints[omega_name](N, n, **omega)
        G = _varrho_entrypoints[varrho_name](N, n, **varrho)
    except TypeError as err:
        raise ConfigError(f"invalid disturbance parameters: {err}") from err
    return DisturbanceSpec(omega_fn, G, omega_name=omega_name, varrho_name=varrho_name)
