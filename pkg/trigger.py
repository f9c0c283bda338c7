from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import ConfigError, ConsistencyError, InvalidArgumentError
from topology import leader_follower_residual, min_eig

GRID_TOL = 1e-9


def phi_weight(Phi, n):
    """
    Φ acts on estimate indices; eᵢ is stacked j-major, component-minor,
    so the weight on the stacked vector is Φ⊗I_n.
    """
    return np.kron(np.asarray(Phi, dtype=float), np.eye(n))


def check_phi(Phi):
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[0] != Phi.shape[1]:
        raise ConfigError(f"Phi must be square, got shape {Phi.shape}")
    if not np.allclose(Phi, Phi.T, rtol=0.0, atol=1e-12):
        raise ConfigError("Phi must be symmetric")
    if min_eig(Phi) <= 1e-10:
        raise ConfigError("Phi must be positive definite")
    return Phi


@dataclass
class TriggerState:
    """
    Sampled-data event trigger bookkeeping for one run.

    held_y[i] is the value yⁱ(t_kⁱ) player i broadcast last; events[i] lists
    its broadcast instants. q is the index of the latest processed sample.
    """
    N: int
    n: int
    h: float
    zeta: np.ndarray
    Phi: np.ndarray
    last_trigger: np.ndarray = None
    held_y: np.ndarray = None
    events: list = field(default_factory=list)
    samples: np.ndarray = None
    q: int = -1

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(f"sampling period h must be positive, got {self.h}")
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if self.zeta.size == 1:
            self.zeta = np.full(self.N, float(self.zeta[0]))
        if self.zeta.size != self.N or np.any(self.zeta <= 0):
            raise ConfigError(f"need {self.N} positive zeta values")
        self.Phi = check_phi(self.Phi)
        if self.Phi.shape != (self.N, self.N):
            raise ConfigError(f"Phi must be {self.N}x{self.N}, got {self.Phi.shape}")
        if self.last_trigger is None:
            self.last_trigger = np.full(self.N, np.nan)
        if not self.events:
            self.events = [[] for _ in range(self.N)]
        if self.samples is None:
            self.samples = np.zeros(self.N, dtype=int)
        self._W = phi_weight(self.Phi, self.n)

    @property
    def weight(self):
        return self._W

    def grid_time(self, q):
        return q * self.h


def _grid_index(ts, t_sample):
    q = int(round(t_sample / ts.h))
    if abs(t_sample - q * ts.h) > GRID_TOL * max(1.0, abs(t_sample)):
        raise InvalidArgumentError(f"t={t_sample} is not on the sampling grid (h={ts.h})")
    return q


def measurement_vectors(ts, live_y, sampled_x, g_mode, i, t_sample):
    """
    zᵢ, eᵢ, δᵢ at a sampling instant, each stacked j-major into an N·n-vector.

        zᵢⱼ = Σₘ aᵢₘ(yⁱⱼ(t_kⁱ) − yᵐⱼ(t_kᵐ)) + aᵢⱼ(yⁱⱼ(t_kⁱ) − xⱼ(t))
        eᵢⱼ = yⁱⱼ(t_kⁱ) − yⁱⱼ(t)
        δᵢⱼ = yⁱⱼ(t) − xⱼ(t)
    """
    if g_mode is None:
        raise InvalidArgumentError("measurement_vectors needs the active mode graph")
    if ts.held_y is None:
        raise ConsistencyError("no held broadcast values; process sample 0 first")
    _grid_index(ts, t_sample)
    held = ts.held_y
    live_y = np.asarray(live_y, dtype=float)
    x = np.asarray(sampled_x, dtype=float).reshape(ts.N, ts.n)
    adj = g_mode.adj
    z = adj[i].sum() * held[i] - np.einsum('m,mjk->jk', adj[i], held) + adj[i][:, None] * (held[i] - x)
    return {
        "z_i": z.ravel(),
        "e_i": (held[i] - live_y[i]).ravel(),
        "delta_i": (live_y[i] - x).ravel(),
    }


def should_trigger(e_i, z_i, Phi, zeta_i):
    """eᵢᵀ(Φ⊗I_n)eᵢ > ζᵢ·zᵢᵀ(Φ⊗I_n)zᵢ"""
    e_i = np.asarray(e_i, dtype=float)
    z_i = np.asarray(z_i, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    n = e_i.size // Phi.shape[0]
    if n * Phi.shape[0] != e_i.size or e_i.size != z_i.size:
        raise InvalidArgumentError(f"e_i/z_i length incompatible with Phi of size {Phi.shape[0]}")
    W = phi_weight(Phi, n)
    return bool(e_i @ W @ e_i > zeta_i * (z_i @ W @ z_i))


def advance_sampling_instant(ts, live_y, sampled_x, g_mode, q):
    """
    Process the sample t = q·h. Every player is tested against the values
    at t using the broadcasts held before t; those that fire broadcast their
    live estimate. At q = 0 every player fires.

    Returns:
        sorted list of 0-based players that broadcast
    """
    q = int(q)
    if q <= ts.q:
        raise InvalidArgumentError(f"sample {q} already processed (last {ts.q})")
    t = ts.grid_time(q)
    live_y = np.asarray(live_y, dtype=float)
    ts.samples += 1

    if ts.held_y is None or q == 0:
        fired = list(range(ts.N))
        ts.held_y = np.zeros_like(live_y)
    else:
        x = np.asarray(sampled_x, dtype=float).reshape(ts.N, ts.n)
        Z = leader_follower_residual(g_mode.adj, ts.held_y, ts.held_y, x).reshape(ts.N, -1)
        E = (ts.held_y - live_y).reshape(ts.N, -1)
        W = ts.weight
        lhs = np.einsum('ik,kl,il->i', E, W, E)
        rhs = ts.zeta * np.einsum('ik,kl,il->i', Z, W, Z)
        fired = np.flatnonzero(lhs > rhs).tolist()

    for i in fired:
        ts.held_y[i] = live_y[i]
        ts.last_trigger[i] = t
        ts.events[i].append(t)
    ts.q = q
    return fired


def min_inter_event_gap(ts):
    gaps = [np.diff(ev) for ev in ts.events if len(ev) > 1]
    if not gaps:
        return float("inf")
    return float(min(g.min() for g in gaps))


def events_frame(ts):
    """event log as columns t, player (1-based), ordered by time then player"""
    rows = [(t, i + 1) for i, ev in enumerate(ts.events) for t in ev]
    frame = pd.DataFrame(rows, columns=["t", "player"])
    return frame.sort_values(["t", "player"], kind="stable").reset_index(drop=True)
