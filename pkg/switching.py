from dataclasses import dataclass
from itertools import product

import numpy as np
import pandas as pd
from scipy import special, stats

from errors import ConfigError, InvalidArgumentError, InvalidSpecError

MAX_JUMPS = 10_000_000


def make_rng(seed, stream=0):
    """
    Project-wide PRNG: Philox counter-based bit generator keyed by
    (seed, stream), so every trace reproduces bit-for-bit across platforms
    and independent draws of one run never share a stream.
    """
    key = np.array([int(seed), int(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class SojournDistribution:
    """
    Base class for sojourn-time laws. Sampling always goes through the
    inverse CDF so a draw consumes exactly one uniform.
    """
    name = "base"

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    @property
    def mean(self):
        raise NotImplementedError

    def sample(self, rng, size=None):
        return self.ppf(rng.random(size))

    def to_dict(self):
        raise NotImplementedError


class Weibull(SojournDistribution):
    name = "weibull"

    def __init__(self, scale=1.0, shape=1.5):
        if not (scale > 0 and shape > 0):
            raise InvalidSpecError(f"Weibull needs scale > 0 and shape > 0, got ({scale}, {shape})")
        self.scale = float(scale)
        self.shape = float(shape)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-(x / self.scale) ** self.shape)

    def ppf(self, u):
        return self.scale * (-np.log1p(-np.asarray(u, dtype=float))) ** (1.0 / self.shape)

    @property
    def mean(self):
        return self.scale * special.gamma(1.0 + 1.0 / self.shape)

    def to_dict(self):
        return {"type": self.name, "scale": self.scale, "shape": self.shape}

    def __repr__(self):
        return f"Weibull(scale={self.scale}, shape={self.shape})"


class Exponential(SojournDistribution):
    name = "exponential"

    def __init__(self, rate=1.0):
        if not rate > 0:
            raise InvalidSpecError(f"Exponential needs rate > 0, got {rate}")
        self.rate = float(rate)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-self.rate * x)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    @property
    def mean(self):
        return 1.0 / self.rate

    def to_dict(self):
        return {"type": self.name, "rate": self.rate}

    def __repr__(self):
        return f"Exponential(rate={self.rate})"


_sojourn_entrypoints = {
    'weibull': Weibull,
    'exponential': Exponential,
}


def sojourn_entrypoint(sojourn_name):
    return _sojourn_entrypoints[sojourn_name]


def is_sojourn(sojourn_name):
    return sojourn_name in _sojourn_entrypoints


def create_sojourn(sojourn_name, **kwargs):
    if is_sojourn(sojourn_name):
        create_fn = sojourn_entrypoint(sojourn_name)
        try:
            sojourn = create_fn(**kwargs)
        except TypeError as err:
            raise ConfigError(f"invalid '{sojourn_name}' parameters: {err}") from err
    else:
        raise ConfigError('Unknown sojourn distribution (%s)' % sojourn_name)
    return sojourn


def embedded_from_rates(rate_intervals):
    """normalized midpoints of the off-diagonal rate intervals"""
    R = np.asarray(rate_intervals, dtype=float)
    mid = R.mean(axis=2)
    np.fill_diagonal(mid, 0.0)
    if np.any(mid < 0):
        raise InvalidSpecError("off-diagonal transition-rate intervals must be non-negative")
    sums = mid.sum(axis=1, keepdims=True)
    if np.any(sums == 0.0):
        raise InvalidSpecError("every mode needs at least one positive outgoing rate")
    return mid / sums


def rate_vertices(rate_intervals, m):
    """
    Vertices of row m of the interval generator: every off-diagonal entry at
    one of its endpoints, diagonal forced to −Σ off-diagonals. m is 0-based.
    """
    R = np.asarray(rate_intervals, dtype=float)
    s = R.shape[0]
    others = [k for k in range(s) if k != m]
    vertices = []
    for ends in product(*[(R[m, k, 0], R[m, k, 1]) for k in others]):
        row = np.zeros(s)
        row[others] = ends
        row[m] = -row.sum()
        vertices.append(row)
    return vertices


@dataclass
class SemiMarkovSpec:
    """
    Semi-Markov switching law realized as per-mode sojourn distributions plus
    an embedded jump chain. Modes are 1-based in signals; matrices are 0-based.
    """
    sojourn: list
    embedded: np.ndarray
    rate_intervals: np.ndarray = None
    initial_mode: int = 1

    def __post_init__(self):
        self.embedded = np.asarray(self.embedded, dtype=float)
        s = self.embedded.shape[0]
        if self.embedded.shape != (s, s):
            raise InvalidSpecError(f"embedded chain must be square, got {self.embedded.shape}")
        if len(self.sojourn) != s:
            raise InvalidSpecError(f"need {s} sojourn laws, got {len(self.sojourn)}")
        if np.any(self.embedded < 0) or np.any(np.diag(self.embedded) != 0.0):
            raise InvalidSpecError("embedded chain needs non-negative entries and a zero diagonal")
        sums = self.embedded.sum(axis=1)
        if np.any(sums == 0.0):
            raise InvalidSpecError("embedded chain has a degenerate (all-zero) row")
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise InvalidSpecError(f"embedded chain rows must sum to 1, got {sums}")
        if self.rate_intervals is not None:
            self.rate_intervals = np.asarray(self.rate_intervals, dtype=float)
            if self.rate_intervals.shape != (s, s, 2):
                raise InvalidSpecError(f"rate intervals must be {s}x{s}x2, got {self.rate_intervals.shape}")
        if not 1 <= self.initial_mode <= s:
            raise InvalidSpecError(f"initial mode {self.initial_mode} outside 1..{s}")

    @property
    def s(self):
        return self.embedded.shape[0]


@dataclass(frozen=True)
class SwitchingSignal:
    jump_times: np.ndarray
    modes: np.ndarray
    horizon: float

    def sojourns(self):
        """completed (mode, duration) pairs; the segment cut by the horizon is excluded"""
        return self.modes[:-1], np.diff(self.jump_times)


def sample_signal(spec, horizon, seed):
    """
    Draw a mode trajectory on [0, horizon]: sojourn by inverse CDF in the
    current mode, next mode from the embedded row, until the horizon.
    """
    if not horizon > 0:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    rng = make_rng(seed)
    cum = np.cumsum(spec.embedded, axis=1)
    t = 0.0
    mode = spec.initial_mode
    jump_times = [0.0]
    modes = [mode]
    while True:
        u = rng.random()
        while u == 0.0:
            u = rng.random()
        t += float(spec.sojourn[mode - 1].ppf(u))
        if t >= horizon:
            break
        row = cum[mode - 1]
        nxt = int(np.searchsorted(row, rng.random(), side="right"))
        if nxt >= spec.s:
            nxt = int(np.flatnonzero(spec.embedded[mode - 1])[-1])
        mode = nxt + 1
        jump_times.append(t)
        modes.append(mode)
        if len(jump_times) > MAX_JUMPS:
            raise InvalidSpecError(f"switching signal exceeded {MAX_JUMPS} jumps before t={horizon}")

    jt = np.array(jump_times)
    md = np.array(modes, dtype=int)
    jt.setflags(write=False)
    md.setflags(write=False)
    return SwitchingSignal(jump_times=jt, modes=md, horizon=float(horizon))


def mode_at(sig, t):
    """right-continuous r(t)"""
    if not 0.0 <= t <= sig.horizon:
        raise InvalidArgumentError(f"t={t} outside [0, {sig.horizon}]")
    idx = int(np.searchsorted(sig.jump_times, t, side="right")) - 1
    return int(sig.modes[idx])


def sojourn_statistics(sig_list, spec):
    """
    Per-mode sojourn count, mean and Kolmogorov–Smirnov distance against the
    configured sojourn law. Modes with no completed sojourn report count 0 and NaN.
    """
    if len(sig_list) == 0:
        raise InvalidArgumentError("sojourn_statistics needs at least one signal")
    modes, durations = [], []
    for sig in sig_list:
        m, d = sig.sojourns()
        modes.append(m)
        durations.append(d)
    modes = np.concatenate(modes)
    durations = np.concatenate(durations)
    if durations.size == 0:
        raise InvalidArgumentError("no completed sojourn in the given signals")

    report = {}
    for mode in range(1, spec.s + 1):
        samples = durations[modes == mode]
        if samples.size == 0:
            report[mode] = {"count": 0, "mean": float("nan"), "ks": float("nan")}
            continue
        ks = stats.kstest(samples, spec.sojourn[mode - 1].cdf).statistic
        report[mode] = {"count": int(samples.size), "mean": float(samples.mean()), "ks": float(ks)}
    return report


def signal_frame(sig):
    return pd.DataFrame({"t_jump": sig.jump_times, "mode": sig.modes})
