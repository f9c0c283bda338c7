import copy
import json
import os
from dataclasses import dataclass, field

import numpy as np

from controller import ALGORITHMS, GainSet
from disturbance import create_disturbance
from errors import ConfigError, InvalidArgumentError
from game import create_game
from lmi import Theorem4Instance, build_H
from switching import SemiMarkovSpec, create_sojourn, embedded_from_rates
from topology import eig_sym, graph_from_edges, is_connected
from trigger import check_phi

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

_SCHEMA = {
    "name": None,
    "algorithm": None,
    "game": {"type", "c", "include_sin", "Q", "ne"},
    "graph": {"N", "edges"},
    "modes": None,
    "gains": {"k1", "k2", "k3", "k4", "k4_margin", "alpha", "epsilon", "g_tilde"},
    "disturbance": {"omega", "varrho"},
    "switching": {"sojourn", "embedded", "rate_intervals", "initial_mode"},
    "trigger": {"h", "zeta", "Phi"},
    "lmi": {"P", "Q", "U", "R", "S"},
    "initial": {"x", "v", "y", "estimate_noise"},
    "dt": None,
    "horizon": None,
    "seed": None,
    "output": {"dir", "stride"},
    "gain_check": None,
    "smoothing": {"enabled", "nu"},
    "workers": None,
    "monte_carlo": {"n_seeds"},
}

DEFAULT_HORIZON = {"alg1": 10.0, "baseline": 10.0, "alg2": 30.0}


@dataclass
class SimConfig:
    """
    검증이 끝난 실행 설정. raw 는 default 가 채워진 config dict 이며
    run_config.json 으로 그대로 저장됩니다.
    """
    name: str
    algorithm: str
    game: object
    gains: GainSet
    disturbance: object
    dt: float
    horizon: float
    seed: int
    graph: object = None
    modes: list = None
    switching: SemiMarkovSpec = None
    trigger: dict = None
    initial: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    smoothing: dict = field(default_factory=dict)
    gain_check: str = "strict"
    gain_violations: list = field(default_factory=list)
    workers: int = 1
    n_seeds: int = 20
    reference_ne: list = None
    raw: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.game.N

    @property
    def n(self):
        return self.game.n

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def h_steps(self):
        return int(round(self.trigger["h"] / self.dt))


def _check_keys(raw):
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for section, allowed in _SCHEMA.items():
        if allowed is None or section not in raw:
            continue
        if not isinstance(raw[section], dict):
            raise ConfigError(f"'{section}' must be an object")
        unknown = set(raw[section]) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in '{section}': {', '.join(sorted(unknown))}")
    for k, mode in enumerate(raw.get("modes") or []):
        if not isinstance(mode, dict) or set(mode) - {"edges"}:
            raise ConfigError(f"mode {k + 1} must be an object with only 'edges'")


def matrix_from_spec(spec, dim, name="matrix"):
    """scalar or {"identity": c} -> c·I; nested list -> array"""
    if isinstance(spec, dict):
        if set(spec) != {"identity"}:
            raise ConfigError(f"{name}: matrix template must be {{\"identity\": c}}")
        return float(spec["identity"]) * np.eye(dim)
    if np.isscalar(spec):
        return float(spec) * np.eye(dim)
    M = np.array(spec, dtype=float)
    if M.shape != (dim, dim):
        raise ConfigError(f"{name} must be {dim}x{dim}, got {M.shape}")
    return M


def _positive(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a number, got {value!r}")
    if not value > 0 or not np.isfinite(value):
        raise ConfigError(f"'{name}' must be positive and finite, got {value}")
    return value


def _build_graphs(raw, algorithm, N):
    if algorithm == "alg2":
        if not raw.get("modes"):
            raise ConfigError("alg2 needs a non-empty 'modes' list")
        graphs = []
        for k, mode in enumerate(raw["modes"]):
            try:
                g = graph_from_edges(N, mode.get("edges", []))
            except InvalidArgumentError as err:
                raise ConfigError(f"mode {k + 1}: {err}") from err
            if not is_connected(g):
                raise ConfigError(f"mode {k + 1} graph is not connected")
            graphs.append(g)
        return None, graphs
    if "graph" not in raw:
        raise ConfigError(f"{algorithm} needs a 'graph' section")
    graph_raw = raw["graph"]
    if int(graph_raw.get("N", N)) != N:
        raise ConfigError(f"graph N={graph_raw['N']} does not match the game's {N} players")
    try:
        g = graph_from_edges(N, graph_raw.get("edges", []))
    except InvalidArgumentError as err:
        raise ConfigError(f"graph: {err}") from err
    if not is_connected(g):
        raise ConfigError("communication graph is not connected")
    return g, None


def _build_switching(raw, s):
    sw = raw.get("switching")
    if sw is None:
        raise ConfigError("alg2 needs a 'switching' section")
    sojourn = sw.get("sojourn", {"type": "weibull", "scale": 1.0, "shape": 1.5})
    sojourn = sojourn if isinstance(sojourn, list) else [sojourn] * s
    laws = []
    for spec in sojourn:
        spec = dict(spec)
        laws.append(create_sojourn(spec.pop("type", "weibull"), **spec))
    rates = sw.get("rate_intervals")
    if "embedded" in sw:
        embedded = sw["embedded"]
    elif rates is not None:
        embedded = embedded_from_rates(rates)
    else:
        raise ConfigError("switching needs 'embedded' or 'rate_intervals'")
    return SemiMarkovSpec(sojourn=laws, embedded=embedded, rate_intervals=rates,
                          initial_mode=int(sw.get("initial_mode", 1)))


def auto_k4(graphs, h, epsilon, margin=0.5):
    """K(m) = margin / ((h/ε)·λ_max(ℋ(m)))"""
    return [margin / ((h / epsilon) * float(eig_sym(build_H(g))[-1])) for g in graphs]


def build_config(raw, source="<dict>", quiet=False):
    """dict (parsed JSON) -> SimConfig; every rule violation raises ConfigError"""
    raw = copy.deepcopy(raw)
    _check_keys(raw)

    algorithm = raw.get("algorithm", "alg1")
    if algorithm not in ALGORITHMS:
        raise ConfigError('Unknown algorithm (%s)' % algorithm)
    raw["algorithm"] = algorithm
    raw.setdefault("name", os.path.splitext(os.path.basename(source))[0])

    game_raw = dict(raw.get("game") or {})
    if "type" not in game_raw:
        raise ConfigError("'game.type' is required")
    reference_ne = game_raw.pop("ne", None)
    game = create_game(game_raw.pop("type"), **game_raw)
    N, n = game.N, game.n
    if N < 2:
        raise ConfigError(f"a networked run needs at least 2 players, got {N}")

    graph, modes = _build_graphs(raw, algorithm, N)

    dist_raw = raw.setdefault("disturbance", {})
    disturbance = create_disturbance(N, n, dist_raw.get("omega"), dist_raw.get("varrho"))
    if algorithm == "alg2" and disturbance.has_varrho:
        raise ConfigError("alg2 runs do not take uncertain dynamics; set disturbance.varrho to none")

    gains_raw = raw.setdefault("gains", {})
    epsilon = _positive(gains_raw.setdefault("epsilon", 0.01), "gains.epsilon")
    dt = _positive(raw.setdefault("dt", 1e-4), "dt")
    horizon = _positive(raw.setdefault("horizon", DEFAULT_HORIZON[algorithm]), "horizon")
    if dt > epsilon / 10.0 * (1.0 + 1e-12):
        raise ConfigError(f"dt={dt} must be <= epsilon/10 = {epsilon / 10.0}")
    if dt > horizon:
        raise ConfigError(f"dt={dt} exceeds the horizon {horizon}")
    seed = raw.setdefault("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"'seed' must be a non-negative integer, got {seed!r}")

    trigger = None
    switching = None
    if algorithm == "alg2":
        trig_raw = raw.get("trigger")
        if trig_raw is None:
            raise ConfigError("alg2 needs a 'trigger' section")
        h = _positive(trig_raw.get("h", 0.1), "trigger.h")
        ratio = h / dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f"trigger.h={h} must be an integer multiple of dt={dt}")
        if dt > h / 10.0 * (1.0 + 1e-12):
            raise ConfigError(f"dt={dt} must be <= h/10 = {h / 10.0}")
        zeta = np.atleast_1d(np.asarray(trig_raw.get("zeta", 0.1), dtype=float))
        if zeta.size == 1:
            zeta = np.full(N, float(zeta[0]))
        if zeta.size != N or np.any(zeta <= 0):
            raise ConfigError(f"trigger.zeta needs 1 or {N} positive values")
        Phi = check_phi(matrix_from_spec(trig_raw.get("Phi", 1.0), N, "trigger.Phi"))
        trigger = {"h": h, "zeta": zeta, "Phi": Phi}
        switching = _build_switching(raw, len(modes))
        if switching.s != len(modes):
            raise ConfigError(f"switching has {switching.s} modes but {len(modes)} graphs are given")

    k4 = gains_raw.get("k4", 1.0)
    if k4 == "auto":
        if algorithm != "alg2":
            raise ConfigError("gains.k4 = \"auto\" is only defined for alg2")
        k4 = auto_k4(modes, trigger["h"], epsilon, float(gains_raw.get("k4_margin", 0.5)))
        gains_raw["k4"] = k4
    required = ("k1", "alpha")
    missing = [k for k in required if k not in gains_raw]
    if missing:
        raise ConfigError(f"missing gains: {', '.join(missing)}")
    gains = GainSet.broadcast(
        N, k1=gains_raw["k1"], k2=gains_raw.get("k2", 1.0), k3=gains_raw.get("k3", 1.0), k4=k4,
        alpha=gains_raw["alpha"], epsilon=epsilon, g_tilde=gains_raw.get("g_tilde", 0.0),
        n_k4=len(modes) if algorithm == "alg2" else None,
    )

    gain_check = raw.setdefault("gain_check", "strict")
    if gain_check not in ("strict", "warn"):
        raise ConfigError(f"gain_check must be 'strict' or 'warn', got {gain_check!r}")
    violations = gains.violations(game, disturbance, algorithm)
    if violations and gain_check == "strict":
        raise ConfigError("gain conditions violated: " + "; ".join(violations))
    if not quiet:
        for v in violations:
            print(f"[WARN] {v}")

    initial = raw.setdefault("initial", {})
    initial.setdefault("estimate_noise", 0.0)
    if float(initial["estimate_noise"]) < 0:
        raise ConfigError("initial.estimate_noise must be >= 0")
    for key, shape in (("x", (N, n)), ("v", (N, n)), ("y", (N, N, n))):
        if key in initial and np.size(initial[key]) != int(np.prod(shape)):
            raise ConfigError(f"initial.{key} needs {int(np.prod(shape))} numbers")

    output = raw.setdefault("output", {})
    output.setdefault("dir", os.path.join("output", raw["name"]))
    output.setdefault("stride", 100)
    if not isinstance(output["stride"], int) or output["stride"] < 1:
        raise ConfigError("output.stride must be a positive integer")

    smoothing = raw.setdefault("smoothing", {"enabled": False, "nu": 1e-3})
    smoothing.setdefault("enabled", False)
    smoothing.setdefault("nu", 1e-3)
    if smoothing["enabled"]:
        _positive(smoothing["nu"], "smoothing.nu")

    workers = raw.setdefault("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("'workers' must be a positive integer")
    n_seeds = raw.setdefault("monte_carlo", {}).setdefault("n_seeds", 20)

    if reference_ne is not None and np.size(reference_ne) != N * n:
        raise ConfigError(f"game.ne needs {N * n} numbers")

    return SimConfig(
        name=raw["name"], algorithm=algorithm, game=game, gains=gains, disturbance=disturbance,
        dt=dt, horizon=horizon, seed=seed, graph=graph, modes=modes, switching=switching,
        trigger=trigger, initial=initial, output=output, smoothing=smoothing,
        gain_check=gain_check, gain_violations=violations, workers=workers, n_seeds=int(n_seeds),
        reference_ne=reference_ne, raw=raw,
    )


def apply_overrides(raw, seed=None, horizon=None, dt=None, out=None):
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = seed
    if horizon is not None:
        raw["horizon"] = horizon
    if dt is not None:
        raw["dt"] = dt
    if out is not None:
        raw.setdefault("output", {})["dir"] = out
    return raw


def read_config(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return raw


def load_config(path, **overrides):
    return build_config(apply_overrides(read_config(path), **overrides), source=path)


def embedded_path(name):
    path = os.path.join(CONFIG_DIR, f"{name}.json")
    if not os.path.isfile(path):
        raise ConfigError(f"no embedded config named '{name}'")
    return path


def load_embedded(name, **overrides):
    return load_config(embedded_path(name), **overrides)


def theorem4_instance(config):
    """Theorem4Instance from an alg2 config carrying an 'lmi' section"""
    if config.algorithm != "alg2":
        raise ConfigError("the LMI check needs an alg2 config")
    lmi_raw = config.raw.get("lmi")
    if lmi_raw is None:
        raise ConfigError("config has no 'lmi' section")
    if config.switching.rate_intervals is None:
        raise ConfigError("the LMI check needs switching.rate_intervals")
    N, s = config.N, len(config.modes)
    D = N * N * config.n
    P = lmi_raw.get("P", 1.0)
    per_mode = isinstance(P, list) and len(P) == s and all(
        isinstance(p, dict) or np.ndim(p) in (0, 2) for p in P
    )
    P_list = P if per_mode else [P] * s
    return Theorem4Instance(
        graphs=config.modes,
        K=config.gains.k4,
        P=[matrix_from_spec(p, N, f"lmi.P({m + 1})") for m, p in enumerate(P_list)],
        Q=matrix_from_spec(lmi_raw.get("Q", 1.0), N, "lmi.Q"),
        U=matrix_from_spec(lmi_raw.get("U", 1.0), N, "lmi.U"),
        R=matrix_from_spec(lmi_raw.get("R", 1.0), N, "lmi.R"),
        S=matrix_from_spec(lmi_raw.get("S", 0.0), D, "lmi.S"),
        Phi=config.trigger["Phi"],
        zeta=config.trigger["zeta"],
        h=config.trigger["h"],
        epsilon=config.gains.epsilon,
        rate_intervals=config.switching.rate_intervals,
        n=config.n,
    )
