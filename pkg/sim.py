import json
import multiprocessing as mp
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import wandb
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score
from tqdm import tqdm

from controller import closed_loop_derivative, euler_step, initial_state
from errors import InvalidArgumentError, MonteCarloError, NESError
from game import pseudo_gradient, solve_ne
from load_config import build_config
from switching import make_rng, mode_at, sample_signal, signal_frame
from trigger import TriggerState, advance_sampling_instant, events_frame

SLIDING_TOL = 1e-3
SLIDING_BAND = 5e-3
TRACKING_TOL = 1e-2
CONSENSUS_TOL = 1e-3
NE_TOL = 5e-2
MC_SEED_STRIDE = 1000003
FLOAT_FORMAT = "%.17e"


@dataclass
class Trajectory:
    """
    Downsampled run record; every series shares the time grid t.

    x, v: (K, N, n); s_norm, eta, est_err: (K, N) with est_err[k, i] = ‖yⁱ − x‖;
    delta_sq: (K,) = ‖y − 𝟙⊗x‖²; mode: (K,) active mode (0 without switching)
    """
    name: str
    algorithm: str
    t: np.ndarray
    mode: np.ndarray
    x: np.ndarray
    v: np.ndarray
    s_norm: np.ndarray
    eta: np.ndarray
    est_err: np.ndarray
    delta_sq: np.ndarray
    sup_vdot: np.ndarray
    alpha: float
    trigger: TriggerState = None
    signal: object = None

    @property
    def alpha_ok(self):
        return bool(self.alpha > float(np.max(self.sup_vdot)))


@dataclass
class ConvergenceReport:
    final_x_err: float
    final_x_err_max: float
    final_v_norm: float
    sliding_settling_time: float = None
    sliding_band_ok: bool = None
    tracking_time: float = None
    estimate_consensus_time: float = None
    ne_convergence_time: float = None
    events_per_player: list = None
    samples_per_player: list = None
    sup_vdot: list = None
    alpha_ok: bool = None
    ms_curve: dict = None
    gain_violations: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


class _Recorder:
    def __init__(self, n_records, N, n):
        self.k = 0
        self.t = np.empty(n_records)
        self.mode = np.zeros(n_records, dtype=int)
        self.x = np.empty((n_records, N, n))
        self.v = np.empty((n_records, N, n))
        self.s_norm = np.empty((n_records, N))
        self.eta = np.empty((n_records, N))
        self.est_err = np.empty((n_records, N))
        self.delta_sq = np.empty(n_records)

    def add(self, t, state, mode=0, track_sliding=True):
        k = self.k
        err = state.estimate_error()
        self.t[k] = t
        self.mode[k] = mode
        self.x[k] = state.x
        self.v[k] = state.v
        self.s_norm[k] = np.linalg.norm(state.sliding_variable(), axis=1) if track_sliding else 0.0
        self.eta[k] = state.eta()
        self.est_err[k] = np.sqrt(np.sum(err ** 2, axis=(1, 2)))
        self.delta_sq[k] = float(np.sum(err ** 2))
        self.k += 1


def _record_count(steps, stride):
    return steps // stride + 1 + (1 if steps % stride else 0)


def _initial(config, seed):
    init = config.initial
    rng = make_rng(seed, stream=1)
    return initial_state(
        config.N, config.n, x0=init.get("x"), v0=init.get("v"), y0=init.get("y"),
        estimate_noise=float(init.get("estimate_noise", 0.0)), rng=rng,
    )


def run(config, seed=None, verbose=False, wandb_log=False):
    """
    Fixed-step explicit Euler integration of the closed loop.

    alg2: at every sample q·h the profile is frozen, the mode is read from
    the pre-sampled switching signal and the trigger is evaluated; the
    estimator only sees held broadcasts and the frozen profile.
    """
    seed = config.seed if seed is None else seed
    N, n, dt = config.N, config.n, config.dt
    steps = config.steps
    stride = config.output["stride"]
    alg = config.algorithm

    state = _initial(config, seed)
    rec = _Recorder(_record_count(steps, stride), N, n)
    sup_vdot = np.zeros(N)
    log_every = max(1, int(round(1.0 / dt)))

    ts, signal, sampled_x, mode, h_steps = None, None, None, None, None
    if alg == "alg2":
        trig = config.trigger
        ts = TriggerState(N=N, n=n, h=trig["h"], zeta=trig["zeta"], Phi=trig["Phi"])
        signal = sample_signal(config.switching, config.horizon, seed)
        h_steps = config.h_steps

    for k in tqdm(range(steps), disable=not verbose, desc=f"[SIM][{alg.upper()}]"):
        t = k * dt
        if ts is not None and k % h_steps == 0:
            q = k // h_steps
            mode = mode_at(signal, min(ts.grid_time(q), config.horizon))
            sampled_x = state.x.copy()
            advance_sampling_instant(ts, state.y, sampled_x, config.modes[mode - 1], q)
        if k % stride == 0:
            rec.add(t, state, mode or 0, alg != "baseline")
            if wandb_log:
                wandb.log({
                    "t": t, "max_s_norm": float(rec.s_norm[rec.k - 1].max()),
                    "est_err": float(np.sqrt(rec.delta_sq[rec.k - 1])),
                    "v_norm": float(np.linalg.norm(state.v)),
                })
        if verbose and k % log_every == 0:
            tqdm.write(
                f"[SIM][{alg.upper()}] t={t:.3f} | max_s={np.linalg.norm(state.sliding_variable(), axis=1).max():.3e}"
                f" | est_err={np.linalg.norm(state.estimate_error()):.3e} | v_norm={np.linalg.norm(state.v):.3e}"
            )
        deriv = closed_loop_derivative(state, t, config, mode, ts, sampled_x)
        np.maximum(sup_vdot, np.abs(deriv.v).max(axis=1), out=sup_vdot)
        state = euler_step(state, deriv, dt)

    rec.add(steps * dt, state, mode or 0, alg != "baseline")
    return Trajectory(
        name=config.name, algorithm=alg, t=rec.t[:rec.k], mode=rec.mode[:rec.k], x=rec.x[:rec.k],
        v=rec.v[:rec.k], s_norm=rec.s_norm[:rec.k], eta=rec.eta[:rec.k], est_err=rec.est_err[:rec.k],
        delta_sq=rec.delta_sq[:rec.k], sup_vdot=sup_vdot, alpha=config.gains.alpha,
        trigger=ts, signal=signal,
    )


def run_reduced(config, x0=None):
    """
    Reduced slow system with exact information and no disturbance:
        ẋ = v,  v̇ = −k₁F(x) − v
    """
    if config.algorithm not in ("alg1", "baseline"):
        raise InvalidArgumentError("the reduced system is defined for the alg1 family")
    N, n, dt = config.N, config.n, config.dt
    steps, stride = config.steps, config.output["stride"]
    game, k1 = config.game, config.gains.k1
    init = config.initial
    if x0 is None:
        x0 = init.get("x", np.zeros(N * n))
    x = np.array(x0, dtype=float).ravel()
    v = np.array(init.get("v", np.zeros(N * n)), dtype=float).ravel()

    n_rec = _record_count(steps, stride)
    t_rec, x_rec, v_rec = np.empty(n_rec), np.empty((n_rec, N, n)), np.empty((n_rec, N, n))
    r = 0
    for k in range(steps):
        if k % stride == 0:
            t_rec[r], x_rec[r], v_rec[r] = k * dt, x.reshape(N, n), v.reshape(N, n)
            r += 1
        a = -k1 * pseudo_gradient(game, x) - v
        x, v = x + dt * v, v + dt * a
    t_rec[r], x_rec[r], v_rec[r] = steps * dt, x.reshape(N, n), v.reshape(N, n)
    r += 1
    zeros = np.zeros((r, N))
    return Trajectory(
        name=config.name, algorithm="reduced", t=t_rec[:r], mode=np.zeros(r, dtype=int),
        x=x_rec[:r], v=v_rec[:r], s_norm=zeros, eta=zeros.copy(), est_err=zeros.copy(),
        delta_sq=np.zeros(r), sup_vdot=np.zeros(N), alpha=config.gains.alpha,
    )


def _settled_time(t, series, tol):
    """first time after which series stays below tol; None if it ends above"""
    below = series < tol
    if not below[-1]:
        return None
    above = np.flatnonzero(~below)
    return float(t[0]) if above.size == 0 else float(t[above[-1] + 1])


def fit_exponential_decay(t, y, tail=0.5):
    """
    log-linear least squares over the last `tail` fraction of the samples

    Returns:
        {"rate": decay rate (> 0 for decay), "r2": coefficient of determination}
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0.0 < tail <= 1.0:
        raise InvalidArgumentError(f"tail must be in (0, 1], got {tail}")
    start = int(len(t) * (1.0 - tail))
    t, y = t[start:], y[start:]
    keep = y > 0.0
    if keep.sum() < 3:
        raise InvalidArgumentError("need at least 3 positive samples in the fit window")
    X = t[keep].reshape(-1, 1)
    log_y = np.log(y[keep])
    reg = LinearRegression().fit(X, log_y)
    return {"rate": float(-reg.coef_[0]), "r2": float(r2_score(log_y, reg.predict(X)))}


def metrics(traj, ne, ne_tol=NE_TOL):
    """ConvergenceReport from a trajectory and the NE profile"""
    ne = np.asarray(ne, dtype=float).reshape(traj.x.shape[1:])
    dx = traj.x - ne[None]
    x_err = np.sqrt(np.sum(dx ** 2, axis=(1, 2)))
    max_s = traj.s_norm.max(axis=1)
    v_norms = np.linalg.norm(traj.v, axis=2)
    tracking_err = np.abs(traj.eta - v_norms.mean(axis=1, keepdims=True)).max(axis=1)

    # first sample below SLIDING_TOL after the last excursion out of the band
    sliding_time = None
    outside = np.flatnonzero(max_s >= SLIDING_BAND)
    after = 0 if outside.size == 0 else outside[-1] + 1
    hit = np.flatnonzero(max_s[after:] < SLIDING_TOL)
    if hit.size:
        sliding_time = float(traj.t[after + hit[0]])
    band_ok = sliding_time is not None

    report = ConvergenceReport(
        final_x_err=float(x_err[-1]),
        final_x_err_max=float(np.abs(dx[-1]).max()),
        final_v_norm=float(np.linalg.norm(traj.v[-1])),
        sliding_settling_time=sliding_time,
        sliding_band_ok=band_ok,
        tracking_time=_settled_time(traj.t, tracking_err, TRACKING_TOL),
        estimate_consensus_time=_settled_time(traj.t, np.sqrt(traj.delta_sq), CONSENSUS_TOL),
        ne_convergence_time=_settled_time(traj.t, np.abs(dx).max(axis=(1, 2)), ne_tol),
        sup_vdot=traj.sup_vdot.tolist(),
        alpha_ok=traj.alpha_ok,
    )
    if traj.trigger is not None:
        report.events_per_player = [len(ev) for ev in traj.trigger.events]
        report.samples_per_player = traj.trigger.samples.tolist()
    return report


def reference_ne(config):
    if config.reference_ne is not None:
        return np.asarray(config.reference_ne, dtype=float)
    return solve_ne(config.game)


def _mc_member(args):
    raw, seed = args
    try:
        cfg = build_config(raw, quiet=True)
        traj = run(cfg, seed=seed)
    except NESError as err:
        return seed, None, str(err)
    return seed, (traj.t, traj.delta_sq, traj.x[-1]), None


def run_monte_carlo(config, n_seeds, workers=None, verbose=False):
    """
    Mean-square curve E‖δ(t)‖² over n_seeds runs with seeds
    base + 1000003·k, joined in seed order.
    """
    if config.algorithm != "alg2":
        raise InvalidArgumentError("Monte-Carlo statistics are defined for alg2")
    if n_seeds < 1:
        raise InvalidArgumentError(f"n_seeds must be >= 1, got {n_seeds}")
    workers = config.workers if workers is None else workers
    seeds = [config.seed + MC_SEED_STRIDE * k for k in range(n_seeds)]
    jobs = [(config.raw, s) for s in seeds]

    if workers > 1:
        with mp.Pool(min(workers, mp.cpu_count(), n_seeds)) as pool:
            results = list(tqdm(pool.imap(_mc_member, jobs), total=n_seeds, disable=not verbose,
                                desc="[MC]"))
    else:
        results = []
        for s in tqdm(seeds, disable=not verbose, desc="[MC]"):
            try:
                traj = run(config, seed=s)
                results.append((s, (traj.t, traj.delta_sq, traj.x[-1]), None))
            except NESError as err:
                results.append((s, None, str(err)))

    failed = [(s, msg) for s, out, msg in results if out is None]
    if failed:
        detail = "; ".join(f"seed {s}: {msg}" for s, msg in failed)
        raise MonteCarloError(f"{len(failed)} Monte-Carlo member(s) failed ({detail})",
                              failed_seeds=[s for s, _ in failed])

    t = results[0][1][0]
    curves = np.stack([out[1] for _, out, _ in results])
    finals = np.stack([out[2] for _, out, _ in results])
    ms = curves.mean(axis=0)
    return {
        "seeds": seeds,
        "t": t,
        "ms_curve": ms,
        "ms_ratio": float(ms[-1] / ms[0]) if ms[0] > 0 else float("nan"),
        "final_x": finals,
    }


def trajectory_frame(traj):
    """one row per (record, player)"""
    K, N, n = traj.x.shape
    data = {
        "t": np.repeat(traj.t, N),
        "mode": np.repeat(traj.mode, N),
        "player": np.tile(np.arange(1, N + 1), K),
    }
    for c in range(n):
        data[f"x_{c + 1}"] = traj.x[:, :, c].ravel()
    for c in range(n):
        data[f"v_{c + 1}"] = traj.v[:, :, c].ravel()
    data["s_norm"] = traj.s_norm.ravel()
    data["eta"] = traj.eta.ravel()
    data["est_err"] = traj.est_err.ravel()
    return pd.DataFrame(data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, indent=4, sort_keys=True)


def write_outputs(out_dir, config, traj=None, report=None):
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "run_config.json"), config.raw)
    if traj is not None:
        trajectory_frame(traj).to_csv(os.path.join(out_dir, "trajectory.csv"), index=False,
                                      float_format=FLOAT_FORMAT)
        if traj.trigger is not None:
            events_frame(traj.trigger).to_csv(os.path.join(out_dir, "events.csv"), index=False,
                                              float_format=FLOAT_FORMAT)
        if traj.signal is not None:
            signal_frame(traj.signal).to_csv(os.path.join(out_dir, "modes.csv"), index=False,
                                             float_format=FLOAT_FORMAT)
    if report is not None:
        write_json(os.path.join(out_dir, "report.json"), report)
    print(f"{out_dir}에 결과 저장")


def simulate(config, verbose=False, use_wandb=False, project_name="robust-nes", report_name=None,
             monte_carlo=False, write=True):
    """
    run + metrics (+ Monte-Carlo curve for alg2 when requested) + output files

    Returns:
        report dict
    """
    if use_wandb:
        wandb.init(project=project_name, name=report_name or config.name, config=config.raw)
    try:
        traj = run(config, verbose=verbose, wandb_log=use_wandb)
        ne = reference_ne(config)
        report = metrics(traj, ne).to_dict()
        report["name"] = config.name
        report["algorithm"] = config.algorithm
        report["seed"] = config.seed
        report["ne"] = np.asarray(ne).ravel()
        report["final_x"] = traj.x[-1].ravel()
        report["gain_violations"] = list(config.gain_violations)
        if not traj.alpha_ok and config.algorithm == "alg1":
            print(f"[WARN] alpha={config.gains.alpha:g} below realized sup|dv/dt|={traj.sup_vdot.max():.4g}")
        if monte_carlo and config.algorithm == "alg2":
            mc = run_monte_carlo(config, config.n_seeds, verbose=verbose)
            report["ms_curve"] = {"t": mc["t"], "mean_delta_sq": mc["ms_curve"], "seeds": mc["seeds"],
                                  "ratio": mc["ms_ratio"]}
        print(f"[SIM][{config.algorithm.upper()}][DONE] final |x-x*|={report['final_x_err']:.4e}"
              f" | max coord err={report['final_x_err_max']:.4e} | |v|={report['final_v_norm']:.4e}")
        if use_wandb:
            wandb.log({"final_x_err": report["final_x_err"], "final_v_norm": report["final_v_norm"]})
    finally:
        if use_wandb:
            wandb.finish()
    if write:
        write_outputs(config.output["dir"], config, traj, report)
    return report
