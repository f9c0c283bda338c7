import argparse
import json
import os
import sys

import numpy as np

from errors import ConfigError, NESError
from game import check_strong_monotonicity, estimate_lipschitz, solve_ne
from lmi import heuristic_search_theorem4, verify_theorem4
from load_config import embedded_path, load_config, read_config, theorem4_instance
from sim import _jsonable, simulate, write_json
from switching import sample_signal, signal_frame


class _Parser(argparse.ArgumentParser):
    """usage errors exit with code 1 instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"ERROR usage: {message}\n")
        raise SystemExit(1)


def _emit(report, args):
    if args.json:
        print(json.dumps(_jsonable(report), indent=4, sort_keys=True))


def _overrides(args):
    return {"seed": args.seed, "horizon": args.horizon, "dt": args.dt, "out": args.out}


def cmd_simulate(args):
    config = load_config(args.config, **_overrides(args))
    report = simulate(
        config, verbose=args.verbose, use_wandb=args.wandb == "True", project_name=args.project_name,
        report_name=args.report_name, monte_carlo=args.monte_carlo,
    )
    _emit(report, args)


def cmd_reproduce(args):
    config = load_config(embedded_path(args.scenario), **_overrides(args))
    report = simulate(
        config, verbose=args.verbose, use_wandb=args.wandb == "True", project_name=args.project_name,
        report_name=args.report_name, monte_carlo=args.monte_carlo,
    )
    _emit(report, args)


def cmd_verify_lmi(args):
    config = load_config(args.config)
    inst = theorem4_instance(config)
    report = verify_theorem4(inst)
    if args.grid:
        grid = read_config(args.grid)
        _, search = heuristic_search_theorem4(inst, grid)
        report["search"] = search
    print(f"[LMI] feasible={report['feasible']} | worst max eig={report['worst_max_eig']:.6e}"
          f" | cond20 min eig={report['condition_20']['min_eig']:.6e}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "lmi_report.json"), report)
    _emit(report, args)


def cmd_gen_switching(args):
    config = load_config(args.config, seed=args.seed, horizon=args.horizon)
    if config.switching is None:
        raise ConfigError("gen-switching needs an alg2 config with a 'switching' section")
    signal = sample_signal(config.switching, config.horizon, config.seed)
    out_dir = args.out or config.output["dir"]
    os.makedirs(out_dir, exist_ok=True)
    signal_frame(signal).to_csv(os.path.join(out_dir, "modes.csv"), index=False, float_format="%.17e")
    report = {"jumps": int(len(signal.jump_times) - 1), "horizon": config.horizon, "seed": config.seed}
    print(f"[SWITCHING] {report['jumps']} jumps on [0, {config.horizon:g}] -> {out_dir}/modes.csv")
    _emit(report, args)


def cmd_solve_ne(args):
    config = load_config(args.config)
    game = config.game
    x = solve_ne(game, tol=args.tol)
    mono = check_strong_monotonicity(game, n_samples=args.samples, seed=config.seed)
    report = {
        "ne": x,
        "residual": float(np.linalg.norm(np.concatenate([game.grad(i, x) for i in range(game.N)]))),
        "mu": game.mu,
        "monotonicity": mono,
        "lipschitz_declared": game.lipschitz,
        "lipschitz_estimated": estimate_lipschitz(game, seed=config.seed),
        "k1_bound": game.k1_bound,
    }
    print("[NE]", np.array2string(np.asarray(x).reshape(game.N, game.n), precision=4))
    _emit(report, args)


def build_parser():
    parser = _Parser(prog="cli.py", description="robust distributed NE seeking simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(p):
        p.add_argument('--seed', type=int)
        p.add_argument('--horizon', type=float)
        p.add_argument('--dt', type=float)
        p.add_argument('--out', type=str)
        p.add_argument('--json', action='store_true')
        p.add_argument('--verbose', action='store_true')
        p.add_argument('--monte_carlo', action='store_true')
        p.add_argument('--wandb', type=str, default="False")
        p.add_argument('--project_name', type=str, default="robust-nes")
        p.add_argument('--report_name', type=str)

    p = sub.add_parser('simulate')
    p.add_argument('--config', type=str, required=True)
    run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('reproduce')
    p.add_argument('scenario', type=str)  # 'paper-alg1', 'paper-alg2'
    run_flags(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser('verify-lmi')
    p.add_argument('--config', type=str, required=True)
    p.add_argument('--grid', type=str)
    p.add_argument('--out', type=str)
    p.add_argument('--json', action='store_true')
    p.set_defaults(func=cmd_verify_lmi)

    p = sub.add_parser('gen-switching')
    p.add_argument('--config', type=str, required=True)
    p.add_argument('--seed', type=int)
    p.add_argument('--horizon', type=float)
    p.add_argument('--out', type=str)
    p.add_argument('--json', action='store_true')
    p.set_defaults(func=cmd_gen_switching)

    p = sub.add_parser('solve-ne')
    p.add_argument('--config', type=str, required=True)
    p.add_argument('--tol', type=float, default=1e-8)
    p.add_argument('--samples', type=int, default=1000)
    p.add_argument('--json', action='store_true')
    p.set_defaults(func=cmd_solve_ne)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        args.func(args)
    except NESError as err:
        sys.stderr.write(f"ERROR {err.code}: {err}\n")
        return err.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
