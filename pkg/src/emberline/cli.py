"""Command-line interface: ``emberline {run,calibrate,benchmark,rl-demo}``.

Exit codes: 0 success, 1 usage error, 2 input/file error, 3 numerical failure.
Every command that writes files also writes ``manifest.txt``; passing it back
with ``--manifest`` reproduces the run (explicit flags override manifest keys).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import agents
from . import env as rl
from .calibration import (CalibrationError, CalibrationTarget, LossConfig, burn_probability_map, calibrate, iou,
                          self_calibration_problem)
from .engine import BatchState, ContinuousState, RngKey, fire_fraction_stats, run, run_batch
from .geodata import FuelTable, RasterError, environment_from_rasters, read_ascii_grid, synthetic_environment
from .grid import BURNING, GridError, SimConfig, WindField
from .snapshot import Snapshot, SnapshotError, format_manifest, parse_manifest, write_snapshots

log = logging.getLogger("emberline")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- shared options --------------------------------------------------------------

_PARAM_FLAGS = {name: "--" + name.replace("_", "-") for name in SimConfig.PARAMS}
_NOT_REPLAYED = {"command", "manifest", "out_dir", "verbose", "func"}


def _cell(text: str) -> tuple[int, int]:
    try:
        r, c = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROW,COL, got {text!r}") from None
    return r, c


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def _add_sim_options(p):
    g = p.add_argument_group("spread parameters")
    defaults = SimConfig()
    for name, flag in _PARAM_FLAGS.items():
        g.add_argument(flag, dest=name, type=float, default=getattr(defaults, name))


def _add_env_options(p):
    g = p.add_argument_group("environment")
    g.add_argument("--env", choices=("synthetic", "files"), default="synthetic")
    g.add_argument("--rows", type=int, default=64)
    g.add_argument("--cols", type=int, default=64)
    g.add_argument("--env-seed", type=int, default=0, help="seed for the synthetic landscape")
    g.add_argument("--forest-density", type=float, default=0.8)
    g.add_argument("--roughness", type=float, default=20.0, help="elevation std in meters")
    g.add_argument("--dem", help="ESRI ASCII grid elevation file")
    g.add_argument("--landcover", help="ESRI ASCII grid of landcover class codes")
    g.add_argument("--fuel-table", help="fuel table file (default: shipped WorldCover table)")
    g.add_argument("--ignition", type=_cell, action="append", metavar="ROW,COL",
                   help="ignition cell, model rows count from the south edge (repeatable; default: center)")
    g.add_argument("--wind-speed", type=float, default=0.0)
    g.add_argument("--wind-dir", type=float, default=0.0, help="radians, east = 0, counter-clockwise")
    g.add_argument("--wind-schedule", help="file of 'speed direction' lines, one per step")


def _load_grid(args):
    if args.env == "files":
        if not (args.dem and args.landcover):
            raise UsageError("--env files needs --dem and --landcover")
        table = FuelTable.load(_existing(args.fuel_table)) if args.fuel_table else FuelTable.worldcover()
        grid = environment_from_rasters(read_ascii_grid(_existing(args.dem)),
                                        read_ascii_grid(_existing(args.landcover)), table)
    else:
        if args.rows < 2 or args.cols < 2:
            raise UsageError("--rows and --cols must be at least 2")
        grid = synthetic_environment((args.rows, args.cols), args.env_seed,
                                     forest_density=args.forest_density, roughness=args.roughness)
    grid = grid.with_wind(WindField.uniform(grid.dims, args.wind_speed, args.wind_dir))
    fire = np.zeros(grid.dims, dtype=np.int8)
    for r, c in args.ignition or [(grid.dims[0] // 2, grid.dims[1] // 2)]:
        if not grid.in_bounds(r, c):
            raise UsageError(f"ignition cell {r},{c} outside grid {grid.dims}")
        fire[r, c] = BURNING
    return grid.with_fire(fire)


def _load_schedule(args, dims):
    if not args.wind_schedule:
        return None
    schedule = []
    for lineno, line in enumerate(Path(_existing(args.wind_schedule)).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            speed, direction = (float(x) for x in line.split())
        except ValueError:
            raise InputError(f"{args.wind_schedule}:{lineno}: expected 'speed direction'") from None
        schedule.append(WindField.uniform(dims, speed, direction))
    return schedule


def _existing(path) -> str:
    if not Path(path).is_file():
        raise InputError(f"no such file: {path}")
    return str(path)


def _sim_config(args, max_steps: int = 200) -> SimConfig:
    try:
        return SimConfig(*(getattr(args, n) for n in SimConfig.PARAMS), max_steps=max(1, max_steps))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args) -> None:
    entries = {"command": args.command}
    for key, value in vars(args).items():
        if key in _NOT_REPLAYED or value is None:
            continue
        entries[key] = value
    (out / "manifest.txt").write_text(format_manifest(entries))


def _manifest_argv(parser: argparse.ArgumentParser, path: str) -> list[str]:
    entries = parse_manifest(Path(_existing(path)).read_text())
    actions = {a.dest: a for a in parser._actions}
    argv = []
    for key, value in entries.items():
        if key == "command":
            continue
        action = actions.get(key)
        if action is None:
            raise InputError(f"{path}: unknown manifest key {key!r}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value == "True":
                argv.append(flag)
        elif isinstance(action, argparse._AppendAction) or isinstance(action.nargs, int):
            if isinstance(action.nargs, int):
                argv += [flag, *value.split()]
            else:
                for item in value.split():
                    argv += [flag, item]
        else:
            argv += [flag, value]
    return argv


def _fmt_cells(cells):
    return [f"{r},{c}" for r, c in cells]


# -- run -------------------------------------------------------------------------


def _most_likely(state: ContinuousState) -> np.ndarray:
    return np.argmax(np.stack([state.p_un, state.p_burn, state.p_bd]), axis=0).astype(np.int8)


def cmd_run(args) -> int:
    grid = _load_grid(args)
    cfg = _sim_config(args, args.steps)
    schedule = _load_schedule(args, grid.dims)
    out = _out_dir(args)
    if args.mode == "stochastic":
        key = RngKey(args.seed, 0, args.stream)
        final, traj = run(grid.fire, grid, cfg, key, steps=args.steps, record=args.record, wind_schedule=schedule)
        to_fire = lambda s: s  # noqa: E731
    else:
        initial = ContinuousState.from_fire(grid.fire)
        final, traj = run(initial, grid, cfg, steps=args.steps, record=args.record, wind_schedule=schedule)
        to_fire = _most_likely
        from .geodata import Raster, write_ascii_grid
        prob = np.asarray(burn_probability_map(final))[::-1]
        write_ascii_grid(out / "final_burn_probability.asc", Raster(prob, 1.0))
    write_snapshots(out / "initial.snap", [Snapshot(grid.fire, 0)])
    write_snapshots(out / "final.snap", [Snapshot(to_fire(final), args.steps)])
    if traj is not None:
        write_snapshots(out / "trajectory.snap", [Snapshot(to_fire(s), t) for t, s in enumerate(traj)])
    if args.ignition:
        args.ignition = _fmt_cells(args.ignition)
    _write_manifest(out, args)
    un, burning, burned = fire_fraction_stats(final)
    print(f"steps={args.steps} mode={args.mode} unburned={un:.6f} burning={burning:.6f} burned={burned:.6f}")
    return EXIT_OK


# -- calibrate -------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    out = _out_dir(args)
    lc = LossConfig(args.bce_weight, args.mse_weight, args.pool_size, args.bce_epsilon)
    if args.self_test:
        problem = self_calibration_problem()
        grid, initial, target, init_theta = problem.grid, problem.initial, problem.target, problem.init_theta
        base = problem.true_config
    else:
        if not args.target:
            raise UsageError("calibrate needs --target (or --self-test)")
        mask = read_ascii_grid(_existing(args.target)).to_model()
        grid = _load_grid(args)
        if args.horizon is None:
            raise UsageError("calibrate needs --horizon")
        try:
            target = CalibrationTarget(mask, args.horizon)
        except ValueError as exc:
            raise InputError(f"{args.target}: {exc}") from None
        initial = ContinuousState.from_fire(grid.fire)
        base = _sim_config(args)
        init_theta = args.init if args.init else base.params()
    lines = ["# iteration loss " + " ".join(SimConfig.PARAMS)]

    def record(k, value, theta):
        lines.append(f"{k} {value!r} " + " ".join(repr(float(t)) for t in theta))

    result = calibrate(grid, initial, target, lc, iterations=args.iterations, init_theta=init_theta, lr=args.lr,
                       fixed=tuple(args.fix or ()), base=base, callback=record)
    (out / "calibration.log").write_text("\n".join(lines) + "\n")
    final, _ = run(initial, grid, result.config(base), steps=target.horizon)
    score = iou(np.asarray(burn_probability_map(final)) >= args.threshold, target.burn_mask)
    summary = {
        "theta": dict(zip(SimConfig.PARAMS, map(float, result.theta))),
        "initial_loss": result.history[0],
        "best_loss": result.best_loss,
        "iterations": args.iterations,
        "iou": score,
        "threshold": args.threshold,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, args)
    ratio = result.best_loss / result.history[0] if result.history[0] > 0 else 0.0
    print(f"initial_loss={result.history[0]:.6g} best_loss={result.best_loss:.6g} ratio={ratio:.4f} iou={score:.4f}")
    if args.self_test and not (score > 0.8 and ratio < 0.1):
        print("self-test FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- benchmark -------------------------------------------------------------------


def _time_batch(grid, cfg, n, steps, mode, seed):
    fire = np.broadcast_to(grid.fire, (n,) + grid.dims)
    if mode == "stochastic":
        batch = BatchState.stochastic(fire, seed=seed)
    else:
        batch = BatchState.deterministic([ContinuousState.from_fire(grid.fire)] * n)
    t0 = time.perf_counter()
    run_batch(batch, grid, cfg, steps)
    return time.perf_counter() - t0


def benchmark_rows(sizes, batches, steps, repeats, modes, seed=0):
    """Yield dicts with per-configuration throughput; the first run of each is a discarded warm-up."""
    cfg = SimConfig()
    for size in sizes:
        grid = synthetic_environment((size, size), seed, forest_density=0.9)
        fire = np.zeros(grid.dims, dtype=np.int8)
        fire[size // 2, size // 2] = BURNING
        grid = grid.with_fire(fire).with_wind(WindField.uniform(grid.dims, 2.0, 0.5))
        for mode in modes:
            for n in batches:
                _time_batch(grid, cfg, n, steps, mode, seed)
                times = np.array([_time_batch(grid, cfg, n, steps, mode, seed) for _ in range(repeats)])
                sps = n * steps / times
                yield {
                    "grid": f"{size}x{size}", "batch": n, "mode": mode,
                    "rng": "yes" if mode == "stochastic" else "no", "repeats": repeats,
                    "steps_per_s": float(sps.mean()), "steps_per_s_std": float(sps.std()),
                    "cell_steps_per_s": float(sps.mean() * size * size),
                }


def cmd_benchmark(args) -> int:
    if args.steps < 1 or args.repeats < 1:
        raise UsageError("--steps and --repeats must be positive")
    modes = ("stochastic", "deterministic") if args.mode == "both" else (args.mode,)
    cols = ["grid", "batch", "mode", "rng", "repeats", "steps_per_s", "steps_per_s_std", "cell_steps_per_s"]
    print("\t".join(cols))
    for row in benchmark_rows(args.sizes, args.batches, args.steps, args.repeats, modes, args.seed):
        print("\t".join(f"{row[c]:.1f}" if isinstance(row[c], float) else str(row[c]) for c in cols), flush=True)
    return EXIT_OK


# -- rl-demo ---------------------------------------------------------------------


def _env_config(args) -> rl.EnvConfig:
    base = rl.SMOKE_CONFIG if args.preset == "smoke" else rl.EnvConfig()
    overrides = {}
    if args.size is not None:
        overrides["dims"] = (args.size, args.size)
    for name in ("radius", "water", "max_steps", "wind_speed", "wind_direction"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.penalty is not None:
        overrides["burn_penalty"] = args.penalty
    try:
        return base.replace(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_trace(trace_dir: Path, index: int, episode: agents.Episode) -> None:
    snaps, rows = [], ["step\taction\tmove\tvalve\treward"]
    for st, action, reward in episode.trace:
        snaps.append(Snapshot(st.fire, st.step, (st.agent.row, st.agent.col, st.water)))
        if action is not None:
            rows.append(f"{st.step}\t{action.index}\t{action.move.name}\t{action.valve.name}\t{reward!r}")
    write_snapshots(trace_dir / f"episode_{index:03d}.snap", snaps)
    (trace_dir / f"episode_{index:03d}.tsv").write_text("\n".join(rows) + "\n")


def cmd_rl_demo(args) -> int:
    cfg = _env_config(args)
    key = RngKey(args.seed, 0, 0)
    history = None
    if args.policy == "heuristic":
        policy, n_eval = agents.heuristic_policy, args.episodes
    elif args.policy == "random":
        policy, n_eval = agents.random_policy, args.episodes
    else:
        policy, history = agents.train_reinforce(cfg, episodes=args.episodes, lr=args.lr, discount=args.discount,
                                                 seed=args.seed, batch_size=args.batch_size)
        n_eval = args.eval_episodes
        key = RngKey(args.seed, 0, 1_000_000)
    stats = agents.run_batch_episodes(cfg, policy, max(n_eval, 1), key)
    print(f"policy={args.policy} episodes={max(n_eval, 1)} mean_return={stats.mean:.4f} "
          f"std_return={stats.std:.4f} success_rate={stats.success_rate:.4f}")
    if history is not None and history:
        first, last = agents.learning_progress(history)
        print(f"training_episodes={len(history)} smoothed_first10={first:.4f} smoothed_last10={last:.4f}")
    if args.out_dir:
        out = _out_dir(args)
        summary = {"policy": args.policy, "mean": stats.mean, "std": stats.std,
                   "success_rate": stats.success_rate, "episodes": len(stats.returns)}
        (out / "stats.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "returns.tsv").write_text("".join(f"{i}\t{r!r}\n" for i, r in enumerate(stats.returns)))
        if history is not None:
            (out / "training.tsv").write_text("".join(f"{i}\t{r!r}\n" for i, r in enumerate(history)))
        _write_manifest(out, args)
    if args.trace_dir:
        trace_dir = Path(args.trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        for i in range(args.traces):
            _write_trace(trace_dir, i, agents.play_episode(cfg, policy, agents.episode_key(key, i), record=True))
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emberline", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate fire spread")
    _add_env_options(p)
    _add_sim_options(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--mode", choices=("stochastic", "deterministic"), default="stochastic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--record", action="store_true", help="also write every intermediate state")
    p.add_argument("--out-dir", default="emberline-run")
    p.add_argument("--manifest", help="replay settings from a manifest.txt")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="fit spread parameters to a burn mask")
    _add_env_options(p)
    _add_sim_options(p)
    p.add_argument("--target", help="ASCII grid of 0/1 burned cells")
    p.add_argument("--horizon", type=int, help="steps from ignition to the observed perimeter")
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--init", type=float, nargs=6, metavar=tuple(n.upper() for n in SimConfig.PARAMS),
                   help="initial parameters (default: the spread-parameter flags)")
    p.add_argument("--fix", action="append", choices=SimConfig.PARAMS, help="hold a parameter fixed (repeatable)")
    p.add_argument("--bce-weight", type=float, default=1.0)
    p.add_argument("--mse-weight", type=float, default=1.0)
    p.add_argument("--pool-size", type=int, default=4)
    p.add_argument("--bce-epsilon", type=float, default=1e-6)
    p.add_argument("--threshold", type=float, default=0.5, help="burn-probability cutoff for IoU")
    p.add_argument("--self-test", action="store_true", help="recover known parameters from a synthetic target")
    p.add_argument("--out-dir", default="emberline-calibration")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("benchmark", help="measure simulation throughput")
    p.add_argument("--sizes", type=_int_list, default=[32, 64])
    p.add_argument("--batches", type=_int_list, default=[1, 16])
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--mode", choices=("stochastic", "deterministic", "both"), default="both")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_benchmark, manifest=None)

    p = sub.add_parser("rl-demo", help="run suppression episodes or REINFORCE training")
    p.add_argument("--policy", choices=("random", "heuristic", "train"), default="heuristic")
    p.add_argument("--preset", choices=("default", "smoke"), default="default")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--eval-episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=4.0)
    p.add_argument("--discount", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--size", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--water", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--penalty", type=float)
    p.add_argument("--wind-speed", type=float)
    p.add_argument("--wind-direction", type=float)
    p.add_argument("--trace-dir")
    p.add_argument("--traces", type=int, default=1)
    p.add_argument("--out-dir")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_rl_demo)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "manifest", None):
            sub = parser._subparsers._group_actions[0].choices[args.command]
            args = parser.parse_args([args.command] + _manifest_argv(sub, args.manifest) + argv[1:])
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, RasterError, SnapshotError, GridError, OSError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CalibrationError, agents.TrainingError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
