"""Command-line front end for batch experiments.

Subcommands::

    mobiroute generate-mobility  --config exp.json --out trace.txt
    mobiroute train              --config exp.json
    mobiroute evaluate           --config exp.json --checkpoint out/checkpoint.json
    mobiroute sweep              --config exp.json --axis x_test --values 30,40,50
    mobiroute qgrid              --checkpoint out/checkpoint.json --x distance --y one_hop

Every command accepts ``--set KEY=VALUE`` (JSON value, repeatable) to
override config keys. Exit codes: 0 success, 2 invalid configuration,
3 I/O or trace-format error, 4 protocol violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, ProtocolViolation, TraceParseError
from .mobility import MobilityConfig, generate_rwp_trace, serialize_trace
from .simulator import SUMMARY_FIELDS, World, aggregate, generate_traffic

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_PROTOCOL = 0, 2, 3, 4

CURVE_HEADER = ("round", "timestep", "mean_delay", "mean_forwards", "experiences")
SUMMARY_HEADER = ("strategy", "seed", "n_devices", "tx_range") + SUMMARY_FIELDS
AGGREGATE_HEADER = ("strategy", "runs", "n_devices", "tx_range") + tuple(
    x for f in SUMMARY_FIELDS for x in (f, f + "_ci")
)
ROUNDS_HEADER = ("strategy", "seed", "timestep", "mean_delay", "mean_forwards", "avg_queue", "max_queue",
                 "delivered", "dropped")
GRID_HEADER = ("x", "y", "q")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    if getattr(args, "out_dir", None):
        overrides["output_dir"] = args.out_dir
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


# -- commands -----------------------------------------------------------------


def cmd_generate_mobility(cfg: ExperimentConfig, out, devices=None, duration=None, seed=None) -> Path:
    mc = MobilityConfig(
        device_count=cfg.n_test if devices is None else devices,
        area=(cfg.area_x, cfg.area_y),
        mean_speed=cfg.mean_speed,
        speed_delta=cfg.speed_delta,
        duration=float(cfg.t_test if duration is None else duration),
        seed=cfg.seed if seed is None else seed,
    )
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_trace(generate_rwp_trace(mc)))
    return out


def cmd_train(cfg: ExperimentConfig, progress=None) -> tuple[Path, Path]:
    from .rl.driver import training_driver

    res = training_driver(cfg.train_sim(), cfg.rl_config(), seed=cfg.train_seed, progress=progress)
    res.net.meta["config"] = cfg.to_dict()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.json"
    res.net.save(ckpt)
    curve = out / "training_curve.csv"
    write_csv(curve, CURVE_HEADER, res.curves)
    return ckpt, curve


def _load_net(checkpoint):
    from .rl.network import QNetwork

    try:
        return QNetwork.load(checkpoint)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{checkpoint}: {e}") from e


def _run_seed(job):
    """One seed, every strategy on the same trace and traffic."""
    cfg, checkpoint, seed, n, x = job
    net = _load_net(checkpoint) if checkpoint is not None else None
    sim = cfg.test_sim(seed, n, x)
    trace = generate_rwp_trace(sim.mobility_config())
    traffic = generate_traffic(sim)
    out = []
    for name in cfg.strategies:
        m = World(sim, cfg.make_strategy(name, net), trace, traffic).run()
        out.append((name, seed, m.summary(), m.rounds))
    return out


def _run_jobs(jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_run_seed, jobs))
    return [_run_seed(j) for j in jobs]


def _evaluate_grid(cfg, checkpoint, points, workers):
    if "deeprl" in cfg.strategies and checkpoint is None:
        raise ConfigError("the deeprl strategy needs --checkpoint")
    if checkpoint is not None:
        _load_net(checkpoint)  # fail early on a bad file
    jobs = [(cfg, checkpoint, cfg.seed + i, n, x) for n, x in points for i in range(cfg.runs)]
    results = _run_jobs(jobs, workers)
    per_point = {}
    for (_, _, _, n, x), res in zip(jobs, results):
        per_point.setdefault((n, x), []).extend(res)
    return per_point


def _aggregate_rows(cfg, per_point):
    rows = []
    for (n, x), res in per_point.items():
        for name in cfg.strategies:
            agg = aggregate([s for strat, _, s, _ in res if strat == name])
            rows.append((name, agg["runs"], n, x) + tuple(v for f in SUMMARY_FIELDS for v in (agg[f], agg[f + "_ci"])))
    return rows


def cmd_evaluate(cfg: ExperimentConfig, checkpoint=None, workers: int = 1) -> tuple[Path, Path, Path]:
    n, x = cfg.n_test, cfg.x_test
    per_point = _evaluate_grid(cfg, checkpoint, [(n, x)], workers)
    res = per_point[(n, x)]
    out = Path(cfg.output_dir)
    per_seed = [(name, seed, n, x) + tuple(s[f] for f in SUMMARY_FIELDS) for name, seed, s, _ in res]
    rounds = [(name, seed) + tuple(r) for name, seed, _, rr in res for r in rr]
    paths = (out / "evaluate_runs.csv", out / "evaluate_summary.csv", out / "evaluate_rounds.csv")
    write_csv(paths[0], SUMMARY_HEADER, per_seed)
    write_csv(paths[1], AGGREGATE_HEADER, _aggregate_rows(cfg, per_point))
    write_csv(paths[2], ROUNDS_HEADER, rounds)
    return paths


SWEEP_AXES = {"n": "n_test", "n_test": "n_test", "x": "x_test", "x_test": "x_test"}


def cmd_sweep(cfg: ExperimentConfig, axis: str, values, checkpoint=None, workers: int = 1) -> Path:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"invalid sweep axis {axis!r}; choose n_test or x_test")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if SWEEP_AXES[axis] == "n_test":
        points = [(int(v), cfg.x_test) for v in values]
    else:
        points = [(cfg.n_test, float(v)) for v in values]
    per_point = _evaluate_grid(cfg, checkpoint, points, workers)
    out = Path(cfg.output_dir) / f"sweep_{SWEEP_AXES[axis]}.csv"
    write_csv(out, AGGREGATE_HEADER, _aggregate_rows(cfg, per_point))
    return out


def cmd_qgrid(checkpoint, x_axis, y_axis, out, resolution: int = 50, fixed=None) -> Path:
    from .rl.driver import qvalue_grid

    net = _load_net(checkpoint)
    try:
        xs, ys, q = qvalue_grid(net, x_axis, y_axis, base=fixed, resolution=resolution)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    rows = [(float(xs[j]), float(ys[i]), float(q[i, j])) for i in range(len(ys)) for j in range(len(xs))]
    write_csv(out, GRID_HEADER, rows)
    return Path(out)


# -- argument parsing ---------------------------------------------------------


def _values(text):
    return [v for v in (s.strip() for s in text.split(",")) if v]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobiroute", description="Routing experiments in mobile delay-tolerant networks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--out-dir", help="output directory (config key output_dir)")

    sp = sub.add_parser("generate-mobility", help="write a random waypoint trace")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--devices", type=int)
    sp.add_argument("--duration", type=int)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("train", help="train a routing agent")
    common(sp)
    sp.add_argument("--quiet", action="store_true")

    for name, help_ in (("evaluate", "evaluate strategies over many seeds"), ("sweep", "evaluate over N or X_test")):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.add_argument("--checkpoint")
        sp.add_argument("--strategies", help="comma-separated strategy names")
        sp.add_argument("--runs", type=int)
        sp.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            sp.add_argument("--axis", required=True)
            sp.add_argument("--values", required=True, help="comma-separated axis values")

    sp = sub.add_parser("qgrid", help="export Q-values over two input features")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--x", required=True, help="input feature name or column index")
    sp.add_argument("--y", required=True, help="input feature name or column index")
    sp.add_argument("--resolution", type=int, default=50)
    sp.add_argument("--out", required=True)
    return p


def _axis(text):
    return int(text) if text.isdigit() else text


def run_command(args) -> None:
    if args.command == "qgrid":
        cmd_qgrid(args.checkpoint, _axis(args.x), _axis(args.y), args.out, args.resolution)
        return
    cfg = load_config(args)
    if args.command == "generate-mobility":
        cmd_generate_mobility(cfg, args.out, args.devices, args.duration, args.seed)
    elif args.command == "train":
        progress = None
        if not args.quiet:
            def progress(r, t, m):
                print(f"round {r} t={t} delay={m.mean_delay:.1f} forwards={m.mean_forwards:.2f}",
                      file=sys.stderr, flush=True)
        cmd_train(cfg, progress)
    else:
        kw = {}
        if args.strategies:
            kw["strategies"] = _values(args.strategies)
        if args.runs is not None:
            kw["runs"] = args.runs
        if kw:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **kw})
        if args.command == "evaluate":
            cmd_evaluate(cfg, args.checkpoint, args.workers)
        else:
            cmd_sweep(cfg, args.axis, _values(args.values), args.checkpoint, args.workers)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run_command(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceParseError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ProtocolViolation as e:
        print(f"protocol violation: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
