"""Command-line entry point: run, grid, synth, rank, inspect and baseline."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import rank_heuristics, ranking_csv
from .colony import Colony
from .dataio import synth_series, write_csv
from .exceptions import ConfigurationError, DataError
from .experiment import GRID, ExperimentConfig, baselines, expand_grid, run_experiment
from .genome import RnnGenome

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4
PHI_CHOICES = ["fn", "0.3", "0.6", "0.9", "off"]
REWARD_CHOICES = ["const", "fitness", "l1", "l2"]

log = logging.getLogger("asne")

# flag name -> ExperimentConfig field
_OVERRIDES = {
    "ants": "ants", "species": "species", "jump": "jump", "phi": "phi", "reward": "reward",
    "gamma": "gamma", "alpha": "alpha", "beta": "beta", "iterations": "iterations",
    "epochs": "epochs", "repeats": "repeats", "seed": "seed", "population": "population",
    "hidden_layers": "hidden_layers", "hidden_width": "hidden_width", "max_skip": "max_skip",
    "checkpoint_every": "checkpoint_every", "lamarck_gate": "lamarck_gate",
    "workers": "workers", "arrival": "arrival", "train_fraction": "train_fraction",
    "name": "name",
}


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", help="JSON experiment file; flags below override it")
    g.add_argument("--name")
    g.add_argument("--ants", type=int)
    g.add_argument("--species", choices=GRID["species"])
    g.add_argument("--jump", choices=GRID["jump"], help="aj = LayerJump, oj = NoJump")
    g.add_argument("--phi", choices=PHI_CHOICES)
    g.add_argument("--reward", choices=REWARD_CHOICES)
    g.add_argument("--gamma", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--iterations", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--repeats", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--population", type=int)
    g.add_argument("--hidden-layers", type=int)
    g.add_argument("--hidden-width", type=int)
    g.add_argument("--max-skip", type=int)
    g.add_argument("--checkpoint-every", type=int)
    g.add_argument("--lamarck-gate", choices=["population", "always"])
    g.add_argument("--workers", type=int)
    g.add_argument("--arrival", choices=["ordered", "async"])
    g.add_argument("--train-fraction", type=float)
    d = p.add_argument_group("data")
    d.add_argument("--csv", help="CSV file with a header row")
    d.add_argument("--target", help="target column of --csv")
    d.add_argument("--synth-kind", choices=["sine_mix", "mackey_glass_like"])
    d.add_argument("--length", type=int)
    d.add_argument("--channels", type=int)
    d.add_argument("--noise", type=float)
    d.add_argument("--data-seed", type=int)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for flag, attr in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, value)
    if args.csv or args.target:
        if not (args.csv and args.target):
            raise ConfigurationError("--csv and --target must be given together")
        config.data = {"source": "csv", "path": args.csv, "target": args.target}
    else:
        synth = {"kind": args.synth_kind, "length": args.length, "channels": args.channels,
                 "noise": args.noise, "seed": args.data_seed}
        overrides = {k: v for k, v in synth.items() if v is not None}
        if overrides:
            if config.data.get("source", "synth") != "synth":
                raise ConfigurationError("synthetic data flags conflict with a CSV data source")
            config.data = {**config.data, **overrides}
    return config.validate()


def cmd_run(args) -> int:
    config = config_from_args(args)
    summary = run_experiment(config, args.out, resume=args.resume)
    fit = summary["fitness"]
    print(f"{config.name}: {fit['count']} repeats, best MAE mean {fit['mean']} "
          f"median {fit['median']} best {fit['best']}")
    if summary["failed"]:
        print(f"warning: {len(summary['failed'])} repeat(s) failed; see {args.out}/summary.json",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_grid(args) -> int:
    base = config_from_args(args)
    narrowed = {axis: getattr(args, f"grid_{axis}") for axis in GRID}
    configs = expand_grid(base, **narrowed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for cfg in configs:
        cfg.save(out / f"{cfg.name}.json")
    print(f"wrote {len(configs)} experiment files to {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    series = synth_series(args.kind, args.length, args.channels, args.noise, args.seed)
    write_csv(series, args.out)
    print(f"wrote {series.length} rows x {len(series.columns)} columns to {args.out}")
    return EXIT_OK


def _summary_files(paths: list[str]) -> list[Path]:
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.rglob("summary.json")))
        elif path.is_file():
            files.append(path)
        else:
            raise DataError(f"no such summary file or directory: {raw}")
    if not files:
        raise DataError("no summary.json files found")
    return files


def cmd_rank(args) -> int:
    summaries = []
    for path in _summary_files(args.paths):
        try:
            summaries.append(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
    text = ranking_csv(rank_heuristics(summaries, tuple(args.top)))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def describe_document(doc: dict) -> str:
    kind = doc.get("format")
    if kind == "asne-genome":
        genome = RnnGenome.from_dict(doc)
        lines = [f"genome (generation {genome.generation}, fitness {genome.fitness})"]
        lines += [f"  {k}: {v}" for k, v in genome.summary().items()]
        lines.append("  nodes:")
        lines += [f"    {n.layer}:{n.position} {kind.value}" for n, kind in genome.nodes.items()]
        return "\n".join(lines)
    if kind == "asne-colony":
        colony = Colony.from_dict(doc)
        cfg = colony.config
        tau = colony.pheromone
        return "\n".join([
            f"colony {cfg.input_width} inputs, {cfg.hidden_layers}x{cfg.hidden_width} hidden, "
            f"{cfg.output_width} output, max skip {cfg.max_skip}",
            f"  nodes: {colony.n_nodes}",
            f"  forward edges: {colony.n_forward}",
            f"  recurrent edges: {colony.n_edges - colony.n_forward}",
            f"  edge pheromone min/mean/max: {tau.min():.4g} / {tau.mean():.4g} / {tau.max():.4g}",
        ])
    if kind == "asne-checkpoint":
        rows = doc.get("rows", [])
        return "\n".join([
            f"checkpoint (seed {doc['seed']})",
            f"  generated: {doc['generated']}  processed: {doc['processed']}",
            f"  best so far: {doc['best_so_far']}",
            f"  population: {len(doc['population']['members'])}/{doc['population']['capacity']}",
            f"  in flight: {len(doc.get('pending', []))}",
            f"  log rows: {len(rows)}",
        ])
    raise DataError(f"unrecognised document format {kind!r}")


def cmd_inspect(args) -> int:
    try:
        doc = json.loads(Path(args.path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {args.path}: {exc}") from exc
    print(describe_document(doc))
    return EXIT_OK


def cmd_baseline(args) -> int:
    config = config_from_args(args)
    result = baselines(config, args.samples, config.seed)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asne", description="Ant swarm neuro-evolution")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run all repeats of one experiment")
    _experiment_flags(p)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", action="store_true", help="continue from per-repeat checkpoints")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="write one config file per option-grid combination")
    _experiment_flags(p)
    p.add_argument("--out", required=True, help="directory for the config files")
    for axis in GRID:
        p.add_argument(f"--grid-{axis}", nargs="+", metavar="VALUE",
                       help=f"restrict the {axis} axis (default: {' '.join(map(str, GRID[axis]))})")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="write a synthetic series as CSV")
    p.add_argument("--kind", choices=["sine_mix", "mackey_glass_like"], default="sine_mix")
    p.add_argument("--length", type=int, default=512)
    p.add_argument("--channels", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rank", help="rank heuristics over run summaries")
    p.add_argument("paths", nargs="+", help="summary.json files or directories to search")
    p.add_argument("--top", type=int, nargs="+", default=[10, 25, 100, 250, 500])
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("inspect", help="pretty-print a genome, colony or checkpoint file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("baseline", help="constant-mean and random-genome reference scores")
    _experiment_flags(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
