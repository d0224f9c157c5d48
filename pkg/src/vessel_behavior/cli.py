"""Command-line entry point: ingest | segment | label | train | evaluate | trace (+ synth).

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

Every flag can also come from a TOML file given with ``--config``. Top-level
keys apply to all commands and a ``[command]`` table applies to one command;
flags on the command line win over both.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from dataclasses import replace
from typing import IO, Iterator, Sequence

from . import clustering, ingestion, labels, metrics, pipeline, segmentation, synth
from .encoder import LEVEL_LABEL, LEVEL_SUBTRAJ

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("vessel_behavior")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _open(path: str, mode: str = "r") -> Iterator[IO]:
    if path == "-":
        yield sys.stdout if "w" in mode else sys.stdin
        return
    with open(path, mode, newline="" if "w" in mode else None, encoding="utf-8") as fh:
        yield fh


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


# -- shared loaders -----------------------------------------------------------

def _read_sequences(path):
    with _open(path) as fh:
        return ingestion.read_sequences(fh)


def _read_segments(path, sequences):
    with _open(path) as fh:
        return segmentation.read_segments(fh, sequences)


def _load_dataset(args, level: str, classes: Sequence[str] | None = None) -> pipeline.Dataset:
    if level == LEVEL_SUBTRAJ:
        _require(args, "sequences", "segments")
        seqs = _read_sequences(args.sequences)
        ds = pipeline.subtraj_dataset(seqs, _read_segments(args.segments, seqs))
    elif level == LEVEL_LABEL:
        _require(args, "labels")
        with _open(args.labels) as fh:
            ls = labels.read_label_sequences(fh)
        ds = pipeline.label_dataset(ls, classes, args.grid_step)
    else:
        raise UsageError(f"unknown level {level!r}")
    if not len(ds):
        raise DataError("no sequences to work on")
    return ds


def _train_config(args) -> clustering.TrainConfig:
    cfg = clustering.TrainConfig(seed=args.seed)
    overrides = {k: getattr(args, k) for k in ("lr", "alpha", "epochs", "pretrain_epochs",
                                               "assigner_epochs", "batch_size")}
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def _truth(args, ds: pipeline.Dataset) -> list[str]:
    if args.truth_file:
        with _open(args.truth_file) as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and rows[0][-1].strip().lower() in ("truth", "label", "class"):
            rows = rows[1:]
        truth = [r[-1] for r in rows]
    else:
        try:
            truth = ds.truth(args.truth)
        except KeyError as exc:
            raise UsageError(str(exc)) from None
    if len(truth) != len(ds):
        raise DataError(f"truth has {len(truth)} entries but there are {len(ds)} sequences")
    return truth


# -- commands -------------------------------------------------------------------

def cmd_synth(args) -> int:
    _require(args, "out")
    if args.kind == "fleet":
        counts = {"ferry": args.ferry, "liner": args.liner, "tramp": args.tramp}
        fleet = synth.gen_fleet(counts, seed=args.seed, n_points=(args.min_len, args.max_len),
                                sog_noise=args.sog_noise)
        tracks = list(fleet.tracks)
        for i in range(args.switching):
            tr, _ = synth.gen_switching_vessel(seed=args.seed + 1000 + i, mmsi=f"49{i:07d}")
            tracks.append(tr)
        registry = fleet.registry
    else:
        tracks = []
        for i in range(args.count):
            regimes = synth.behavior_archetypes(args.min_len // 3) if args.kind == "taxonomy" else None
            if regimes is not None:
                for j, r in enumerate(regimes):
                    rt = synth.gen_regime_track([r], noise=args.sog_noise, seed=args.seed + 100 * i + j,
                                                mmsi=f"3{i:03d}{j:05d}")
                    tracks.append(rt.sequence)
            else:
                rt = synth.planted_regime_track(args.seed + i, noise=args.sog_noise, mmsi=f"3{i:08d}")
                tracks.append(rt.sequence)
        registry = synth.default_ports()
    with _open(args.out, "w") as fh:
        rows = synth.write_ais_csv(tracks, fh)
    if args.ports_out:
        with _open(args.ports_out, "w") as fh:
            labels.write_ports(registry, fh)
    print(f"tracks={len(tracks)} rows={rows}", file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args) -> int:
    _require(args, "input", "out")
    columns = ingestion.ColumnMap.from_dict(dict(args.column or {}))
    cfg = ingestion.IngestConfig(max_gap=args.max_gap, min_points=args.min_points,
                                 smooth_window=args.smooth_window,
                                 speed_jump_limit=args.speed_jump_limit, columns=columns)
    if args.input == "-":
        seqs, stats = ingestion.run_pipeline(sys.stdin.buffer, cfg)
    else:
        with open(args.input, "rb") as fh:
            seqs, stats = ingestion.run_pipeline(fh, cfg)
    with _open(args.out, "w") as fh:
        n = ingestion.write_sequences(seqs, fh)
    if n == 0:
        logger.warning("no sequence reached %d points; output is empty", cfg.min_points)
    report = sys.stderr if args.out == "-" else sys.stdout
    print(f"rows_read={stats.rows} dropped={stats.dropped} sequences={n}", file=report)
    return EXIT_OK


def cmd_segment(args) -> int:
    _require(args, "input", "out")
    cfg = segmentation.config_with(
        segmentation.SegmenterConfig(), u=args.u, lam=args.lam, delta=args.delta,
        stop_speed=args.stop_speed, speed_var_threshold=args.speed_var_threshold,
        turn_threshold=args.turn_threshold, speed_sign_fraction=args.sign_fraction,
        peak_radius=args.peak_radius, search=args.search)
    seqs = _read_sequences(args.input)
    per_track = [segmentation.represent(t, cfg, merge=not args.no_merge) for t in seqs]
    with _open(args.out, "w") as fh:
        n = segmentation.write_segments(per_track, fh)
    report = sys.stderr if args.out == "-" else sys.stdout
    print(f"sequences={len(seqs)} segments={n}", file=report)
    return EXIT_OK


def cmd_label(args) -> int:
    _require(args, "sequences", "segments", "ports", "out")
    with _open(args.ports) as fh:
        registry = labels.read_ports(fh, args.sigma)
    seqs = _read_sequences(args.sequences)
    segs = _read_segments(args.segments, seqs)
    out, registry = labels.build_label_sequences(seqs, segs, registry,
                                                 labels.behavior_predicate(args.behavior))
    with _open(args.out, "w") as fh:
        labels.write_label_sequences(out, fh)
    if args.ports_out:
        with _open(args.ports_out, "w") as fh:
            labels.write_ports(registry, fh)
    n_points = sum(len(ls) for ls in out)
    if n_points == 0:
        logger.warning("no %s segment fell within %.1f m of a port; output is empty",
                       args.behavior, registry.sigma)
    report = sys.stderr if args.out == "-" else sys.stdout
    print(f"label_sequences={len(out)} label_points={n_points}", file=report)
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "k", "checkpoint")
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    ds = _load_dataset(args, args.level)
    cfg = _train_config(args)
    model = pipeline.fit(ds, args.k, cfg, hidden_dim=args.hidden, dropout=args.dropout)
    with _open(args.checkpoint, "w") as fh:
        clustering.save_model(model, fh)
    if args.history:
        with _open(args.history, "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phase", "epoch", "L1", "L2", "KL", "total"])
            for r in model.loss_history:
                w.writerow([r["phase"], r["epoch"], repr(r["L1"]), repr(r["L2"]), repr(r["KL"]),
                            repr(r["total"])])
    last = model.loss_history[-1] if model.loss_history else None
    if last is not None:
        print(f"final_loss={last['total']:.6f} tracks={len(ds)} k={args.k}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.sweep_k:
        try:
            ks = pipeline.parse_k_range(args.sweep_k)
        except ValueError as exc:
            raise UsageError(f"bad --sweep-k: {exc}") from None
        ds = _load_dataset(args, args.level)
        truth = _truth(args, ds)

        def fit(dataset, k, cfg):
            return pipeline.fit_track_clusters(dataset, k, cfg, args.hidden, args.dropout)

        rows = metrics.sweep_k(ds, ks, _train_config(args), truth, fit)
    else:
        _require(args, "checkpoint")
        with _open(args.checkpoint) as fh:
            model = clustering.load_model(fh)
        ds = _load_dataset(args, model.level, model.classes)
        truth = _truth(args, ds)
        m = metrics.evaluate(clustering.track_clusters(model, ds.sequences), truth)
        rows = [metrics.SweepRow(model.n_clusters, m["purity"], m["nmi"], m["ari"])]
    with _open(args.out, "w") as fh:
        metrics.write_sweep_csv(rows, fh)
    failed = [r for r in rows if r.error]
    if failed and len(failed) == len(rows):
        raise clustering.NumericalError("; ".join(f"K={r.k}: {r.error}" for r in failed))
    return EXIT_OK


def _plot_traces(traces, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "vessel-behavior"
    fig, ax = plt.subplots(figsize=(8, 3))
    k = traces[0].probs.shape[1]
    for i, tr in enumerate(traces):
        ax.step(tr.relative_time, tr.cluster, where="post", label=f"{tr.mmsi} #{i}")
    ax.set_xlabel("relative time (s)")
    ax.set_ylabel("cluster")
    ax.set_yticks(range(k))
    ax.set_ylim(-0.5, k - 0.5)
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_trace(args) -> int:
    _require(args, "checkpoint", "out")
    with _open(args.checkpoint) as fh:
        model = clustering.load_model(fh)
    ds = _load_dataset(args, model.level, model.classes)
    wanted = args.mmsi or [s.mmsi for s in ds]
    known = {s.mmsi for s in ds}
    unknown = [m for m in wanted if m not in known]
    if unknown:
        raise DataError(f"unknown mmsi: {', '.join(unknown)}")
    picked = set(wanted)
    traces = [clustering.trace(model, s) for s in ds if s.mmsi in picked]
    with _open(args.out, "w") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_record()) + "\n")
    if args.plot:
        _plot_traces(traces, args.plot)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _column(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected FIELD=HEADER")
    a, b = text.split("=", 1)
    return a.strip(), b.strip()


def _data_flags(p, level_default: str | None = LEVEL_SUBTRAJ) -> None:
    if level_default is not None:
        p.add_argument("--level", choices=[LEVEL_SUBTRAJ, LEVEL_LABEL], default=level_default)
    p.add_argument("--sequences", help="position sequences JSONL (sub-trajectory level)")
    p.add_argument("--segments", help="segments JSONL (sub-trajectory level)")
    p.add_argument("--labels", help="label sequences JSONL (label level)")
    p.add_argument("--grid-step", type=float, default=None,
                   help="label level: resample on a uniform grid with this step in seconds")


def _train_flags(p) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--pretrain-epochs", type=int)
    p.add_argument("--assigner-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--hidden", type=int, default=150, help="LSTM hidden size")
    p.add_argument("--dropout", type=float, default=0.3, help="drop probability")


def _truth_flags(p) -> None:
    p.add_argument("--truth", default="vessel_type",
                   help="field used as ground truth (vessel_type or mmsi)")
    p.add_argument("--truth-file", help="CSV whose last column holds one truth label per sequence")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file with defaults for any flag")
    common.add_argument("--seed", type=int, default=0, help="single source of randomness")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="vessel-behavior", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic AIS CSV")
    p.add_argument("--kind", choices=["fleet", "regimes", "taxonomy"], default="fleet")
    p.add_argument("--out")
    p.add_argument("--ports-out")
    p.add_argument("--ferry", type=int, default=10)
    p.add_argument("--liner", type=int, default=10)
    p.add_argument("--tramp", type=int, default=10)
    p.add_argument("--switching", type=int, default=0, help="extra vessels that change archetype")
    p.add_argument("--count", type=int, default=20, help="tracks for --kind regimes/taxonomy")
    p.add_argument("--min-len", type=int, default=200)
    p.add_argument("--max-len", type=int, default=400)
    p.add_argument("--sog-noise", type=float, default=0.3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="CSV -> cleaned position sequences")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--max-gap", type=int, default=1800)
    p.add_argument("--min-points", type=int, default=3000)
    p.add_argument("--smooth-window", type=int, default=5)
    p.add_argument("--speed-jump-limit", type=float, default=1.0)
    p.add_argument("--column", type=_column, action="append", metavar="FIELD=HEADER")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", parents=[common], help="sequences -> labeled sub-trajectories")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--u", type=int)
    p.add_argument("--lambda", dest="lam", type=int)
    p.add_argument("--delta", help="score threshold; 'inf' keeps every track whole")
    p.add_argument("--stop-speed", type=float)
    p.add_argument("--speed-var-threshold", type=float)
    p.add_argument("--turn-threshold", type=float)
    p.add_argument("--sign-fraction", type=float)
    p.add_argument("--search", choices=["recursive", "threshold"])
    p.add_argument("--peak-radius", type=int, help="threshold search: peak selection radius")
    p.add_argument("--no-merge", action="store_true", help="keep adjacent same-behavior segments apart")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("label", parents=[common], help="segments + ports -> label sequences")
    p.add_argument("--sequences")
    p.add_argument("--segments")
    p.add_argument("--ports")
    p.add_argument("--sigma", type=float, default=2000.0, help="match radius in metres")
    p.add_argument("--behavior", default="stopped")
    p.add_argument("--out")
    p.add_argument("--ports-out", help="write the categorized port registry here")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", parents=[common], help="fit the predictive clustering model")
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--history", help="CSV of per-epoch losses")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="purity/NMI/ARI table")
    _data_flags(p)
    _train_flags(p)
    _truth_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--sweep-k", help="train and score every K in a range such as 2..5")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trace", parents=[common], help="per-step cluster evolution")
    _data_flags(p, level_default=None)
    p.add_argument("--checkpoint")
    p.add_argument("--mmsi", action="append")
    p.add_argument("--out", default="-")
    p.add_argument("--plot", help="SVG timeline of cluster id vs relative time")
    p.set_defaults(func=cmd_trace)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("no command given")
    if not getattr(args, "config", None):
        return args
    with open(args.config, "rb") as fh:
        data = tomllib.load(fh)
    settings = {k: v for k, v in data.items() if not isinstance(v, dict)}
    settings.update(data.get(args.command, {}))
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    aliases = {"lambda": "lam"}
    defaults = {}
    for key, value in settings.items():
        dest = aliases.get(key, key.replace("-", "_"))
        if dest not in dests or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    if "column" in defaults and isinstance(defaults["column"], dict):
        defaults["column"] = list(defaults["column"].items())
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (clustering.NumericalError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except tomllib.TOMLDecodeError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ingestion.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, OSError, ValueError, KeyError, IndexError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
