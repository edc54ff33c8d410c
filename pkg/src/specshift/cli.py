"""Command-line front end; every subcommand writes a JSON run manifest.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .cycles import (
    CycleBreakingError,
    add_random_nodes,
    align_cycle_lengths,
    break_cycles,
    cycle_length_stats,
)
from .datasets import Dataset, DatasetError, load_dataset, write_jsonl
from .dpattern import PatternInterner, class_counts, d_patterns, verify_cycle_lemma
from .graph import GraphError
from .models import ModelConfig, prepare
from .nn import load_params, save_params
from .spectral import (
    DistanceMatrix,
    SpectralError,
    graph_distributions,
    read_distance_csv,
    similar_vs_different,
    spectrum,
    spectrum_distance_matrix,
    write_distance_csv,
    write_pgm,
)
from .splits import SplitBundle, SplitError, make_size_splits, parse_upsample
from .training import Model, evaluate_f1, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Help(argparse.ArgumentDefaultsHelpFormatter):
    """Append the default unless the help text already names one."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.default is None and action.required:
            return text
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is our data code
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# manifests


def sha256_path(path: Path) -> str:
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for f in files:
        if path.is_dir():
            h.update(str(f.relative_to(path)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    flags: dict
    seed: Optional[int]
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        p = Path(path)
        self.inputs[str(p)] = sha256_path(p)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=str) + "\n")


def manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    if out:
        return Path(str(out) + ".manifest.json")
    return Path(f"specshift-{args.command}.manifest.json")


def read_manifest(path: Path) -> dict:
    return json.loads(path.read_text()) if path.exists() else {}


# helpers


def _dataset(args, manifest: RunManifest) -> Dataset:
    path = Path(args.dataset)
    if not path.exists():
        raise DatasetError(f"dataset file missing: {path}")
    manifest.add_input(path)
    return load_dataset(path, getattr(args, "name", None))


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} is stochastic and requires --seed")
    return args.seed


def _config(args) -> ModelConfig:
    text = Path(args.config).read_text() if args.config else ""
    cfg = ModelConfig.from_text(text + "".join(f"{kv}\n" for kv in (args.set or [])))
    return cfg


def _split_indices(args, d: Dataset) -> list[int]:
    if not getattr(args, "splits", None):
        return list(range(len(d)))
    bundle = SplitBundle.load(args.splits)
    return bundle[args.split]


# subcommands; each returns the list of outputs it wrote (or would write)


def cmd_convert(args, m: RunManifest) -> list[str]:
    d = _dataset(args, m)
    if not args.dry_run:
        write_jsonl(d, args.out)
    print(f"{len(d)} graphs, {d.class_count} classes -> {args.out}")
    return [args.out]


def cmd_spectrum(args, m: RunManifest) -> list[str]:
    d = _dataset(args, m)
    indices = [args.index] if args.index is not None else range(len(d))
    if args.dry_run:
        return [args.out] if args.out else []
    rows = []
    for i in indices:
        if not 0 <= i < len(d):
            raise DatasetError(f"graph index {i} out of range")
        g = d[i]
        values = (
            graph_distributions([g], "degrees")[0]
            if args.source == "degrees"
            else spectrum(g, args.matrix)
        )
        rows.append(f"{i}," + ",".join(f"{v:.17g}" for v in values))
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        return [args.out]
    sys.stdout.write(text)
    return []


def cmd_distmat(args, m: RunManifest) -> list[str]:
    d = _dataset(args, m)
    pgm = args.pgm or str(Path(args.out).with_suffix(".pgm"))
    if args.dry_run:
        return [args.out, pgm]
    dm = spectrum_distance_matrix(d, args.source, args.threads)
    write_distance_csv(dm, args.out)
    write_pgm(dm.values, pgm)
    m.extra["node_counts"] = dm.sizes.tolist()
    print(f"{len(d)}x{len(d)} {args.source} distances -> {args.out}, {pgm}")
    return [args.out, pgm]


def cmd_summarize(args, m: RunManifest) -> list[str]:
    m.add_input(args.matrix)
    values, order = read_distance_csv(args.matrix)
    if args.dataset:
        sizes = _dataset(args, m).sizes[order]
    else:
        sidecar = read_manifest(Path(args.matrix + ".manifest.json"))
        if "node_counts" not in sidecar.get("extra", {}):
            raise UsageError("node counts unknown: pass --dataset or keep the distmat manifest")
        sizes = np.asarray(sidecar["extra"]["node_counts"])
    if args.dry_run:
        return []
    summary = similar_vs_different(DistanceMatrix(values, order, sizes), args.k)
    m.extra["summary"] = summary.__dict__
    print(summary)
    return []


def cmd_perturb(args, m: RunManifest) -> list[str]:
    d = _dataset(args, m)
    if args.mode == "break":
        if args.dry_run:
            return [args.out]
        out = d.replace_graphs([break_cycles(g) for g in d.graphs])
    elif args.mode == "align":
        seed = _require_seed(args)
        if args.n is None or args.r is None:
            raise UsageError("align needs --n and --r")
        if args.dry_run:
            return [args.out]
        out = align_cycle_lengths(d, args.r, args.n, np.random.default_rng(seed))
    else:
        seed = _require_seed(args)
        if (args.count is None) == (args.match is None):
            raise UsageError("random-nodes needs exactly one of --count or --match")
        if args.match:
            m.add_input(args.match)
            target = load_dataset(args.match)
            if len(target) != len(d):
                raise DatasetError("--match dataset has a different graph count")
            counts = [t.n - g.n for t, g in zip(target.graphs, d.graphs)]
            if min(counts, default=0) < 0:
                raise DatasetError("--match dataset has a smaller graph")
        else:
            counts = [args.count] * len(d)
        if args.dry_run:
            return [args.out]
        rng = np.random.default_rng(seed)
        out = d.replace_graphs([add_random_nodes(g, c, rng) for g, c in zip(d.graphs, counts)])
    write_jsonl(out, args.out)
    print(f"{args.mode}: {len(out)} graphs -> {args.out}")
    return [args.out]


def cmd_cycle_stats(args, m: RunManifest) -> list[str]:
    d = _dataset(args, m)
    if args.splits:
        m.add_input(args.splits)
    graphs = [d[i] for i in _split_indices(args, d)]
    if args.dry_run:
        return []
    mean, std = cycle_length_stats(graphs)
    m.extra["cycle_length"] = {"mean": mean, "std": std}
    print(f"mean={mean:.4f} std={std:.4f} graphs={len(graphs)}")
    return []


def cmd_split(args, m: RunManifest) -> list[str]:
    seed = _require_seed(args)
    d = _dataset(args, m)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if len(ratios) != 3:
        raise UsageError("--ratios takes three comma-separated values")
    if args.dry_run:
        return [args.out]
    bundle = make_size_splits(d, ratios, seed)
    bundle.save(args.out)
    counts = bundle.class_counts(d.labels, d.class_count)
    m.extra["class_counts"] = counts
    for name, c in counts.items():
        print(f"{name:<11} " + "/".join(map(str, c)))
    return [args.out]


def _train_one(cfg, d, bundle, upsample, seed, inputs, out_dir: Optional[Path]):
    model, report = train(cfg, d, bundle, upsample, seed, inputs)
    written = []
    if out_dir is not None:
        save_params(model.params, out_dir / f"params-seed{seed}.bin")
        (out_dir / f"report-seed{seed}.json").write_text(report.to_json() + "\n")
        written = [str(out_dir / f"params-seed{seed}.bin"), str(out_dir / f"report-seed{seed}.json")]
    return report, written


def cmd_train(args, m: RunManifest) -> list[str]:
    seed = _require_seed(args)
    d = _dataset(args, m)
    m.add_input(args.splits)
    if args.config:
        m.add_input(args.config)
    cfg = _config(args)
    bundle = SplitBundle.load(args.splits)
    upsample = parse_upsample(args.upsample) if args.upsample else None
    out_dir = Path(args.out)
    seeds = [seed + j for j in range(args.repeat)]
    if args.dry_run:
        return [str(out_dir / f"{kind}-seed{s}.{ext}") for s in seeds for kind, ext in (("params", "bin"), ("report", "json"))]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.to_text())
    inputs = [prepare(g) for g in d.graphs]
    outputs = [str(out_dir / "config.txt")]
    reports = []
    for s in seeds:
        report, written = _train_one(cfg, d, bundle, upsample, s, inputs, out_dir)
        reports.append(report)
        outputs += written
        print(f"seed {s}: epochs={report.epochs_run} best={report.best_epoch} "
              + " ".join(f"{k}={v['macro']:.4f}" for k, v in report.f1.items()))
    m.extra["f1"] = {}
    for split in reports[0].f1:
        for kind in ("class1", "macro"):
            vals = np.array([r.f1[split][kind] for r in reports])
            m.extra["f1"][f"{split}/{kind}"] = {"mean": float(vals.mean()), "std": float(vals.std())}
            print(f"{split:<11} {kind:<6} {vals.mean():.4f} ± {vals.std():.4f}")
    return outputs


def cmd_eval(args, m: RunManifest) -> list[str]:
    d = _dataset(args, m)
    for p in (args.splits, args.params) + ((args.config,) if args.config else ()):
        m.add_input(p)
    cfg = _config(args)
    bundle = SplitBundle.load(args.splits)
    params = load_params(args.params)
    if args.dry_run:
        return []
    model = Model(cfg, params)
    m.extra["f1"] = {}
    for name in args.split or ["train", "val", "small_test", "large_test"]:
        f_pos, f_macro = evaluate_f1(model, [prepare(d[i]) for i in bundle[name]])
        m.extra["f1"][name] = {"class1": f_pos, "macro": f_macro}
        print(f"{name:<11} class1={f_pos:.4f} macro={f_macro:.4f}")
    return []


def cmd_dpattern(args, m: RunManifest) -> list[str]:
    report: dict = {}
    if args.lemma:
        lo, hi = (int(x) for x in args.lemma.split(".."))
        report["lemma"] = {"n": [lo, hi], "d_max": args.d_max,
                           "holds": verify_cycle_lemma(range(lo, hi + 1), args.d_max)}
    if args.dataset:
        d = _dataset(args, m)
        indices = [args.index] if args.index is not None else range(len(d))
        interner = PatternInterner()
        per_graph = {}
        for i in indices:
            g = d[i]
            colors = None if g.features is None else [tuple(row) for row in g.features.tolist()]
            per_graph[str(i)] = class_counts(d_patterns(g, colors, args.d_max, interner))
        report["class_counts"] = per_graph
    if not report:
        raise UsageError("dpattern needs --lemma and/or --dataset")
    if args.dry_run:
        return []
    m.extra["report"] = report
    print(json.dumps(report, sort_keys=True))
    return []


COMMANDS = {
    "convert": cmd_convert,
    "spectrum": cmd_spectrum,
    "distmat": cmd_distmat,
    "summarize": cmd_summarize,
    "perturb": cmd_perturb,
    "cycle-stats": cmd_cycle_stats,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "dpattern": cmd_dpattern,
}


def build_parser() -> argparse.ArgumentParser:
    fmt = _Help
    parser = _Parser(prog="specshift", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text, dataset=True, dataset_required=True):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        if dataset:
            p.add_argument("--dataset", required=dataset_required, default=None,
                           help="JSONL file or TUDataset directory"
                           + ("" if dataset_required else " (default: none)"))
            p.add_argument("--name", default=None, help="TUDataset file prefix (default: directory name)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed, required by stochastic commands (default: none)")
        p.add_argument("--dry-run", action="store_true", help="validate inputs, write nothing")
        p.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")
        return p

    p = command("convert", "convert a TUDataset directory to JSONL")
    p.add_argument("--out", required=True, help="JSONL output")

    p = command("spectrum", "per-graph eigenvalues (or degrees) as CSV rows 'index,v1,v2,...'")
    p.add_argument("--index", type=int, default=None, help="single graph index (default: all)")
    p.add_argument("--source", choices=("eigenvalues", "degrees"), default="eigenvalues",
                   help="distribution per graph")
    p.add_argument("--matrix", choices=("adjacency", "laplacian"), default="adjacency",
                   help="normalized matrix to diagonalize")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")

    p = command("distmat", "pairwise W1 distance matrix, rows sorted by node count")
    p.add_argument("--source", choices=("eigenvalues", "degrees"), default="eigenvalues",
                   help="distribution per graph")
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--pgm", default=None, help="heatmap output (default: <out>.pgm)")
    p.add_argument("--threads", type=int, default=None, help="workers (default: SPECSHIFT_THREADS or CPU count)")

    p = command("summarize", "similar-vs-different size shift summary", dataset_required=False)
    p.add_argument("--matrix", required=True, help="CSV written by distmat")
    p.add_argument("--k", type=int, default=20, help="similar-size neighbours per graph")

    p = command("perturb", "rewrite graphs: break cycles, align cycle lengths, or add random nodes")
    p.add_argument("--mode", choices=("break", "align", "random-nodes"), required=True,
                   help="perturbation to apply")
    p.add_argument("--out", required=True, help="JSONL output")
    p.add_argument("--n", type=int, default=None, help="align: increments per graph (default: none)")
    p.add_argument("--r", type=int, default=None, help="align: skipping ratio (default: none)")
    p.add_argument("--count", type=int, default=None, help="random-nodes: nodes added per graph (default: none)")
    p.add_argument("--match", default=None, help="random-nodes: dataset whose node counts to match (default: none)")

    p = command("cycle-stats", "mean and std of per-graph average basis-cycle length")
    p.add_argument("--splits", default=None, help="splits file restricting the graphs (default: whole dataset)")
    p.add_argument("--split", default="train", choices=("train", "val", "small_test", "large_test"),
                   help="split to summarize when --splits is given")

    p = command("split", "size-stratified train/val/small_test/large_test split")
    p.add_argument("--ratios", default="0.7,0.15,0.15", help="train,val,small_test fractions of the pool")
    p.add_argument("--out", required=True, help="splits file output")

    p = command("train", "train a model and report F1 on every split")
    p.add_argument("--splits", required=True, help="splits file from 'split'")
    p.add_argument("--config", default=None, help="'key = value' config file (default: built-in values)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (default: none)")
    p.add_argument("--upsample", default=None, help="class:fraction:ratio list, e.g. 0:1:6 (default: off)")
    p.add_argument("--repeat", type=int, default=1, help="runs with seeds seed..seed+repeat-1")
    p.add_argument("--out", required=True, help="output directory")

    p = command("eval", "evaluate saved parameters")
    p.add_argument("--splits", required=True, help="splits file from 'split'")
    p.add_argument("--params", required=True, help="binary parameter file from 'train'")
    p.add_argument("--config", default=None, help="config used for training (default: built-in values)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (default: none)")
    p.add_argument("--split", action="append", choices=("train", "val", "small_test", "large_test"),
                   help="split to evaluate, repeatable (default: all four)")

    p = command("dpattern", "d-pattern class counts and the cycle-graph lemma check", dataset_required=False)
    p.add_argument("--d-max", type=int, default=3, help="deepest pattern depth")
    p.add_argument("--index", type=int, default=None, help="single graph index (default: all)")
    p.add_argument("--lemma", default=None, metavar="LO..HI", help="check cycles C_LO..C_HI (default: skip)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "repeat", 1) < 1:
        print("specshift: error: --repeat must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    manifest = RunManifest(args.command, flags, args.seed)
    try:
        manifest.outputs = COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        print(f"specshift {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:  # eigensolver, divergence, overflow
        print(f"specshift {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, GraphError, SplitError, SpectralError, CycleBreakingError,
            OSError, ValueError, KeyError) as exc:
        print(f"specshift {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not args.dry_run:
        manifest.write(manifest_path(args))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
