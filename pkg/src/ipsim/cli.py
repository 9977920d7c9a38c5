"""Command line interface.

Exit codes: 0 success (a compare verdict is data, not an exit status),
2 usage or input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
import time
import os
from pathlib import Path

import numpy as np

from ipsim import __version__
from ipsim.corpus import (
    DesignEntry,
    flatten_families,
    group_families,
    load_graphs,
    make_pairs,
    read_pair_manifest,
    scan_corpus,
    split_pairs,
    write_pair_manifest,
)
from ipsim.detect import DEFAULT_DELTA, Verdict, cosine_similarity
from ipsim.dfg import serialize
from ipsim.encode import encode
from ipsim.errors import IpsimError
from ipsim.model import Hyper, embed
from ipsim.pipeline import compile_design
from ipsim.project import pca_project, projection_csv
from ipsim.train import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train, write_trace
from ipsim.variants import synthesize_variants

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"usage error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def atomic_write(path: str | Path, data: str | bytes):
    """Write through a temp file and rename so readers never observe a
    partial file."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class _Timer:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.last = time.perf_counter()

    def lap(self, stage: str, samples: int | None = None):
        now = time.perf_counter()
        if self.enabled:
            extra = ""
            if samples:
                extra = f" ({1000.0 * (now - self.last) / samples:.3f} ms/sample)"
            print(f"[timing] {stage}: {now - self.last:.3f}s{extra}", file=sys.stderr)
        self.last = now


def _parse_defines(items: list[str] | None) -> dict[str, str]:
    defines = {}
    for item in items or []:
        name, _, value = item.partition("=")
        if not name:
            raise IpsimError(f"bad define {item!r}, expected NAME or NAME=VALUE")
        defines[name] = value
    return defines


def _add_corpus_args(sub, required: bool = True):
    group = sub.add_mutually_exclusive_group(required=required)
    group.add_argument("--corpus", help="corpus root directory (family/*.v)")
    sub.add_argument("--manifest", help="design manifest: 'family_id, path, rtl|netlist' lines")
    sub.add_argument("--mix-abstractions", action="store_true",
                     help="pair RTL designs with netlist designs too")
    return group


def _corpus_families(args):
    if getattr(args, "manifest", None):
        return scan_corpus(args.corpus or ".", manifest=args.manifest)
    if not args.corpus:
        raise IpsimError("need --corpus or --manifest")
    return scan_corpus(args.corpus)


def _encode_corpus(entries: list[DesignEntry], timer: _Timer):
    def warn_skip(entry, exc):
        print(f"skipping {entry.path}: {exc.cause}", file=sys.stderr)

    graphs = load_graphs(entries, on_skip=warn_skip)
    timer.lap("compile", len(entries))
    kept = [e for e in entries if e.name in graphs]
    tensors = {name: encode(g) for name, g in graphs.items()}
    timer.lap("encode", len(kept))
    return kept, graphs, tensors


def _print_stats(graph):
    counts = graph.kind_counts()
    print(f"name: {graph.name}")
    print(f"nodes: {graph.num_nodes}")
    print(f"edges: {len(graph.edges)}")
    print(f"roots: {len(graph.roots)}")
    for kind in sorted(counts):
        print(f"  {kind}: {counts[kind]}")


def cmd_dfg(args) -> int:
    timer = _Timer(args.timing)
    graph = compile_design(args.files, top=args.top, defines=_parse_defines(args.define),
                           trimmed=not args.no_trim)
    timer.lap("compile")
    text = serialize(graph)
    if args.out:
        atomic_write(args.out, text + "\n")
    if args.stats:
        _print_stats(graph)
    elif not args.out:
        print(text)
    timer.lap("write")
    return EXIT_OK


def cmd_variants(args) -> int:
    source = Path(args.file).read_text()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.file).stem
    for i, text in enumerate(synthesize_variants(source, args.count, args.seed, args.file)):
        target = out_dir / f"{stem}_v{i}.v"
        atomic_write(target, text)
        print(target)
    return EXIT_OK


def _hyper_from(args) -> Hyper:
    return Hyper(hidden_dim=args.hidden, num_layers=args.layers,
                 pool_ratio=args.pool_ratio, readout=args.readout,
                 dropout=args.dropout)


def cmd_train(args) -> int:
    timer = _Timer(args.timing)
    families = _corpus_families(args)
    entries = flatten_families(families)
    kept, _, tensors = _encode_corpus(entries, timer)
    pairs = make_pairs_from_kept(kept, args.mix_abstractions)
    train_pairs, test_pairs = split_pairs(pairs, args.test_fraction, seed=args.seed)
    print(f"designs: {len(kept)}  pairs: {len(pairs)} "
          f"(train {len(train_pairs)}, test {len(test_pairs)})")
    if args.pairs_out:
        paths = {e.name: e.path for e in kept}
        write_pair_manifest(args.pairs_out, train_pairs + test_pairs, paths)
    hyper = _hyper_from(args)
    config = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                         margin=args.margin, delta=args.delta, seed=args.seed,
                         patience=args.patience if args.patience >= 0 else None,
                         optimizer=args.optimizer)

    def log(row):
        if not args.quiet:
            test = "-" if row.test_acc is None else f"{row.test_acc:.4f}"
            print(f"epoch {row.epoch:3d}  loss {row.train_loss:.6f}  "
                  f"train_acc {row.train_acc:.4f}  test_acc {test}")

    result = train(tensors, [p.as_tuple() for p in train_pairs],
                   [p.as_tuple() for p in test_pairs], hyper, config, log=log)
    timer.lap("train", len(train_pairs) * len(result.trace))
    meta = {
        "seed": args.seed,
        "epochs_run": len(result.trace),
        "best_epoch": result.best_epoch,
        "designs": len(kept),
        "train_pairs": len(train_pairs),
        "test_pairs": len(test_pairs),
    }
    data = save_checkpoint(None, result.params, hyper, meta)
    atomic_write(args.out, data)
    print(f"saved {args.out} (best epoch {result.best_epoch})")
    if args.trace:
        write_trace(args.trace, result.trace)
    timer.lap("write")
    return EXIT_OK


def make_pairs_from_kept(kept: list[DesignEntry], mix: bool):
    """Pair only the designs that survived compilation."""
    return make_pairs(group_families(kept), mix_abstractions=mix)


def _embed_file(path, top, params, hyper):
    graph = compile_design([path], top=top)
    return embed(params, encode(graph), hyper)


def cmd_compare(args) -> int:
    timer = _Timer(args.timing)
    params, hyper, _ = load_checkpoint(args.checkpoint)
    lines = []
    if args.batch:
        records = read_pair_manifest(args.batch)
        base = Path(args.batch).parent
        cache: dict[str, np.ndarray] = {}

        def emb_of(ref: str) -> np.ndarray:
            if ref not in cache:
                path = Path(ref)
                if not path.is_absolute() and not path.is_file():
                    path = base / ref
                cache[ref] = _embed_file(path, None, params, hyper)
            return cache[ref]

        for rec in records:
            score = cosine_similarity(emb_of(rec.a), emb_of(rec.b))
            lines.append(Verdict(rec.a, rec.b, score, args.delta).to_json())
    else:
        if not (args.a and args.b):
            raise IpsimError("compare needs two design files or --batch")
        emb_a = _embed_file(args.a, args.top_a, params, hyper)
        emb_b = _embed_file(args.b, args.top_b, params, hyper)
        score = cosine_similarity(emb_a, emb_b)
        lines.append(Verdict(args.a, args.b, score, args.delta).to_json())
    timer.lap("embed")
    for line in lines:
        print(line)
    if args.jsonl:
        with open(args.jsonl, "a") as fh:
            for line in lines:
                fh.write(line + "\n")
    return EXIT_OK


def _sweep(labels: list[int], scores: list[float]) -> tuple[float, float]:
    best_delta, best_acc = 0.0, -1.0
    for i in range(199):
        delta = round(-0.99 + 0.01 * i, 2)
        correct = sum(1 for label, s in zip(labels, scores) if (label == 1) == (s > delta))
        acc = correct / len(labels)
        if acc > best_acc:
            best_delta, best_acc = delta, acc
    return best_delta, best_acc


def cmd_eval(args) -> int:
    timer = _Timer(args.timing)
    params, hyper, _ = load_checkpoint(args.checkpoint)
    if args.pairs:
        records = read_pair_manifest(args.pairs)
        base = Path(args.pairs).parent
        cache: dict[str, np.ndarray] = {}

        def emb_of(ref: str) -> np.ndarray:
            if ref not in cache:
                path = Path(ref)
                if not path.is_absolute() and not path.is_file():
                    path = base / ref
                cache[ref] = _embed_file(path, None, params, hyper)
            return cache[ref]

        pairs = records
        scores = [cosine_similarity(emb_of(p.a), emb_of(p.b)) for p in records]
    else:
        families = _corpus_families(args)
        kept, _, tensors = _encode_corpus(flatten_families(families), timer)
        pairs = make_pairs_from_kept(kept, args.mix_abstractions)
        if args.split != "all":
            train_pairs, test_pairs = split_pairs(pairs, args.test_fraction, seed=args.seed)
            pairs = test_pairs if args.split == "test" else train_pairs
        if not pairs:
            raise IpsimError("no pairs to evaluate")
        _, scores = evaluate(params, hyper, tensors,
                             [p.as_tuple() for p in pairs], args.delta)
    timer.lap("score", len(pairs))
    labels = [p.label for p in pairs]
    tp = sum(1 for l, s in zip(labels, scores) if l == 1 and s > args.delta)
    fn = sum(1 for l, s in zip(labels, scores) if l == 1 and s <= args.delta)
    tn = sum(1 for l, s in zip(labels, scores) if l == -1 and s <= args.delta)
    fp = sum(1 for l, s in zip(labels, scores) if l == -1 and s > args.delta)
    acc = (tp + tn) / len(pairs)
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == -1]
    print(f"pairs: {len(pairs)} (+{len(pos)} / -{len(neg)})")
    print(f"accuracy at delta={args.delta}: {acc:.4f}")
    print(f"confusion: TP={tp} TN={tn} FP={fp} FN={fn}")
    if pos:
        print(f"mean similar score: {float(np.mean(pos)):.4f}")
    if neg:
        print(f"mean different score: {float(np.mean(neg)):.4f}")
    if args.sweep:
        best_delta, best_acc = _sweep(labels, scores)
        print(f"best delta: {best_delta:.2f} (accuracy {best_acc:.4f})")
    if args.out:
        if args.format == "csv":
            rows = ["a,b,score,delta,label"]
            for p, s in zip(pairs, scores):
                verdict = Verdict(p.a, p.b, s, args.delta)
                rows.append(f"{p.a},{p.b},{s:.10g},{args.delta},{verdict.label}")
            atomic_write(args.out, "\n".join(rows) + "\n")
        else:
            lines = [Verdict(p.a, p.b, s, args.delta).to_json() for p, s in zip(pairs, scores)]
            atomic_write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_project(args) -> int:
    timer = _Timer(args.timing)
    params, hyper, _ = load_checkpoint(args.checkpoint)
    families = _corpus_families(args)
    kept, _, tensors = _encode_corpus(flatten_families(families), timer)
    names = [e.name for e in kept]
    fams = [e.family for e in kept]
    matrix = np.stack([embed(params, tensors[name], hyper) for name in names])
    projection = pca_project(matrix, k=2)
    timer.lap("project", len(names))
    atomic_write(args.out, projection_csv(names, fams, projection.coords))
    print(f"wrote {args.out} (variance explained: "
          f"{projection.explained[0]:.3f}, {projection.explained[1]:.3f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ipsim", description="RTL similarity detection toolkit")
    parser.add_argument("--version", action="version", version=f"ipsim {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p_dfg = subs.add_parser("dfg", help="compile Verilog to a data-flow graph")
    p_dfg.add_argument("files", nargs="+")
    p_dfg.add_argument("--top", help="top module (default: inferred)")
    p_dfg.add_argument("--define", "-D", action="append", metavar="NAME[=VALUE]")
    p_dfg.add_argument("--out", help="write graph JSON here instead of stdout")
    p_dfg.add_argument("--stats", action="store_true", help="print node/edge statistics")
    p_dfg.add_argument("--no-trim", action="store_true", help="keep alias and dead nodes")
    p_dfg.add_argument("--timing", action="store_true")
    p_dfg.set_defaults(func=cmd_dfg)

    p_var = subs.add_parser("variants", help="synthesize dataflow-preserving rewrites")
    p_var.add_argument("file")
    p_var.add_argument("--count", type=int, default=4)
    p_var.add_argument("--seed", type=int, default=0)
    p_var.add_argument("--out-dir", required=True)
    p_var.set_defaults(func=cmd_variants)

    p_train = subs.add_parser("train", help="train an embedding model on a corpus")
    _add_corpus_args(p_train)
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--trace", help="write per-epoch CSV here")
    p_train.add_argument("--pairs-out", help="write the labeled pair split as CSV")
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--lr", type=float, default=0.001)
    p_train.add_argument("--optimizer", choices=("sgd", "momentum", "adam"),
                         default="sgd")
    p_train.add_argument("--margin", type=float, default=0.5)
    p_train.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--test-fraction", type=float, default=0.2)
    p_train.add_argument("--patience", type=int, default=10,
                         help="early-stop patience in epochs, -1 disables")
    p_train.add_argument("--hidden", type=int, default=16)
    p_train.add_argument("--layers", type=int, default=2)
    p_train.add_argument("--pool-ratio", type=float, default=0.5)
    p_train.add_argument("--readout", choices=("max", "mean", "sum"), default="max")
    p_train.add_argument("--dropout", type=float, default=0.1)
    p_train.add_argument("--quiet", action="store_true")
    p_train.add_argument("--timing", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_cmp = subs.add_parser("compare", help="score two designs against a threshold")
    p_cmp.add_argument("a", nargs="?", help="first design file")
    p_cmp.add_argument("b", nargs="?", help="second design file")
    p_cmp.add_argument("--checkpoint", "--model", dest="checkpoint", required=True)
    p_cmp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p_cmp.add_argument("--top-a", help="top module of the first design")
    p_cmp.add_argument("--top-b", help="top module of the second design")
    p_cmp.add_argument("--batch", help="pair manifest (a_path,b_path,label,split) to score")
    p_cmp.add_argument("--jsonl", help="append verdict records to this JSONL file")
    p_cmp.add_argument("--timing", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_eval = subs.add_parser("eval", help="score labeled pairs with a trained model")
    _add_corpus_args(p_eval, required=False)
    p_eval.add_argument("--pairs", help="pair manifest CSV instead of a corpus")
    p_eval.add_argument("--checkpoint", "--model", dest="checkpoint", required=True)
    p_eval.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p_eval.add_argument("--sweep", action="store_true",
                        help="report the accuracy-maximizing threshold")
    p_eval.add_argument("--split", choices=("all", "train", "test"), default="all")
    p_eval.add_argument("--test-fraction", type=float, default=0.2)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="write per-pair verdicts here")
    p_eval.add_argument("--format", choices=("json", "csv"), default="json")
    p_eval.add_argument("--timing", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_proj = subs.add_parser("project", help="write 2d embedding coordinates as CSV")
    _add_corpus_args(p_proj)
    p_proj.add_argument("--checkpoint", "--model", dest="checkpoint", required=True)
    p_proj.add_argument("--out", required=True)
    p_proj.add_argument("--timing", action="store_true")
    p_proj.set_defaults(func=cmd_project)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (IpsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - internal bug escape hatch
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
