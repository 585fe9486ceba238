"""``asg`` command line.

Exit codes: 0 success, 1 invalid arguments, 2 I/O or file-format error,
3 numeric or shape error. Data goes to stdout (or ``--out``), diagnostics
to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

import numpy as np

from . import analysis, core, embed_io, sg
from .errors import FormatError, ShapeError, ValidationError
from .kmeans import KmeansParams
from .presets import PRESETS, get_preset

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _default_threads() -> int:
    raw = os.environ.get("ASG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"ASG_THREADS must be an integer, got {raw!r}") from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def emit(records: list[dict], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "jsonl":
        for rec in records:
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
        return
    for n, rec in enumerate(records):
        if n:
            out.write("\n")
        width = max(len(key) for key in rec)
        for key, value in rec.items():
            out.write(f"{key:<{width}}  {_fmt(value)}\n")


def emit_rows(header: list[str], rows: list[list], fmt: str) -> None:
    if fmt == "jsonl":
        for row in rows:
            sys.stdout.write(json.dumps(dict(zip(header, row)), ensure_ascii=False) + "\n")
        return
    cells = [header] + [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        sys.stdout.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")


# -- helpers ----------------------------------------------------------------

def _kmeans_params(args, k: int) -> KmeansParams:
    return KmeansParams(k=k, max_iters=args.max_iters, tol=args.tol, seed=args.seed)


def _resolve_shape(args):
    """k, m, mode from explicit flags, falling back to ``--preset``."""
    k, m, mode = args.k, args.m, args.mode
    if args.preset:
        p = get_preset(args.preset)
        k = p.k if k is None else k
        m = p.m if m is None else m
        mode = p.mode.name.lower() if mode is None else mode
    if k is None or m is None:
        raise ValidationError("--k and --m are required (or give --preset)")
    return k, m, mode or "separate"


def _token_index(args, V: int) -> int:
    if args.token is not None:
        if args.vocab is None:
            raise ValidationError("--token needs --vocab")
        return embed_io.load_vocab(args.vocab).index(args.token)
    if args.token_index is None:
        raise ValidationError("give --token-index or --vocab with --token")
    return args.token_index


def _save_trace(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "iteration", "objective"])
        for run, trace in enumerate(traces):
            for it, obj in enumerate(trace):
                w.writerow([run, it, repr(obj)])


def _load_labels(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        try:
            return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None


def _save_labels(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(f"{int(x)}\n" for x in labels))


# -- subcommands ------------------------------------------------------------

def cmd_import_csv(args) -> None:
    embed_io.save_embeddings(embed_io.import_csv(args.input), args.output)


def cmd_synth(args) -> None:
    spec = embed_io.SyntheticSpec(args.clusters, args.V, args.D, args.spread, args.seed)
    E, labels = embed_io.generate_synthetic(spec)
    embed_io.save_embeddings(E, args.out)
    if args.labels_out:
        _save_labels(args.labels_out, labels)
    if args.vocab_out:
        embed_io.save_vocab([f"c{c}_t{t}" for t, c in enumerate(labels)], args.vocab_out)


def cmd_train(args) -> None:
    k, m, mode = _resolve_shape(args)
    E = embed_io.load_embeddings(args.input)
    V, D = E.shape
    cfg = core.AsgConfig(k=k, m=m, D=D, V=V, mode=mode, kmeans=_kmeans_params(args, k))
    model = core.train_asg(E, cfg, threads=args.threads)
    core.save_model(model, args.out)
    if args.trace_out:
        _save_trace(args.trace_out, model.traces)


def cmd_train_sg(args) -> None:
    E = embed_io.load_embeddings(args.input)
    model = sg.train_sg(E, args.k_sg, _kmeans_params(args, args.k_sg), threads=args.threads)
    sg.save_sg(model, args.out)


def cmd_ids(args) -> None:
    model = core.load_model(args.model)
    t = _token_index(args, model.V)
    ids = core.concept_ids(model, t)
    emit([{"token": t, "concept_ids": [int(x) for x in ids]}], args.format)


def cmd_reconstruct(args) -> None:
    model = core.load_model(args.model)
    if args.token_index is not None or args.token is not None:
        t = _token_index(args, model.V)
        vec = core.reconstruct(model, t)
        emit([{"token": t, "vector": [float(x) for x in vec]}], args.format)
        return
    if not args.out:
        raise ValidationError("reconstruct needs --out (or a single token via --token-index/--token)")
    embed_io.save_embeddings(core.reconstruct_all(model), args.out)


def cmd_report(args) -> None:
    if args.input and not args.model:
        raise ValidationError("--in requires --model")
    model = None
    if args.model:
        model = core.load_model(args.model)
        cfg = model.config
    elif args.preset:
        cfg = get_preset(args.preset).config()
    else:
        missing = [f"--{n}" for n in ("V", "D", "k", "m") if getattr(args, n) is None]
        if missing:
            raise ValidationError(f"report needs --model, --preset or {' '.join(missing)}")
        cfg = core.AsgConfig(k=args.k, m=args.m, D=args.D, V=args.V, mode=args.mode or "separate")
    rec = core.param_report(cfg).as_dict()
    if args.input:
        E = embed_io.load_embeddings(args.input)
        if E.shape != (model.V, model.D):
            raise ShapeError(f"embeddings shape {E.shape} does not match model ({model.V}, {model.D})")
        rec["reconstruction_mse"] = analysis.quantization_error(E, core.reconstruct_all(model)).total_mse
    emit([rec], args.format)


def cmd_neighbors(args) -> None:
    model = core.load_model(args.model)
    vocab = embed_io.load_vocab(args.vocab)
    E = embed_io.load_embeddings(args.input) if args.input else None
    rep = analysis.segment_neighbors(model, vocab, args.token, args.segment, args.limit, embeddings=E)
    rows = [[rank, tok, dist] for rank, (tok, dist) in enumerate(rep.co_clustered)]
    if args.format == "table":
        sys.stdout.write(f"token {rep.query_token!r}  segment {rep.segment}  concept_id {rep.concept_id}\n")
        emit_rows(["rank", "token", "distance"], rows, "table")
    else:
        for rank, tok, dist in rows:
            sys.stdout.write(json.dumps({"query": rep.query_token, "segment": rep.segment,
                                         "concept_id": rep.concept_id, "rank": rank,
                                         "token": tok, "distance": dist}, ensure_ascii=False) + "\n")


def cmd_logits(args) -> None:
    model = core.load_model(args.model)
    H = embed_io.load_embeddings(args.hidden)
    if H.shape[1] != model.D:
        raise ShapeError(f"hidden states have dimension {H.shape[1]}, model expects D={model.D}")
    L = core.logits_all(model, H)
    rows = []
    for n, row in enumerate(L):
        top = np.argsort(-row, kind="stable")[: args.top] if args.top else np.arange(row.size)
        rows.extend([n, int(t), float(row[t])] for t in top)
    emit_rows(["state", "token", "logit"], rows, args.format)


def cmd_compare(args) -> None:
    k, m, mode = _resolve_shape(args)
    E = embed_io.load_embeddings(args.input)
    V, D = E.shape
    cfg = core.AsgConfig(k=k, m=m, D=D, V=V, mode=mode, kmeans=_kmeans_params(args, k))
    asg_model = core.train_asg(E, cfg, threads=args.threads)
    k_sg = sg.matched_budget_k(cfg)
    sg_model = sg.train_sg(E, k_sg, _kmeans_params(args, k_sg), threads=args.threads)
    asg_stats = analysis.quantization_error(E, core.reconstruct_all(asg_model), m)
    sg_stats = analysis.quantization_error(E, sg.sg_reconstruct_all(sg_model))
    emit([
        {"method": "asg", "params": core.param_report(cfg).asg_params, **asg_stats.as_dict()},
        {"method": "sg", "params": k_sg * D, "k_sg": k_sg, **sg_stats.as_dict()},
    ], args.format)


def cmd_probe(args) -> None:
    E = embed_io.load_embeddings(args.input)
    labels = _load_labels(args.labels)
    sources = [s for s in (args.model, args.sg_model, args.recon) if s]
    if len(sources) != 1:
        raise ValidationError("probe needs exactly one of --model, --sg-model, --recon")
    if args.model:
        E_hat = core.reconstruct_all(core.load_model(args.model))
    elif args.sg_model:
        E_hat = sg.sg_reconstruct_all(sg.load_sg(args.sg_model))
    else:
        E_hat = embed_io.load_embeddings(args.recon)
    if E_hat.shape != E.shape:
        raise ShapeError(f"reconstruction shape {E_hat.shape} does not match embeddings {E.shape}")
    res = analysis.probe_eval(E, E_hat, labels, args.split_seed)
    emit([res.as_dict()], args.format)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=["table", "jsonl"], default="table")
    common.add_argument("--threads", type=_positive, default=None,
                        help="worker threads for k-means assignment (default: $ASG_THREADS or 1)")

    km = _Parser(add_help=False)
    km.add_argument("--seed", type=_seed, default=0)
    km.add_argument("--max-iters", type=_positive, default=100)
    km.add_argument("--tol", type=float, default=1e-4)

    shape = _Parser(add_help=False)
    shape.add_argument("--k", type=_positive)
    shape.add_argument("--m", type=_positive)
    shape.add_argument("--mode", choices=["separate", "shared"])
    shape.add_argument("--preset", choices=sorted(PRESETS))

    token = _Parser(add_help=False)
    token.add_argument("--token-index", type=int)
    token.add_argument("--vocab")
    token.add_argument("--token")

    p = _Parser(prog="asg", description="Product-quantized token embeddings (ASG) toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("import-csv", parents=[common], help="convert a CSV matrix to ASGE")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_import_csv)

    s = sub.add_parser("synth", parents=[common], help="write synthetic clustered embeddings")
    s.add_argument("--clusters", type=_positive, required=True)
    s.add_argument("--V", type=_positive, required=True)
    s.add_argument("--D", type=_positive, required=True)
    s.add_argument("--spread", type=float, default=0.1)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--labels-out")
    s.add_argument("--vocab-out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common, km, shape], help="train an ASG model")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--trace-out", help="CSV of per-iteration k-means objectives")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("train-sg", parents=[common, km], help="train the SG baseline")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--k-sg", type=_positive, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_sg)

    s = sub.add_parser("ids", parents=[common, token], help="print a token's ConceptIDs")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_ids)

    s = sub.add_parser("reconstruct", parents=[common, token], help="rebuild embeddings from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("report", parents=[common], help="parameter and mapping accounting")
    s.add_argument("--model")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--V", type=_positive)
    s.add_argument("--D", type=_positive)
    s.add_argument("--k", type=_positive)
    s.add_argument("--m", type=_positive)
    s.add_argument("--mode", choices=["separate", "shared"])
    s.add_argument("--in", dest="input", help="original embeddings, adds reconstruction MSE")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("neighbors", parents=[common], help="tokens sharing a Concept Vector")
    s.add_argument("--model", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--token", required=True)
    s.add_argument("--segment", type=int, required=True)
    s.add_argument("--limit", type=int, default=10)
    s.add_argument("--in", dest="input", help="original embeddings, for sub-vector distances")
    s.set_defaults(func=cmd_neighbors)

    s = sub.add_parser("logits", parents=[common], help="segmented logits for hidden states")
    s.add_argument("--model", required=True)
    s.add_argument("--hidden", required=True, help="ASGE file, one hidden state per row")
    s.add_argument("--top", type=_positive)
    s.set_defaults(func=cmd_logits)

    s = sub.add_parser("compare", parents=[common, km, shape], help="ASG vs SG at matched budget")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("probe", parents=[common], help="linear-probe accuracy retention")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--model")
    s.add_argument("--sg-model")
    s.add_argument("--recon")
    s.add_argument("--split-seed", type=int, default=0)
    s.set_defaults(func=cmd_probe)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is None:
            args.threads = _default_threads()
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _warn_to_stderr
            args.func(args)
    except ValidationError as exc:
        print(f"asg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"asg: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeError, FloatingPointError) as exc:
        print(f"asg: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    print(f"asg: warning: {message}", file=sys.stderr)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
