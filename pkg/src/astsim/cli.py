"""Batch command-line surface for the whole pipeline.

Subcommands: gen-corpus, train, encode, compare, search, eval.  Options
can come from a line-based ``key=value`` config file ('#' starts a
comment); explicit flags override the file.  Every command echoes its
effective configuration on stdout so runs can be reproduced from logs.

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from astsim import corpus as corpus_mod
from astsim import metrics, nn, search, siamese
from astsim.ast_core import FunctionAst, binarize_lcrs, json_to_ast, read_corpus, write_corpus
from astsim.encoder import encode_tree
from astsim.minilang import parse_mini


class UsageError(ValueError):
    pass


#: Config-file spellings that differ from the flag destinations.
_CONFIG_ALIASES = {
    "eta": "lr",
    "inline_beta": "beta",
    "decision_threshold": "threshold",
}


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--head", choices=siamese.HEADS, default="classification",
                   help="similarity head variant")
    p.add_argument("--leaf-init", choices=("zeros", "ones"), default="zeros",
                   help="state fed to missing children")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="astsim", description="AST-shape similarity pipeline for binary functions"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("gen-corpus", help="generate or import a cross-arch corpus")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="corpus JSONL output path")
    p.add_argument("--synthetic", type=int, help="generate N synthetic functions")
    p.add_argument("--source-dir", help="directory of .mini source files")
    p.add_argument("--variants", type=int, default=2, help="arch variants per function")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--origin", help="origin tag for synthetic functions")
    commands["gen-corpus"] = p

    p = sub.add_parser("train", help="train the encoder and similarity head")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--corpus", help="corpus JSONL to pair and split")
    p.add_argument("--pairs", help="pre-built pair JSONL (alternative to --corpus)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--trace", help="metrics trace JSONL (default: <out>.trace.jsonl)")
    p.add_argument("--test-pairs-out", help="write the held-out pairs for later eval")
    p.add_argument("--d-e", type=int, default=16, help="embedding width")
    p.add_argument("--n", type=int, default=64, help="hidden state width")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.05, help="AdaGrad learning rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--head-bias", action="store_true")
    p.add_argument("--ratio", type=float, default=0.8, help="train share of pairs")
    p.add_argument("--by-function", action="store_true",
                   help="split by function name instead of by pair")
    p.add_argument("--negatives-per-positive", type=int, default=1)
    p.add_argument("--beta", type=int, default=search.INLINE_BETA,
                   help="callee size floor for the inlining filter")
    _add_model_flags(p)
    commands["train"] = p

    p = sub.add_parser("encode", help="encode a corpus into a search database")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="database output path")
    p.add_argument("--beta", type=int, default=search.INLINE_BETA)
    p.add_argument("--jobs", type=int, default=1)
    _add_model_flags(p)
    commands["encode"] = p

    p = sub.add_parser("compare", help="score one pair of AST JSON files")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("a", help="AST JSON file")
    p.add_argument("b", help="AST JSON file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--beta", type=int, default=search.INLINE_BETA)
    _add_model_flags(p)
    commands["compare"] = p

    p = sub.add_parser("search", help="rank database records against a query")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--query", required=True, help="query AST JSON file")
    p.add_argument("--db", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--threshold", type=float, default=search.DECISION_THRESHOLD,
                   help="final-score cut for reporting a hit")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="also write hits as CSV")
    _add_model_flags(p)
    commands["search"] = p

    p = sub.add_parser("eval", help="AUC / ROC evaluation on labelled pairs")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--pairs", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--roc-out", help="write the calibrated-score ROC curve CSV")
    p.add_argument("--roc-out-m", help="write the raw model-score ROC curve CSV")
    _add_model_flags(p)
    commands["eval"] = p

    return parser, commands


def _read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _apply_config(cmd_parser: argparse.ArgumentParser, cfg: dict[str, str], path: str) -> None:
    actions = {a.dest: a for a in cmd_parser._actions}
    defaults = {}
    for key, raw in cfg.items():
        dest = _CONFIG_ALIASES.get(key, key.replace("-", "_"))
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise UsageError(f"{path}: unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            lowered = raw.lower()
            if lowered not in ("0", "1", "true", "false", "yes", "no", "on", "off"):
                raise UsageError(f"{path}: {key} must be a boolean, got {raw!r}")
            defaults[dest] = lowered in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (TypeError, ValueError):
                raise UsageError(f"{path}: bad value for {key}: {raw!r}") from None
        else:
            defaults[dest] = raw
    cmd_parser.set_defaults(**defaults)


def _echo_config(args: argparse.Namespace) -> None:
    skip = {"command", "func", "config"}
    pairs = " ".join(
        f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in skip
    )
    print(f"config: command={args.command} {pairs}")


def _read_single_ast(path: str) -> FunctionAst:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 1:
        raise UsageError(f"{path}: expected exactly one AST JSON document, got {len(lines)}")
    try:
        return json_to_ast(lines[0])
    except ValueError as exc:
        # plain ValueError: subclasses like JSONDecodeError have rigid ctors
        raise ValueError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    if (args.synthetic is None) == (args.source_dir is None):
        raise UsageError("give exactly one of --synthetic N or --source-dir DIR")
    if args.synthetic is not None:
        asts = corpus_mod.generate_corpus(
            args.synthetic, args.variants, args.seed, origin=args.origin
        )
    else:
        base: list[FunctionAst] = []
        seen: dict[str, str] = {}
        files = sorted(Path(args.source_dir).glob("*.mini"))
        if not files:
            raise UsageError(f"{args.source_dir}: no .mini files found")
        for f in files:
            try:
                parsed = parse_mini(f.read_text(encoding="utf-8"), origin=f.name, arch="arch0")
            except ValueError as exc:
                raise ValueError(f"{f}: {exc}") from exc
            for ast in parsed:
                if ast.name in seen:
                    raise UsageError(
                        f"{f.name}: function {ast.name!r} already defined in {seen[ast.name]}"
                    )
                seen[ast.name] = f.name
            base.extend(parsed)
        asts = corpus_mod.expand_variants(base, args.variants, args.seed)
    write_corpus(args.out, asts)
    names = {a.name for a in asts}
    archs = {a.arch for a in asts}
    print(f"wrote {len(asts)} functions ({len(names)} names x {len(archs)} archs) to {args.out}")
    return 0


def _load_split(args) -> corpus_mod.DatasetSplit:
    if (args.corpus is None) == (args.pairs is None):
        raise UsageError("give exactly one of --corpus or --pairs")
    if args.pairs is not None:
        pairs = corpus_mod.read_pairs(args.pairs)
    else:
        asts = read_corpus(args.corpus)
        pairs = corpus_mod.build_pairs(
            asts,
            negatives_per_positive=args.negatives_per_positive,
            seed=args.seed,
            beta=args.beta,
        )
    return corpus_mod.split_pairs(
        pairs, ratio=args.ratio, seed=args.seed, by_function=args.by_function
    )


def cmd_train(args) -> int:
    split = _load_split(args)
    cfg = siamese.TrainConfig(
        d_e=args.d_e,
        n=args.n,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        eval_every=args.eval_every,
        patience=args.patience,
        head=args.head,
        head_bias=args.head_bias,
        leaf_init=args.leaf_init,
    )
    print(f"training on {len(split.train)} pairs, testing on {len(split.test)}")
    result = siamese.train(split, cfg)
    for row in result.metrics:
        auc = "-" if row["test_auc"] is None else f"{row['test_auc']:.4f}"
        print(f"epoch {row['epoch']:3d}  train_loss {row['train_loss']:.6f}  test_auc {auc}")
    nn.save_checkpoint(args.out, result.params, seed=args.seed)
    trace_path = args.trace or f"{args.out}.trace.jsonl"
    with open(trace_path, "w", encoding="utf-8") as fh:
        for row in result.metrics:
            fh.write(json.dumps(row, separators=(",", ":")))
            fh.write("\n")
    meta = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "config")}
    meta["best_epoch"] = result.best_epoch
    with open(f"{args.out}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.test_pairs_out:
        corpus_mod.write_pairs(args.test_pairs_out, split.test)
    final_auc = next(
        (row["test_auc"] for row in reversed(result.metrics) if row["test_auc"] is not None),
        None,
    )
    print(f"best epoch: {result.best_epoch}")
    print(f"final test AUC: {'-' if final_auc is None else f'{final_auc:.6f}'}")
    print(f"wrote checkpoint to {args.out}, trace to {trace_path}")
    return 0


def cmd_encode(args) -> int:
    params, _, _ = nn.load_checkpoint(args.ckpt)
    asts = read_corpus(args.corpus)
    db = search.encode_corpus(
        asts, params, beta=args.beta, leaf_init=args.leaf_init, jobs=args.jobs
    )
    search.save_db(args.out, db)
    print(f"encoded {len(db.records)} functions (n={db.n}, beta={db.beta}) to {args.out}")
    return 0


def cmd_compare(args) -> int:
    params, _, _ = nn.load_checkpoint(args.ckpt)
    ast_a = _read_single_ast(args.a)
    ast_b = _read_single_ast(args.b)
    va = encode_tree(binarize_lcrs(ast_a.root), params, leaf_init=args.leaf_init).v
    vb = encode_tree(binarize_lcrs(ast_b.root), params, leaf_init=args.leaf_init).v
    m = siamese.similarity(va, vb, params, head=args.head).sim
    s = search.calibrate(
        search.callee_count(ast_a, args.beta), search.callee_count(ast_b, args.beta)
    )
    f = search.final_score(m, s)
    print(f"M = {m!r}")
    print(f"S = {s!r}")
    print(f"F = {f!r}")
    return 0


def cmd_search(args) -> int:
    params, _, _ = nn.load_checkpoint(args.ckpt)
    db = search.load_db(args.db)
    fingerprint = nn.params_fingerprint(params)
    if db.ckpt != fingerprint:
        raise search.DbError(
            f"database/checkpoint mismatch: db was built with {db.ckpt}, "
            f"checkpoint is {fingerprint}"
        )
    query_ast = _read_single_ast(args.query)
    query = search.EncodedFunction(
        name=query_ast.name,
        origin=query_ast.origin,
        arch=query_ast.arch,
        v=encode_tree(binarize_lcrs(query_ast.root), params, leaf_init=args.leaf_init).v,
        c=search.callee_count(query_ast, db.beta),
    )
    hits = search.rank_search(
        query, db, params, threshold=args.threshold, top_k=args.top_k, jobs=args.jobs
    )
    print(
        f"# query={query.name} threshold={args.threshold} beta={db.beta} "
        f"records={len(db.records)} hits={len(hits)}"
    )
    print(f"{'rank':>4}  {'name':<24} {'origin':<16} {'arch':<8} "
          f"{'M':>10} {'S':>10} {'F':>10}")
    for rank, h in enumerate(hits, start=1):
        print(
            f"{rank:>4}  {h.name:<24} {h.origin:<16} {h.arch:<8} "
            f"{h.m:>10.6f} {h.s:>10.6f} {h.f:>10.6f}"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("rank,name,origin,arch,m,s,f\n")
            for rank, h in enumerate(hits, start=1):
                fh.write(f"{rank},{h.name},{h.origin},{h.arch},{h.m!r},{h.s!r},{h.f!r}\n")
    return 0


def cmd_eval(args) -> int:
    params, _, _ = nn.load_checkpoint(args.ckpt)
    samples = corpus_mod.read_pairs(args.pairs)
    m_scores, f_scores, labels = search.score_pairs(
        samples, params, head=args.head, leaf_init=args.leaf_init
    )
    m_curve = metrics.roc_curve(list(zip(m_scores, labels)))
    f_curve = metrics.roc_curve(list(zip(f_scores, labels)))
    threshold = metrics.youden_threshold(f_curve)
    print(f"pairs: {len(samples)}")
    print(f"M-AUC = {m_curve.auc:.6f}")
    print(f"F-AUC = {f_curve.auc:.6f}")
    print(f"Youden threshold (F) = {threshold:.6f}")
    if args.roc_out:
        metrics.write_roc_csv(args.roc_out, f_curve)
    if args.roc_out_m:
        metrics.write_roc_csv(args.roc_out_m, m_curve)
    return 0


_DISPATCH = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "encode": cmd_encode,
    "compare": cmd_compare,
    "search": cmd_search,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            cfg = _read_config_file(args.config)
            _apply_config(commands[args.command], cfg, args.config)
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _echo_config(args)
    try:
        return _DISPATCH[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
