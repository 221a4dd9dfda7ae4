"""Corpus construction: synthetic programs, arch variants, labelled pairs.

A corpus is a set of functions, each present under several architecture
tags.  Variants of one function are produced by seeded shape-preserving
source rewrites of the kind compilers and ABIs introduce: operand order
flips, compound-assignment (de)fusion, block nesting changes, duplicated
trivial statements.  Rewrites are budgeted so a variant's node count
never drifts more than 15% from the base tree.

Pairing follows the cross-platform search setting: +1 pairs are the same
function name under two different arch tags, -1 pairs are two different
names under two different arch tags.  Functions with fewer than 5 nodes
are too generic to label and are dropped from pairing.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

from astsim.ast_core import (
    MIN_NODES,
    AstNode,
    BinTree,
    FunctionAst,
    JsonParseError,
    SchemaError,
    _node_to_obj,
    _obj_to_node,
    binarize_lcrs,
    node_count,
)
from astsim.minilang import parse_mini
from astsim.search import callee_count

# ---------------------------------------------------------------------------
# Synthetic source programs
# ---------------------------------------------------------------------------

_PARAMS = ("a", "b", "c")
_LOCALS = ("x", "y", "z", "t", "arr")
_BINOPS = ("+", "-", "*", "/", "|", "^")
_CMPOPS = ("==", "!=", "<", ">", "<=", ">=")
_ASGOPS = ("+=", "-=", "*=", "/=", "|=", "^=", "&=")


def _gen_expr(rng: random.Random, names: list[str], depth: int) -> str:
    roll = rng.random()
    if depth <= 0 or roll < 0.35:
        return rng.choice(_PARAMS + _LOCALS[:4] + (str(rng.randrange(0, 100)),))
    if roll < 0.55:
        lhs = _gen_expr(rng, names, depth - 1)
        rhs = _gen_expr(rng, names, depth - 1)
        return f"{lhs} {rng.choice(_BINOPS)} {rhs}"
    if roll < 0.65:
        return f"arr[{_gen_expr(rng, names, depth - 1)}]"
    if roll < 0.72:
        return f"~{_gen_expr(rng, names, depth - 1)}"
    if roll < 0.82 and names:
        callee = rng.choice(names)
        args = ", ".join(
            _gen_expr(rng, names, depth - 1) for _ in range(rng.randrange(0, 3))
        )
        return f"{callee}({args})"
    if roll < 0.9:
        return f'"{rng.choice(("ok", "err", "msg", "tag"))}"'
    # self-parenthesized: comparisons neither chain nor sit bare inside
    # arithmetic in the grammar
    lhs = _gen_expr(rng, names, depth - 1)
    rhs = _gen_expr(rng, names, depth - 1)
    return f"(({lhs}) {rng.choice(_CMPOPS)} ({rhs}))"


def _gen_cond(rng: random.Random, names: list[str]) -> str:
    lhs = _gen_expr(rng, names, 1)
    rhs = _gen_expr(rng, names, 1)
    return f"({lhs}) {rng.choice(_CMPOPS)} ({rhs})"


def _gen_stmt(rng: random.Random, names: list[str], depth: int) -> str:
    roll = rng.random()
    var = rng.choice(_LOCALS[:4])
    if roll < 0.3:
        return f"{var} = {_gen_expr(rng, names, 2)};"
    if roll < 0.45:
        return f"{var} {rng.choice(_ASGOPS)} {_gen_expr(rng, names, 1)};"
    if roll < 0.55 and depth > 0:
        body = _gen_stmt(rng, names, depth - 1)
        alt = f" else {{ {_gen_stmt(rng, names, depth - 1)} }}" if rng.random() < 0.4 else ""
        return f"if ({_gen_cond(rng, names)}) {{ {body} }}{alt}"
    if roll < 0.63 and depth > 0:
        body = _gen_stmt(rng, names, depth - 1)
        extra = "break;" if rng.random() < 0.3 else f"{var}++;"
        return f"while ({_gen_cond(rng, names)}) {{ {body} {extra} }}"
    if roll < 0.7 and depth > 0:
        body = _gen_stmt(rng, names, depth - 1)
        return f"for (x = 0; x < {rng.randrange(2, 20)}; x++) {{ {body} }}"
    if roll < 0.76 and depth > 0:
        arms = []
        for k in range(rng.randrange(2, 4)):
            arms.append(f"case {k}: {_gen_stmt(rng, names, depth - 1)} break;")
        arms.append(f"default: {_gen_stmt(rng, names, depth - 1)}")
        joined = " ".join(arms)
        return f"switch ({rng.choice(_PARAMS)}) {{ {joined} }}"
    if roll < 0.82:
        return f"arr[{_gen_expr(rng, names, 1)}] = {_gen_expr(rng, names, 1)};"
    if roll < 0.87:
        return f"{var}{rng.choice(('++', '--'))};"
    if roll < 0.93 and names:
        callee = rng.choice(names)
        args = ", ".join(_gen_expr(rng, names, 1) for _ in range(rng.randrange(0, 3)))
        return f"{callee}({args});"
    return f"return {_gen_expr(rng, names, 2)};"


def synth_program(n_functions: int = 50, seed: int = 0) -> str:
    """Deterministic mini-language program with interlinked functions."""
    if n_functions < 1:
        raise ValueError(f"need at least 1 function, got {n_functions}")
    rng = random.Random(seed)
    names = [f"f{idx:02d}" for idx in range(n_functions)]
    chunks = []
    for idx, name in enumerate(names):
        callable_names = [m for m in names if m != name]
        rng_f = random.Random(f"{seed}|{idx}")
        params = ", ".join(_PARAMS[: rng_f.randrange(1, 4)])
        stmts = [
            _gen_stmt(rng_f, callable_names, 2)
            for _ in range(rng_f.randrange(3, 8))
        ]
        stmts.append(f"return {_gen_expr(rng_f, callable_names, 1)};")
        body = "\n    ".join(stmts)
        chunks.append(f"fn {name}({params}) {{\n    {body}\n}}")
    return "\n\n".join(chunks) + "\n"


# ---------------------------------------------------------------------------
# Architecture-variant rewrites
# ---------------------------------------------------------------------------

_COMMUTATIVE = frozenset({"add", "mul", "bor", "xor", "eq", "ne"})
_MIRROR = {"lt": "gt", "gt": "lt", "le": "ge", "ge": "le"}
_FUSE = {
    "add": "asgadd",
    "sub": "asgsub",
    "mul": "asgmul",
    "div": "asgdiv",
    "bor": "asgbor",
    "xor": "asgxor",
}
_UNFUSE = {v: k for k, v in _FUSE.items()}
_DUPLICABLE = frozenset({"goto", "break", "continue", "var", "num", "str"})

#: op name -> node-count delta
_DELTAS = {
    "swap": 0,
    "mirror": 0,
    "fuse": -2,
    "unfuse": 2,
    "wrap": 1,
    "unwrap": -1,
    "dup": 1,
}


def _collect_edits(root: AstNode) -> list[tuple[str, tuple[int, ...]]]:
    out: list[tuple[str, tuple[int, ...]]] = []
    stack: list[tuple[AstNode, tuple[int, ...]]] = [(root, ())]
    while stack:
        node, path = stack.pop()
        kids = node.children
        if node.kind in _COMMUTATIVE and len(kids) == 2:
            out.append(("swap", path))
        if node.kind in _MIRROR and len(kids) == 2:
            out.append(("mirror", path))
        if (
            node.kind == "asg"
            and len(kids) == 2
            and kids[0].kind == "var"
            and kids[1].kind in _FUSE
            and len(kids[1].children) == 2
            and kids[1].children[0].kind == "var"
        ):
            out.append(("fuse", path))
        if node.kind in _UNFUSE and len(kids) == 2 and kids[0].kind == "var":
            out.append(("unfuse", path))
        if node.kind == "block":
            for i, child in enumerate(kids):
                out.append(("wrap", path + (i,)))
                if child.kind == "block" and len(child.children) == 1:
                    out.append(("unwrap", path + (i,)))
                if child.kind in _DUPLICABLE and not child.children:
                    out.append(("dup", path + (i,)))
        for i in range(len(kids) - 1, -1, -1):
            stack.append((kids[i], path + (i,)))
    out.sort()
    return out


def _rebuild(node: AstNode, path: tuple[int, ...], fn) -> AstNode:
    if not path:
        return fn(node)
    kids = list(node.children)
    kids[path[0]] = _rebuild(kids[path[0]], path[1:], fn)
    return AstNode(node.kind, tuple(kids))


def _edit_children(node: AstNode, path: tuple[int, ...], fn) -> AstNode:
    """Apply ``fn(children, index) -> children`` at the parent of ``path``."""
    parent_path, idx = path[:-1], path[-1]

    def at_parent(parent: AstNode) -> AstNode:
        return AstNode(parent.kind, tuple(fn(list(parent.children), idx)))

    return _rebuild(node, parent_path, at_parent)


def _apply_edit(root: AstNode, op: str, path: tuple[int, ...]) -> AstNode:
    if op == "swap" or op == "mirror":

        def flip(node: AstNode) -> AstNode:
            kind = _MIRROR[node.kind] if op == "mirror" else node.kind
            return AstNode(kind, (node.children[1], node.children[0]))

        return _rebuild(root, path, flip)
    if op == "fuse":

        def fuse(node: AstNode) -> AstNode:
            lhs, rhs = node.children
            return AstNode(_FUSE[rhs.kind], (lhs, rhs.children[1]))

        return _rebuild(root, path, fuse)
    if op == "unfuse":

        def unfuse(node: AstNode) -> AstNode:
            lhs, rhs = node.children
            return AstNode("asg", (lhs, AstNode(_UNFUSE[node.kind], (AstNode("var"), rhs))))

        return _rebuild(root, path, unfuse)
    if op == "wrap":
        return _edit_children(
            root, path, lambda kids, i: kids[:i] + [AstNode("block", (kids[i],))] + kids[i + 1 :]
        )
    if op == "unwrap":
        return _edit_children(
            root, path, lambda kids, i: kids[:i] + [kids[i].children[0]] + kids[i + 1 :]
        )
    if op == "dup":
        return _edit_children(
            root, path, lambda kids, i: kids[: i + 1] + [kids[i]] + kids[i + 1 :]
        )
    raise ValueError(f"unknown edit {op!r}")


def mutate_variant(ast: FunctionAst, arch_tag: str, seed: int = 0) -> FunctionAst:
    """Deterministic arch-variant of one function.

    The edit budget is 15% of the node count (at least 1); each edit
    spends its absolute node-count delta (at least 1), so the variant
    stays within budget of the original size and above the minimum node
    floor.  Callee size proxies are left as-is; rebuild them against the
    variant's siblings if exact per-arch sizes matter.
    """
    rng = random.Random(f"{seed}|{arch_tag}|{ast.name}")
    root = ast.root
    budget = max(1, math.ceil(0.15 * node_count(root)))
    while budget > 0:
        current = node_count(root)
        feasible = [
            (op, path)
            for op, path in _collect_edits(root)
            if max(1, abs(_DELTAS[op])) <= budget
            and current + _DELTAS[op] >= MIN_NODES
        ]
        if not feasible:
            break
        op, path = rng.choice(feasible)
        root = _apply_edit(root, op, path)
        budget -= max(1, abs(_DELTAS[op]))
    return FunctionAst(
        name=ast.name, origin=ast.origin, arch=arch_tag, root=root, callees=ast.callees
    )


def expand_variants(base: list[FunctionAst], variants: int, seed: int = 0) -> list[FunctionAst]:
    """Expand base functions into arch-tagged variants, base ones first.

    Tag ``arch0`` carries the originals; higher tags are mutated.  The
    callee size proxies of every entry are recomputed against its own
    arch, the way sizes would be measured inside one binary.
    """
    if variants < 1:
        raise ValueError(f"variants must be >= 1, got {variants}")
    out: list[FunctionAst] = []
    for v in range(variants):
        tag = f"arch{v}"
        asts = base if v == 0 else [mutate_variant(a, tag, seed) for a in base]
        sizes = {a.name: node_count(a.root) for a in asts}
        for a in asts:
            callees = tuple((cn, sizes.get(cn, 0)) for cn, _ in a.callees)
            out.append(
                FunctionAst(name=a.name, origin=a.origin, arch=tag, root=a.root, callees=callees)
            )
    return out


def generate_corpus(
    n_functions: int = 50,
    variants: int = 2,
    seed: int = 0,
    origin: str | None = None,
) -> list[FunctionAst]:
    """Synthetic cross-arch corpus: ``n_functions * variants`` entries."""
    origin = origin or f"synth-{seed}"
    base = parse_mini(synth_program(n_functions, seed), origin=origin, arch="arch0")
    return expand_variants(base, variants, seed)


# ---------------------------------------------------------------------------
# Labelled pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairSample:
    """One labelled comparison, ready for both training and calibration.

    ``t1``/``t2`` are the binarized trees the encoder consumes; ``r1``/
    ``r2`` keep the original ordered trees for serialization.  ``label``
    is +1 for homologous pairs, -1 otherwise.
    """

    t1: BinTree
    t2: BinTree
    c1: int
    c2: int
    label: int
    archs: tuple[str, str]
    r1: AstNode
    r2: AstNode
    names: tuple[str, str] = ("?", "?")


def make_pair(a: FunctionAst, b: FunctionAst, label: int, beta: int = 5) -> PairSample:
    return PairSample(
        t1=binarize_lcrs(a.root),
        t2=binarize_lcrs(b.root),
        c1=callee_count(a, beta),
        c2=callee_count(b, beta),
        label=label,
        archs=(a.arch, b.arch),
        r1=a.root,
        r2=b.root,
        names=(a.name, b.name),
    )


def functions_by_name(asts: list[FunctionAst]) -> dict[str, dict[str, FunctionAst]]:
    grouped: dict[str, dict[str, FunctionAst]] = {}
    for ast in asts:
        by_arch = grouped.setdefault(ast.name, {})
        if ast.arch in by_arch:
            raise ValueError(f"duplicate entry for function {ast.name!r} arch {ast.arch!r}")
        by_arch[ast.arch] = ast
    return grouped


def build_pairs(
    asts: list[FunctionAst],
    negatives_per_positive: int = 1,
    seed: int = 0,
    beta: int = 5,
) -> list[PairSample]:
    """Enumerate +1 pairs and sample -1 pairs at the requested ratio.

    Negatives are drawn uniformly without replacement from all valid
    (different name, different arch) combinations.  Functions under the
    minimum node count are dropped before pairing.
    """
    if negatives_per_positive < 1:
        raise ValueError(
            f"negatives_per_positive must be >= 1, got {negatives_per_positive}"
        )
    grouped = functions_by_name(asts)
    names = sorted(grouped)
    if len(names) < 2:
        raise ValueError("need at least 2 distinct function names to form pairs")
    for name in names:
        if len(grouped[name]) < 2:
            raise ValueError(f"function {name!r} has fewer than 2 arch variants")
    big_enough = {
        name: {
            arch: ast
            for arch, ast in grouped[name].items()
            if node_count(ast.root) >= MIN_NODES
        }
        for name in names
    }

    positives: list[PairSample] = []
    for name in names:
        archs = sorted(big_enough[name])
        for i in range(len(archs)):
            for j in range(i + 1, len(archs)):
                positives.append(
                    make_pair(big_enough[name][archs[i]], big_enough[name][archs[j]], 1, beta)
                )

    candidates: list[tuple[str, str, str, str]] = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            for arch_a in sorted(big_enough[names[i]]):
                for arch_b in sorted(big_enough[names[j]]):
                    if arch_a != arch_b:
                        candidates.append((names[i], arch_a, names[j], arch_b))
    rng = random.Random(seed)
    rng.shuffle(candidates)
    wanted = negatives_per_positive * len(positives)
    negatives = [
        make_pair(big_enough[na][aa], big_enough[nb][ab], -1, beta)
        for na, aa, nb, ab in candidates[:wanted]
    ]
    if not positives or not negatives:
        raise ValueError(
            f"no valid pairs: {len(positives)} positives, {len(negatives)} negatives "
            f"after dropping functions under {MIN_NODES} nodes"
        )
    return positives + negatives


@dataclass(frozen=True)
class DatasetSplit:
    train: list[PairSample]
    test: list[PairSample]


def split_pairs(
    pairs: list[PairSample],
    ratio: float = 0.8,
    seed: int = 0,
    by_function: bool = False,
) -> DatasetSplit:
    """Shuffled train/test split (train share floored).

    ``by_function`` splits function names instead, so no name leaks
    across the boundary; straddling pairs are dropped.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be inside (0, 1), got {ratio}")
    if len(pairs) < 5:
        raise ValueError(f"need at least 5 pairs to split, got {len(pairs)}")
    rng = random.Random(seed)
    if by_function:
        names = sorted({n for p in pairs for n in p.names})
        if "?" in names:
            raise ValueError("pairs carry no function names; cannot split by function")
        rng.shuffle(names)
        cut = math.floor(ratio * len(names))
        train_names = set(names[:cut])
        test_names = set(names[cut:])
        train = [p for p in pairs if set(p.names) <= train_names]
        test = [p for p in pairs if set(p.names) <= test_names]
    else:
        shuffled = list(pairs)
        rng.shuffle(shuffled)
        cut = math.floor(ratio * len(shuffled))
        train, test = shuffled[:cut], shuffled[cut:]
    if not train or not test:
        raise ValueError(
            f"degenerate split: {len(train)} train / {len(test)} test pairs"
        )
    return DatasetSplit(train=train, test=test)


# ---------------------------------------------------------------------------
# Pair files
# ---------------------------------------------------------------------------


def write_pairs(path, pairs: list[PairSample]) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            obj = {
                "t1": _node_to_obj(p.r1),
                "t2": _node_to_obj(p.r2),
                "c1": p.c1,
                "c2": p.c2,
                "label": p.label,
                "archs": list(p.archs),
            }
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
    return len(pairs)


def read_pairs(path) -> list[PairSample]:
    out: list[PairSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonParseError(f"{path}:{lineno}: {exc.msg}", exc.lineno, exc.colno) from exc
            try:
                r1 = _obj_to_node(obj["t1"], where="t1")
                r2 = _obj_to_node(obj["t2"], where="t2")
                label = obj["label"]
                c1, c2 = obj["c1"], obj["c2"]
                archs = tuple(obj["archs"])
            except (KeyError, SchemaError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            if label not in (1, -1):
                raise SchemaError(f"{path}:{lineno}: label must be +1 or -1, got {label!r}")
            out.append(
                PairSample(
                    t1=binarize_lcrs(r1),
                    t2=binarize_lcrs(r2),
                    c1=int(c1),
                    c2=int(c2),
                    label=int(label),
                    archs=(str(archs[0]), str(archs[1])),
                    r1=r1,
                    r2=r2,
                )
            )
    return out
