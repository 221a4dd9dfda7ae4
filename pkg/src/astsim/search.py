"""Calibrated similarity search plus two classical baselines.

The model similarity M of two encodings is combined with a callee-count
calibration term S = exp(-|C1 - C2|), where C counts a function's
callees that are big enough to survive inlining (size proxy >= beta).
The final score F = M * S can only lower M: agreement in out-degree is
corroborating evidence, disagreement is a penalty.

Also here: the prime-product AST hash baseline (each node label maps to
a fixed prime; similarity is the Dice overlap of the factor multisets)
and ordered tree edit distance with unit costs, computed by the
keyroot/forest dynamic program.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from astsim import siamese
from astsim.ast_core import (
    AstNode,
    FunctionAst,
    digitize,
    iter_nodes,
    node_count,
)
from astsim.encoder import encode_tree
from astsim.nn import ModelParams, params_fingerprint
from astsim.ast_core import binarize_lcrs

DB_VERSION = "encdb-v1"

#: Default decision threshold on the final score; pairs at or above it
#: are treated as matches.
DECISION_THRESHOLD = 0.84

#: Default callee size floor: callees at least this many nodes big are
#: assumed to survive inlining and get counted.
INLINE_BETA = 5


def callee_count(ast: FunctionAst, beta: int = INLINE_BETA) -> int:
    """Number of callees whose size proxy is >= beta."""
    return sum(1 for _, proxy in ast.callees if proxy >= beta)


def calibrate(c1: int, c2: int) -> float:
    """Callee-count agreement in (0, 1]; exactly 1 iff the counts match."""
    return math.exp(-abs(c1 - c2))


def final_score(m: float, s: float) -> float:
    return m * s


# ---------------------------------------------------------------------------
# Encoding databases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncodedFunction:
    name: str
    origin: str
    arch: str
    v: np.ndarray
    c: int


@dataclass(frozen=True)
class EncodingDb:
    """Function encodings tied to the checkpoint that produced them."""

    ckpt: str
    n: int
    beta: int
    records: tuple[EncodedFunction, ...]


class DbError(ValueError):
    pass


def _encode_record(ast: FunctionAst, params: ModelParams, beta: int, leaf_init: str) -> EncodedFunction:
    enc = encode_tree(binarize_lcrs(ast.root), params, leaf_init=leaf_init)
    return EncodedFunction(
        name=ast.name,
        origin=ast.origin,
        arch=ast.arch,
        v=enc.v,
        c=callee_count(ast, beta),
    )


def _encode_chunk(args) -> list[EncodedFunction]:
    asts, params, beta, leaf_init = args
    return [_encode_record(a, params, beta, leaf_init) for a in asts]


def _chunks(items: list, jobs: int) -> list[list]:
    size = (len(items) + jobs - 1) // jobs
    return [items[i : i + size] for i in range(0, len(items), size)]


def encode_corpus(
    asts: list[FunctionAst],
    params: ModelParams,
    beta: int = INLINE_BETA,
    leaf_init: str = "zeros",
    jobs: int = 1,
) -> EncodingDb:
    """Encode functions in input order.

    Records are scored one at a time with the same arithmetic regardless
    of ``jobs``, so the database contents are identical for any worker
    count.
    """
    if jobs <= 1 or len(asts) < 2:
        records = [_encode_record(a, params, beta, leaf_init) for a in asts]
    else:
        work = [(chunk, params, beta, leaf_init) for chunk in _chunks(asts, jobs)]
        records = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_encode_chunk, work):
                records.extend(part)
    return EncodingDb(
        ckpt=params_fingerprint(params),
        n=params.n,
        beta=beta,
        records=tuple(records),
    )


def save_db(path, db: EncodingDb) -> None:
    header = {"db": DB_VERSION, "ckpt": db.ckpt, "n": db.n, "beta": db.beta}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")))
        fh.write("\n")
        for rec in db.records:
            obj = {
                "name": rec.name,
                "origin": rec.origin,
                "arch": rec.arch,
                "c": rec.c,
                "v": [float(x) for x in rec.v],
            }
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")


def load_db(path) -> EncodingDb:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise DbError(f"{path}: unreadable database header") from exc
        if not isinstance(header, dict) or header.get("db") != DB_VERSION:
            raise DbError(f"{path}: not a {DB_VERSION} database")
        n = int(header["n"])
        records = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DbError(f"{path}:{lineno}: unreadable record") from exc
            v = np.asarray(obj["v"], dtype=np.float64)
            if v.shape != (n,):
                raise DbError(f"{path}:{lineno}: encoding width {v.shape} != ({n},)")
            records.append(
                EncodedFunction(
                    name=obj["name"],
                    origin=obj["origin"],
                    arch=obj["arch"],
                    v=v,
                    c=int(obj["c"]),
                )
            )
    return EncodingDb(
        ckpt=str(header["ckpt"]), n=n, beta=int(header["beta"]), records=tuple(records)
    )


# ---------------------------------------------------------------------------
# Ranked search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchHit:
    name: str
    origin: str
    arch: str
    m: float
    s: float
    f: float


def _score_one(query: EncodedFunction, rec: EncodedFunction, params: ModelParams) -> SearchHit:
    m = siamese.similarity(query.v, rec.v, params).sim
    s = calibrate(query.c, rec.c)
    return SearchHit(
        name=rec.name, origin=rec.origin, arch=rec.arch, m=m, s=s, f=final_score(m, s)
    )


def _score_chunk(args) -> list[SearchHit]:
    query, recs, params = args
    return [_score_one(query, rec, params) for rec in recs]


def rank_search(
    query: EncodedFunction,
    db: EncodingDb,
    params: ModelParams,
    threshold: float = DECISION_THRESHOLD,
    top_k: int | None = None,
    jobs: int = 1,
) -> list[SearchHit]:
    """Score the query against every record; keep hits with F >= threshold,
    best first.  Scoring is per-record, so results do not depend on the
    worker count."""
    if db.ckpt != params_fingerprint(params):
        raise DbError(
            "encoding database was built with a different checkpoint than "
            "the supplied parameters"
        )
    records = list(db.records)
    if jobs <= 1 or len(records) < 2:
        hits = [_score_one(query, rec, params) for rec in records]
    else:
        work = [(query, chunk, params) for chunk in _chunks(records, jobs)]
        hits = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_score_chunk, work):
                hits.extend(part)
    hits = [h for h in hits if h.f >= threshold]
    hits.sort(key=lambda h: (-h.f, h.name, h.origin, h.arch))
    if top_k is not None:
        hits = hits[:top_k]
    return hits


def score_pairs(samples, params: ModelParams, head: str = "classification", leaf_init: str = "zeros"):
    """Model and calibrated scores for labelled pairs.

    Returns (m_scores, f_scores, labels) as parallel lists; feeds the
    ranking metrics directly.
    """
    m_scores: list[float] = []
    f_scores: list[float] = []
    labels: list[int] = []
    for s in samples:
        m = siamese.predict(s.t1, s.t2, params, head=head, leaf_init=leaf_init).sim
        m_scores.append(m)
        f_scores.append(final_score(m, calibrate(s.c1, s.c2)))
        labels.append(s.label)
    return m_scores, f_scores, labels


# ---------------------------------------------------------------------------
# Prime-product baseline
# ---------------------------------------------------------------------------

#: The i-th prime stands in for taxonomy label i (1-based).
_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139,
    149, 151, 157, 163, 167, 173, 179, 181, 191,
)


def prime_product(root: AstNode) -> int:
    """Product over nodes of the prime assigned to each node's label.

    Two trees get the same product iff they have the same label multiset;
    all structure is deliberately ignored.
    """
    product = 1
    for node in iter_nodes(root):
        product *= _PRIMES[digitize(node.kind) - 1]
    return product


def _label_counts(root: AstNode) -> dict[int, int]:
    counts: dict[int, int] = {}
    for node in iter_nodes(root):
        label = digitize(node.kind)
        counts[label] = counts.get(label, 0) + 1
    return counts


def prime_similarity(t1: AstNode | FunctionAst, t2: AstNode | FunctionAst) -> float:
    """Dice overlap of the two prime-factor multisets, in [0, 1]."""
    r1 = t1.root if isinstance(t1, FunctionAst) else t1
    r2 = t2.root if isinstance(t2, FunctionAst) else t2
    c1, c2 = _label_counts(r1), _label_counts(r2)
    common = sum(min(c1[k], c2[k]) for k in c1.keys() & c2.keys())
    total = sum(c1.values()) + sum(c2.values())
    return 2.0 * common / total


# ---------------------------------------------------------------------------
# Tree edit distance baseline
# ---------------------------------------------------------------------------

#: Trees larger than this are refused: the DP is quadratic in node count
#: and the baseline is only meant for moderate functions.
TED_CAP = 300


class SizeCapError(ValueError):
    pass


class _Annotated:
    """Postorder arrays for the keyroot/forest algorithm: 1-based node
    labels, leftmost leaf descendants, and keyroots."""

    def __init__(self, root: AstNode):
        # Single postorder sweep; completed subtrees leave their
        # (postorder index, leftmost leaf index) on a value stack.
        labels: list[int] = [0]
        lml: list[int] = [0]
        done: list[tuple[int, int]] = []
        stack: list[tuple[AstNode, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if not expanded:
                stack.append((node, True))
                for child in reversed(node.children):
                    stack.append((child, False))
                continue
            k = len(node.children)
            if k:
                child_vals = done[-k:]
                del done[-k:]
                my_lml = child_vals[0][1]
            else:
                my_lml = len(labels)
            labels.append(digitize(node.kind))
            lml.append(my_lml)
            done.append((len(labels) - 1, my_lml))
        self.size = len(labels) - 1
        self.labels = labels
        self.lml = lml
        seen: set[int] = set()
        keyroots = []
        for i in range(self.size, 0, -1):
            if lml[i] not in seen:
                seen.add(lml[i])
                keyroots.append(i)
        self.keyroots = sorted(keyroots)


def tree_edit_distance(
    t1: AstNode | FunctionAst, t2: AstNode | FunctionAst, cap: int = TED_CAP
) -> int:
    """Minimum unit-cost edit script (relabel/insert/delete) between two
    ordered trees, compared on digitalized labels."""
    t1 = t1.root if isinstance(t1, FunctionAst) else t1
    t2 = t2.root if isinstance(t2, FunctionAst) else t2
    n1, n2 = node_count(t1), node_count(t2)
    if n1 > cap or n2 > cap:
        raise SizeCapError(
            f"tree edit distance capped at {cap} nodes, got {n1} and {n2}"
        )
    a, b = _Annotated(t1), _Annotated(t2)
    td = [[0] * (b.size + 1) for _ in range(a.size + 1)]

    for ki in a.keyroots:
        for kj in b.keyroots:
            li, lj = a.lml[ki], b.lml[kj]
            rows = ki - li + 2
            cols = kj - lj + 2
            fd = [[0] * cols for _ in range(rows)]
            for x in range(1, rows):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, cols):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, rows):
                i = li + x - 1
                for y in range(1, cols):
                    j = lj + y - 1
                    if a.lml[i] == li and b.lml[j] == lj:
                        rename = 0 if a.labels[i] == b.labels[j] else 1
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[x - 1][y - 1] + rename,
                        )
                        td[i][j] = fd[x][y]
                    else:
                        px = a.lml[i] - li
                        py = b.lml[j] - lj
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[px][py] + td[i][j],
                        )
    return td[a.size][b.size]


def tree_edit_similarity(
    t1: AstNode | FunctionAst, t2: AstNode | FunctionAst, cap: int = TED_CAP
) -> float:
    """1 - distance / (|t1| + |t2|); 1 iff label-identical shape."""
    t1 = t1.root if isinstance(t1, FunctionAst) else t1
    t2 = t2.root if isinstance(t2, FunctionAst) else t2
    d = tree_edit_distance(t1, t2, cap=cap)
    return 1.0 - d / (node_count(t1) + node_count(t2))
