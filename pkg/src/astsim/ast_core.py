"""Core AST model: node taxonomy, digitalization, binarization, JSON I/O.

Function bodies are modelled as ordered trees whose nodes carry a kind
string drawn from a fixed 43-label taxonomy.  Trees are digitalized
(kind -> integer label), then rewritten into binary form with the
left-child right-sibling transform before they reach the encoder.

All tree values here are immutable; helpers that "modify" a tree return
a new one.  Traversals are iterative so deep trees cannot blow the
recursion limit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

SCHEMA_VERSION = "ast-v1"

#: Highest label in the taxonomy; unknown kinds collapse onto it.
LABEL_COUNT = 43

# ---------------------------------------------------------------------------
# Taxonomy
# ---------------------------------------------------------------------------
#
# Label layout: statements 1-9, assignment expressions 10-17, comparisons
# 18-23, arithmetic/bitwise 24-34, remaining expression kinds 38-43.
# Labels 35-37 are reserved so the catch-all group keeps its anchored
# positions (num=40, str=42, other=43).

_STATEMENTS = (
    ("if", 1),
    ("block", 2),
    ("for", 3),
    ("while", 4),
    ("switch", 5),
    ("return", 6),
    ("goto", 7),
    ("continue", 8),
    ("break", 9),
)

_ASSIGNMENTS = (
    ("asg", 10),
    ("asgbor", 11),
    ("asgxor", 12),
    ("asgband", 13),
    ("asgadd", 14),
    ("asgsub", 15),
    ("asgmul", 16),
    ("asgdiv", 17),
)

_COMPARISONS = (
    ("eq", 18),
    ("ne", 19),
    ("gt", 20),
    ("lt", 21),
    ("ge", 22),
    ("le", 23),
)

_ARITHMETICS = (
    ("bor", 24),
    ("xor", 25),
    ("add", 26),
    ("sub", 27),
    ("mul", 28),
    ("div", 29),
    ("not", 30),
    ("postinc", 31),
    ("postdec", 32),
    ("preinc", 33),
    ("predec", 34),
)

_OTHERS = (
    ("idx", 38),
    ("var", 39),
    ("num", 40),
    ("call", 41),
    ("str", 42),
    ("other", 43),
)

#: kind name -> label, for every named kind.
KIND_LABELS: dict[str, int] = dict(
    _STATEMENTS + _ASSIGNMENTS + _COMPARISONS + _ARITHMETICS + _OTHERS
)

#: Kinds folded onto an existing label instead of getting their own.
KIND_ALIASES: dict[str, str] = {"asm": "other"}

STATEMENT_KINDS = frozenset(name for name, _ in _STATEMENTS)

#: Kinds that never carry children.
LEAF_KINDS = frozenset({"goto", "continue", "break", "var", "num", "str"})


def digitize(kind: str) -> int:
    """Map a kind string to its integer label in [1, 43].

    Aliased kinds take their target's label; anything unrecognised falls
    back to the catch-all label 43.
    """
    kind = KIND_ALIASES.get(kind, kind)
    return KIND_LABELS.get(kind, LABEL_COUNT)


def is_known_kind(kind: str) -> bool:
    return kind in KIND_LABELS or kind in KIND_ALIASES


# ---------------------------------------------------------------------------
# Tree values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AstNode:
    """One node of an ordered function AST."""

    kind: str
    children: tuple["AstNode", ...] = ()


@dataclass(frozen=True)
class FunctionAst:
    """A function's AST plus the identity and call info that ride along.

    ``callees`` pairs each distinct called function name with a size
    proxy (its node count where known, else 0).  Proxies must be >= 0.
    """

    name: str
    origin: str
    arch: str
    root: AstNode
    callees: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        for cname, proxy in self.callees:
            if proxy < 0:
                raise ValueError(f"callee {cname!r} has negative size proxy {proxy}")


@dataclass(frozen=True)
class BinTree:
    """Digitalized binary tree produced by the left-child right-sibling
    transform.  ``label`` is in [1, 43]."""

    label: int
    left: "BinTree | None" = None
    right: "BinTree | None" = None


def iter_nodes(root: AstNode) -> Iterator[AstNode]:
    """Preorder iteration over an ordered tree."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def node_count(root: AstNode) -> int:
    return sum(1 for _ in iter_nodes(root))


def tree_depth(root: AstNode) -> int:
    """Depth in nodes; a lone node has depth 1."""
    best = 1
    stack = [(root, 1)]
    while stack:
        node, d = stack.pop()
        best = max(best, d)
        for child in node.children:
            stack.append((child, d + 1))
    return best


def bin_nodes(root: BinTree) -> Iterator[BinTree]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if node.right is not None:
            stack.append(node.right)
        if node.left is not None:
            stack.append(node.left)


def bin_node_count(root: BinTree) -> int:
    return sum(1 for _ in bin_nodes(root))


# ---------------------------------------------------------------------------
# Left-child right-sibling binarization
# ---------------------------------------------------------------------------


def binarize_lcrs(root: AstNode) -> BinTree:
    """Rewrite an ordered tree into binary form.

    Each node's left pointer takes its first child, the right pointer its
    next sibling, and kinds are digitalized on the way.  Node count is
    preserved exactly.

    Positions, not object identities, drive the transform, so trees that
    internally share subtree objects are handled correctly, and the
    output tree never aliases nodes.
    """
    # One frame per output node: (source node, following siblings).
    frames: list[tuple[AstNode, tuple[AstNode, ...]]] = [(root, ())]
    left_of: list[int] = [-1]
    right_of: list[int] = [-1]
    todo = [0]
    while todo:
        i = todo.pop()
        node, tail = frames[i]
        if node.children:
            left_of[i] = len(frames)
            frames.append((node.children[0], node.children[1:]))
            left_of.append(-1)
            right_of.append(-1)
            todo.append(left_of[i])
        if tail:
            right_of[i] = len(frames)
            frames.append((tail[0], tail[1:]))
            left_of.append(-1)
            right_of.append(-1)
            todo.append(right_of[i])

    # A frame's children always carry larger indices, so a reverse sweep
    # builds bottom-up.
    built: list[BinTree | None] = [None] * len(frames)
    for i in range(len(frames) - 1, -1, -1):
        node, _ = frames[i]
        built[i] = BinTree(
            label=digitize(node.kind),
            left=None if left_of[i] < 0 else built[left_of[i]],
            right=None if right_of[i] < 0 else built[right_of[i]],
        )
    out = built[0]
    assert out is not None
    return out


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

#: Functions smaller than this are too thin to compare meaningfully.
MIN_NODES = 5


@dataclass(frozen=True)
class ValidationReport:
    node_count: int
    depth: int
    too_small: bool
    unknown_kinds: tuple[str, ...]
    label_counts: dict[int, int] = field(hash=False, default_factory=dict)

    def ok(self) -> bool:
        return not self.too_small


def validate(ast: FunctionAst) -> ValidationReport:
    """Size/shape sanity check for one function AST.

    Unknown kinds are reported but not fatal: they digitalize onto the
    catch-all label.  Aliased kinds (e.g. inline assembly) do not count
    as unknown.
    """
    counts: dict[int, int] = {}
    unknown: list[str] = []
    seen_unknown: set[str] = set()
    total = 0
    for node in iter_nodes(ast.root):
        total += 1
        label = digitize(node.kind)
        counts[label] = counts.get(label, 0) + 1
        if not is_known_kind(node.kind) and node.kind not in seen_unknown:
            seen_unknown.add(node.kind)
            unknown.append(node.kind)
    return ValidationReport(
        node_count=total,
        depth=tree_depth(ast.root),
        too_small=total < MIN_NODES,
        unknown_kinds=tuple(unknown),
        label_counts=counts,
    )


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


class JsonParseError(ValueError):
    """Malformed JSON text; carries the 1-based error position."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)
        self.line = line
        self.col = col


class SchemaError(ValueError):
    """Well-formed JSON that does not satisfy the ast-v1 schema."""


def _node_to_obj(root: AstNode) -> dict:
    obj: dict = {"k": root.kind, "c": []}
    stack = [(root, obj)]
    while stack:
        node, sink = stack.pop()
        for child in node.children:
            cobj: dict = {"k": child.kind, "c": []}
            sink["c"].append(cobj)
            stack.append((child, cobj))
    return obj


def ast_to_json(ast: FunctionAst) -> str:
    """Canonical single-line serialization.

    Key order is fixed, separators are compact, and non-ASCII text is
    kept verbatim, so equal values always produce identical bytes.
    """
    obj = {
        "schema": SCHEMA_VERSION,
        "name": ast.name,
        "origin": ast.origin,
        "arch": ast.arch,
        "callees": [[n, p] for n, p in ast.callees],
        "root": _node_to_obj(ast.root),
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _require(obj: dict, key: str, typ: type, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, typ) or isinstance(value, bool):
        raise SchemaError(f"{where}: field {key!r} must be {typ.__name__}")
    return value


def _obj_to_node(obj, where: str = "root") -> AstNode:
    # Flatten to a preorder array first, then build bottom-up, so deep
    # input cannot overflow the interpreter stack.
    kinds: list[str] = []
    parents: list[int] = []
    stack: list[tuple[object, str, int]] = [(obj, where, -1)]
    while stack:
        o, path, parent = stack.pop()
        if not isinstance(o, dict):
            raise SchemaError(f"{path}: node must be an object")
        kind = _require(o, "k", str, path)
        kids = o.get("c", [])
        if not isinstance(kids, list):
            raise SchemaError(f"{path}: field 'c' must be a list")
        idx = len(kinds)
        kinds.append(kind)
        parents.append(parent)
        for i in range(len(kids) - 1, -1, -1):
            stack.append((kids[i], f"{path}.c[{i}]", idx))

    # Children have larger preorder indices than their parent, so a
    # reversed sweep sees every child before its parent; within a parent
    # it sees later siblings first, hence the insert at the front.
    nodes: list[AstNode | None] = [None] * len(kinds)
    children: list[list[AstNode]] = [[] for _ in kinds]
    for i in range(len(kinds) - 1, -1, -1):
        nodes[i] = AstNode(kind=kinds[i], children=tuple(children[i]))
        p = parents[i]
        if p >= 0:
            children[p].insert(0, nodes[i])
    root = nodes[0]
    assert root is not None
    return root


def json_to_ast(text: str) -> FunctionAst:
    """Parse one canonical-or-not ast-v1 JSON document."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JsonParseError(exc.msg, line=exc.lineno, col=exc.colno) from exc
    if not isinstance(obj, dict):
        raise SchemaError("document: top level must be an object")
    schema = obj.get("schema")
    if schema != SCHEMA_VERSION:
        raise SchemaError(
            f"document: field 'schema' must be {SCHEMA_VERSION!r}, got {schema!r}"
        )
    name = _require(obj, "name", str, "document")
    origin = _require(obj, "origin", str, "document")
    arch = _require(obj, "arch", str, "document")
    raw_callees = _require(obj, "callees", list, "document")
    callees: list[tuple[str, int]] = []
    for i, entry in enumerate(raw_callees):
        where = f"callees[{i}]"
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not isinstance(entry[0], str)
            or not isinstance(entry[1], int)
            or isinstance(entry[1], bool)
        ):
            raise SchemaError(f"{where}: must be [name, size] with integer size")
        if entry[1] < 0:
            raise SchemaError(f"{where}: size must be >= 0")
        callees.append((entry[0], entry[1]))
    if "root" not in obj:
        raise SchemaError("document: missing field 'root'")
    root = _obj_to_node(obj["root"])
    return FunctionAst(
        name=name, origin=origin, arch=arch, root=root, callees=tuple(callees)
    )


def write_corpus(path, asts: Iterable[FunctionAst]) -> int:
    """Write functions as one JSON document per line; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ast in asts:
            fh.write(ast_to_json(ast))
            fh.write("\n")
            n += 1
    return n


def read_corpus(path) -> list[FunctionAst]:
    out: list[FunctionAst] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(json_to_ast(line))
            except (JsonParseError, SchemaError) as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from exc
    return out
