"""Frontend for a miniature C-like language.

Exists so the pipeline can be exercised end to end without a disassembler:
source text goes in, taxonomy-conformant :class:`~astsim.ast_core.FunctionAst`
values come out.  The language covers just enough surface to hit every
taxonomy kind that has syntax.

Grammar sketch::

    program  := fndef*
    fndef    := 'fn' IDENT '(' [IDENT (',' IDENT)*] ')' block
    block    := '{' stmt* '}'
    stmt     := block | if | while | for | switch
              | 'return' [expr] ';' | 'break' ';' | 'continue' ';'
              | 'goto' IDENT ';' | IDENT ':' stmt | expr ';'
    expr     := assignment, right associative, lowest precedence
    binary   := '|' < '^' < comparisons < '+' '-' < '*' '/'
    unary    := '~' '++' '--' (prefix); '++' '--' '[...]' '(args)' (postfix)

Shape conventions: a function's tree root is its body block; parameter
names, label names, goto targets, case constants, literal values and the
callee name of a call all drop out of the tree (a call node's children
are the argument expressions only).  Called names are instead collected
per function, in first-use order, and paired with the callee's node
count as a size proxy (0 when the callee is not defined in the same
source).
"""

from __future__ import annotations

from dataclasses import dataclass

from astsim.ast_core import AstNode, FunctionAst, node_count


class MiniSyntaxError(ValueError):
    """Lex or parse failure; carries the 1-based source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    type: str  # 'ident' | 'num' | 'str' | 'op' | 'kw' | 'eof'
    text: str
    line: int
    col: int


KEYWORDS = frozenset(
    {
        "fn",
        "if",
        "else",
        "for",
        "while",
        "switch",
        "case",
        "default",
        "return",
        "break",
        "continue",
        "goto",
    }
)

# Longest first so '+=' wins over '+'.
_OPERATORS = (
    "++",
    "--",
    "+=",
    "-=",
    "*=",
    "/=",
    "|=",
    "^=",
    "&=",
    "==",
    "!=",
    ">=",
    "<=",
    "+",
    "-",
    "*",
    "/",
    "|",
    "^",
    "~",
    "=",
    "<",
    ">",
    "(",
    ")",
    "{",
    "}",
    "[",
    "]",
    ";",
    ",",
    ":",
)

_ASSIGN_KINDS = {
    "=": "asg",
    "|=": "asgbor",
    "^=": "asgxor",
    "&=": "asgband",
    "+=": "asgadd",
    "-=": "asgsub",
    "*=": "asgmul",
    "/=": "asgdiv",
}

_COMPARE_KINDS = {
    "==": "eq",
    "!=": "ne",
    ">": "gt",
    "<": "lt",
    ">=": "ge",
    "<=": "le",
}


def tokenize(source: str) -> list[Token]:
    toks: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance(1)
            continue
        if source.startswith("/*", i):
            start_line, start_col = line, col
            advance(2)
            while i < n and not source.startswith("*/", i):
                advance(1)
            if i >= n:
                raise MiniSyntaxError("unterminated comment", start_line, start_col)
            advance(2)
            continue
        if ch.isalpha() or ch == "_":
            start = i
            start_line, start_col = line, col
            while i < n and (source[i].isalnum() or source[i] == "_"):
                advance(1)
            text = source[start:i]
            toks.append(
                Token("kw" if text in KEYWORDS else "ident", text, start_line, start_col)
            )
            continue
        if ch.isdigit():
            start = i
            start_line, start_col = line, col
            while i < n and source[i].isdigit():
                advance(1)
            toks.append(Token("num", source[start:i], start_line, start_col))
            continue
        if ch == '"':
            start = i
            start_line, start_col = line, col
            advance(1)
            while i < n and source[i] != '"':
                if source[i] == "\\" and i + 1 < n:
                    advance(2)
                else:
                    advance(1)
            if i >= n:
                raise MiniSyntaxError("unterminated string", start_line, start_col)
            advance(1)
            toks.append(Token("str", source[start:i], start_line, start_col))
            continue
        for op in _OPERATORS:
            if source.startswith(op, i):
                toks.append(Token("op", op, line, col))
                advance(len(op))
                break
        else:
            raise MiniSyntaxError(f"unexpected character {ch!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


@dataclass
class _RawFunction:
    name: str
    body: AstNode
    call_names: tuple[str, ...]
    line: int
    col: int


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0
        self.call_names: list[str] = []

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.toks[self.pos]
        if tok.type != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise MiniSyntaxError(message, tok.line, tok.col)

    def at_op(self, text: str) -> bool:
        tok = self.peek()
        return tok.type == "op" and tok.text == text

    def at_kw(self, text: str) -> bool:
        tok = self.peek()
        return tok.type == "kw" and tok.text == text

    def expect_op(self, text: str) -> Token:
        if not self.at_op(text):
            self.error(f"expected {text!r}, got {self.peek().text!r}")
        return self.next()

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok.type != "ident":
            self.error(f"expected identifier, got {tok.text!r}")
        return self.next()

    # -- declarations --------------------------------------------------

    def parse_program(self) -> list[_RawFunction]:
        out = []
        while not self.peek().type == "eof":
            out.append(self.parse_fndef())
        return out

    def parse_fndef(self) -> _RawFunction:
        if not self.at_kw("fn"):
            self.error(f"expected 'fn', got {self.peek().text!r}")
        self.next()
        name_tok = self.expect_ident()
        self.expect_op("(")
        if not self.at_op(")"):
            self.expect_ident()
            while self.at_op(","):
                self.next()
                self.expect_ident()
        self.expect_op(")")
        self.call_names = []
        if not self.at_op("{"):
            self.error(f"expected '{{', got {self.peek().text!r}")
        body = self.parse_block()
        seen: set[str] = set()
        ordered = [c for c in self.call_names if not (c in seen or seen.add(c))]
        return _RawFunction(
            name=name_tok.text,
            body=body,
            call_names=tuple(ordered),
            line=name_tok.line,
            col=name_tok.col,
        )

    # -- statements ----------------------------------------------------

    def parse_block(self) -> AstNode:
        self.expect_op("{")
        stmts: list[AstNode] = []
        while not self.at_op("}"):
            if self.peek().type == "eof":
                self.error("unexpected end of input inside block")
            stmts.append(self.parse_stmt())
        self.next()
        return AstNode("block", tuple(stmts))

    def parse_stmt(self) -> AstNode:
        tok = self.peek()
        if tok.type == "op" and tok.text == "{":
            return self.parse_block()
        if tok.type == "kw":
            if tok.text == "if":
                return self.parse_if()
            if tok.text == "while":
                self.next()
                self.expect_op("(")
                cond = self.parse_expr()
                self.expect_op(")")
                return AstNode("while", (cond, self.parse_stmt()))
            if tok.text == "for":
                return self.parse_for()
            if tok.text == "switch":
                return self.parse_switch()
            if tok.text == "return":
                self.next()
                if self.at_op(";"):
                    self.next()
                    return AstNode("return")
                value = self.parse_expr()
                self.expect_op(";")
                return AstNode("return", (value,))
            if tok.text == "break":
                self.next()
                self.expect_op(";")
                return AstNode("break")
            if tok.text == "continue":
                self.next()
                self.expect_op(";")
                return AstNode("continue")
            if tok.text == "goto":
                self.next()
                self.expect_ident()
                self.expect_op(";")
                return AstNode("goto")
            self.error(f"unexpected keyword {tok.text!r}")
        # labels are transparent: 'name: stmt' parses as stmt
        if tok.type == "ident" and self.peek(1).type == "op" and self.peek(1).text == ":":
            self.next()
            self.next()
            return self.parse_stmt()
        expr = self.parse_expr()
        self.expect_op(";")
        return expr

    def parse_if(self) -> AstNode:
        self.next()
        self.expect_op("(")
        cond = self.parse_expr()
        self.expect_op(")")
        then = self.parse_stmt()
        if self.at_kw("else"):
            self.next()
            return AstNode("if", (cond, then, self.parse_stmt()))
        return AstNode("if", (cond, then))

    def parse_for(self) -> AstNode:
        self.next()
        self.expect_op("(")
        parts: list[AstNode] = []
        if not self.at_op(";"):
            parts.append(self.parse_expr())
        self.expect_op(";")
        if not self.at_op(";"):
            parts.append(self.parse_expr())
        self.expect_op(";")
        if not self.at_op(")"):
            parts.append(self.parse_expr())
        self.expect_op(")")
        parts.append(self.parse_stmt())
        return AstNode("for", tuple(parts))

    def parse_switch(self) -> AstNode:
        self.next()
        self.expect_op("(")
        scrutinee = self.parse_expr()
        self.expect_op(")")
        self.expect_op("{")
        arms: list[AstNode] = []
        while not self.at_op("}"):
            if self.at_kw("case"):
                self.next()
                tok = self.peek()
                if tok.type != "num":
                    self.error(f"expected number after 'case', got {tok.text!r}")
                self.next()
            elif self.at_kw("default"):
                self.next()
            else:
                self.error(f"expected 'case' or 'default', got {self.peek().text!r}")
            self.expect_op(":")
            stmts: list[AstNode] = []
            while not (self.at_op("}") or self.at_kw("case") or self.at_kw("default")):
                if self.peek().type == "eof":
                    self.error("unexpected end of input inside switch")
                stmts.append(self.parse_stmt())
            arms.append(AstNode("block", tuple(stmts)))
        self.next()
        return AstNode("switch", (scrutinee, *arms))

    # -- expressions ---------------------------------------------------

    def parse_expr(self) -> AstNode:
        lhs = self.parse_bor()
        tok = self.peek()
        if tok.type == "op" and tok.text in _ASSIGN_KINDS:
            if lhs.kind not in ("var", "idx"):
                self.error("invalid assignment target", tok)
            self.next()
            rhs = self.parse_expr()
            return AstNode(_ASSIGN_KINDS[tok.text], (lhs, rhs))
        return lhs

    def parse_bor(self) -> AstNode:
        node = self.parse_xor()
        while self.at_op("|"):
            self.next()
            node = AstNode("bor", (node, self.parse_xor()))
        return node

    def parse_xor(self) -> AstNode:
        node = self.parse_compare()
        while self.at_op("^"):
            self.next()
            node = AstNode("xor", (node, self.parse_compare()))
        return node

    def parse_compare(self) -> AstNode:
        node = self.parse_addsub()
        tok = self.peek()
        if tok.type == "op" and tok.text in _COMPARE_KINDS:
            self.next()
            return AstNode(_COMPARE_KINDS[tok.text], (node, self.parse_addsub()))
        return node

    def parse_addsub(self) -> AstNode:
        node = self.parse_muldiv()
        while self.peek().type == "op" and self.peek().text in ("+", "-"):
            kind = "add" if self.next().text == "+" else "sub"
            node = AstNode(kind, (node, self.parse_muldiv()))
        return node

    def parse_muldiv(self) -> AstNode:
        node = self.parse_unary()
        while self.peek().type == "op" and self.peek().text in ("*", "/"):
            kind = "mul" if self.next().text == "*" else "div"
            node = AstNode(kind, (node, self.parse_unary()))
        return node

    def parse_unary(self) -> AstNode:
        if self.at_op("~"):
            self.next()
            return AstNode("not", (self.parse_unary(),))
        if self.at_op("++"):
            self.next()
            return AstNode("preinc", (self.parse_unary(),))
        if self.at_op("--"):
            self.next()
            return AstNode("predec", (self.parse_unary(),))
        return self.parse_postfix()

    def parse_postfix(self) -> AstNode:
        node, callee = self.parse_primary()
        while True:
            if self.at_op("("):
                self.next()
                # record before the args so f(g()) lists f ahead of g
                if callee is not None:
                    self.call_names.append(callee)
                args: list[AstNode] = []
                if not self.at_op(")"):
                    args.append(self.parse_expr())
                    while self.at_op(","):
                        self.next()
                        args.append(self.parse_expr())
                self.expect_op(")")
                node = AstNode("call", tuple(args))
            elif self.at_op("["):
                self.next()
                index = self.parse_expr()
                self.expect_op("]")
                node = AstNode("idx", (node, index))
            elif self.at_op("++"):
                self.next()
                node = AstNode("postinc", (node,))
            elif self.at_op("--"):
                self.next()
                node = AstNode("postdec", (node,))
            else:
                return node
            callee = None

    def parse_primary(self) -> tuple[AstNode, str | None]:
        tok = self.peek()
        if tok.type == "ident":
            self.next()
            return AstNode("var"), tok.text
        if tok.type == "num":
            self.next()
            return AstNode("num"), None
        if tok.type == "str":
            self.next()
            return AstNode("str"), None
        if self.at_op("("):
            self.next()
            node = self.parse_expr()
            self.expect_op(")")
            return node, None
        self.error(f"expected expression, got {tok.text!r}")
        raise AssertionError("unreachable")


def parse_mini(source: str, origin: str = "<mini>", arch: str = "src") -> list[FunctionAst]:
    """Parse a program; one :class:`FunctionAst` per function definition.

    Callee size proxies are resolved against sibling definitions in the
    same source (undefined names get proxy 0).  Duplicate definitions of
    a name are rejected.
    """
    parser = _Parser(tokenize(source))
    raw = parser.parse_program()
    seen: dict[str, _RawFunction] = {}
    for fn in raw:
        if fn.name in seen:
            raise MiniSyntaxError(f"duplicate function {fn.name!r}", fn.line, fn.col)
        seen[fn.name] = fn
    sizes = {fn.name: node_count(fn.body) for fn in raw}
    out = []
    for fn in raw:
        callees = tuple((cn, sizes.get(cn, 0)) for cn in fn.call_names)
        out.append(
            FunctionAst(name=fn.name, origin=origin, arch=arch, root=fn.body, callees=callees)
        )
    return out
