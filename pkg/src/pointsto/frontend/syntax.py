"""Lexer, AST and recursive-descent parser for mini-C.

Types are resolved while parsing (records must be declared before use), so
declarations carry ``memory`` CTypes directly.  Comments are kept with their
positions for annotation matching.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from ..memory import Array, CType, Pointer, Record, RecordRef, Scalar

INT = Scalar("int")
CHAR = Scalar("char")
VOID = Scalar("void")

BASE_TYPES = {"int", "char", "void", "long", "short", "float", "double", "bool", "unsigned", "signed"}
KEYWORDS = BASE_TYPES | {
    "const", "struct", "if", "else", "while", "for", "do", "return", "break",
    "continue", "true", "false", "sizeof", "NULL", "goto", "switch", "union",
}

Pos = tuple  # (line, col), both 1-based


class SyntaxErrors(Exception):
    def __init__(self, errors: list):
        super().__init__("; ".join(f"{l}:{c}: {m}" for l, c, m in errors))
        self.errors = errors


# ---------------------------------------------------------------- lexer


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, kw, op, eof
    text: str
    line: int
    col: int

    @property
    def pos(self) -> Pos:
        return (self.line, self.col)


@dataclass(frozen=True)
class Comment:
    text: str
    start: Pos
    end: Pos


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<int>0[xX][0-9a-fA-F]+|\d+)[uUlL]*
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op>\.\.\.|->|\+\+|--|==|!=|<=|>=|&&|\|\||\+=|-=|\*=|[-+*/%&|!<>=(){}\[\];,.~?:^])
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(source: str) -> tuple:
    tokens, comments, errors = [], [], []
    line, line_start, i = 1, 0, 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        col = i - line_start + 1
        if not m:
            errors.append((line, col, f"unexpected character {source[i]!r}"))
            i += 1
            continue
        kind, text = m.lastgroup, m.group()
        start = (line, col)
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + text.rindex("\n") + 1
        end = (line, m.end() - line_start)
        i = m.end()
        if kind in ("ws", "nl"):
            continue
        if kind in ("line_comment", "block_comment"):
            comments.append(Comment(text, start, end))
            continue
        if kind == "int":
            tokens.append(Token("int", m.group("int"), *start))
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, *start))
        else:
            tokens.append(Token("op", text, *start))
    tokens.append(Token("eof", "", line, i - line_start + 1))
    if errors:
        raise SyntaxErrors(errors)
    return tokens, comments


# ---------------------------------------------------------------- AST


@dataclass
class Node:
    pos: Pos = field(default=(0, 0), kw_only=True)
    end: Pos = field(default=(0, 0), kw_only=True)

    @property
    def line(self) -> int:
        return self.pos[0]


@dataclass
class Name(Node):
    id: str


@dataclass
class IntLit(Node):
    value: int


@dataclass
class BoolLit(Node):
    value: bool


@dataclass
class NullLit(Node):
    pass


@dataclass
class Unknown(Node):
    """The ``...`` placeholder: some value or index the program leaves open."""


@dataclass
class Unary(Node):
    op: str  # & * ! - + ~ ++ -- (prefix)
    operand: "Expr"


@dataclass
class Postfix(Node):
    op: str  # ++ --
    operand: "Expr"


@dataclass
class Binary(Node):
    op: str
    left: "Expr"
    right: "Expr"


@dataclass
class AssignExpr(Node):
    op: str  # = += -=
    target: "Expr"
    value: "Expr"


@dataclass
class Index(Node):
    base: "Expr"
    index: "Expr"


@dataclass
class Member(Node):
    base: "Expr"
    field: str
    arrow: bool


@dataclass
class Call(Node):
    func: str
    args: list


@dataclass
class SizeOf(Node):
    ctype: CType


Expr = Union[Name, IntLit, BoolLit, NullLit, Unknown, Unary, Postfix, Binary, AssignExpr, Index, Member, Call, SizeOf]


@dataclass
class VarDecl(Node):
    name: str
    ctype: CType
    init: Optional[Expr] = None


@dataclass
class DeclStmt(Node):
    decls: list


@dataclass
class ExprStmt(Node):
    expr: Expr


@dataclass
class Empty(Node):
    pass


@dataclass
class Block(Node):
    items: list


@dataclass
class If(Node):
    cond: Expr
    then: "Stmt"
    orelse: Optional["Stmt"] = None


@dataclass
class While(Node):
    cond: Expr
    body: "Stmt"


@dataclass
class Return(Node):
    value: Optional[Expr] = None


@dataclass
class Break(Node):
    pass


@dataclass
class Continue(Node):
    pass


Stmt = Union[DeclStmt, ExprStmt, Empty, Block, If, While, Return, Break, Continue]


@dataclass
class FuncDef(Node):
    name: str
    ret: CType
    params: list  # [(name, ctype)]
    body: Optional[Block] = None


@dataclass
class Program:
    records: dict
    consts: dict  # name -> int or None (unknown)
    globals: list
    functions: dict
    comments: list
    source: str = ""


# ---------------------------------------------------------------- parser


class Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens, self.comments = tokenize(source)
        self.i = 0
        self.records: dict = {}
        self.consts: dict = {}

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text in texts

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        shown = tok.text or "end of input"
        raise SyntaxErrors([(tok.line, tok.col, f"{msg} (at {shown!r})")])

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.fail("expected identifier")
        return self.advance()

    def last_end(self) -> Pos:
        t = self.tokens[self.i - 1]
        return (t.line, t.col + len(t.text))

    # -- types

    def starts_type(self) -> bool:
        return self.tok.kind == "kw" and (self.tok.text in BASE_TYPES or self.tok.text in ("const", "struct"))

    def base_type(self) -> CType:
        words = []
        while self.at("const"):
            self.advance()
        if self.at("struct"):
            self.advance()
            name = self.ident().text
            if self.at("{"):
                return self.record_body(name)
            while self.at("const"):
                self.advance()
            return RecordRef(name)
        while self.tok.kind == "kw" and self.tok.text in BASE_TYPES | {"const"}:
            t = self.advance().text
            if t != "const":
                words.append(t)
        if not words:
            self.fail("expected a type")
        if "void" in words:
            return VOID
        if "char" in words:
            return CHAR
        if "float" in words or "double" in words:
            return Scalar("double" if "double" in words else "float")
        return INT

    def record_body(self, name: str) -> Record:
        if name in self.records:
            self.fail(f"struct {name} redefined")
        self.expect("{")
        fields = []
        while not self.at("}"):
            base = self.base_type()
            while True:
                fname, ftype = self.declarator(base)
                if any(n == fname for n, _ in fields):
                    self.fail(f"duplicate field {fname!r}")
                fields.append((fname, ftype))
                if not self.at(","):
                    break
                self.advance()
            self.expect(";")
        self.expect("}")
        if not fields:
            self.fail(f"struct {name} has no fields")
        rec = Record(name, tuple(fields))
        self.records[name] = rec
        return rec

    def complete(self, t: CType, tok: Token) -> CType:
        """Inline a by-value record reference (pointers keep the reference)."""
        if isinstance(t, RecordRef):
            if t.name not in self.records:
                self.fail(f"incomplete type struct {t.name}", tok)
            return self.records[t.name]
        if isinstance(t, Array):
            return Array(self.complete(t.elem, tok), t.size)
        return t

    def declarator(self, base: CType) -> tuple:
        t = base
        if isinstance(t, Record):
            t = RecordRef(t.name)
        while self.at("*"):
            self.advance()
            while self.at("const"):
                self.advance()
            t = Pointer(t)
        tok = self.tok
        name = self.ident().text
        dims = []
        while self.at("["):
            self.advance()
            dims.append(self.array_size())
            self.expect("]")
        for size in reversed(dims):
            t = Array(t, size)
        return name, self.complete(t, tok)

    def array_size(self) -> Optional[int]:
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            n = int(tok.text, 0)
        elif tok.kind == "ident" and tok.text in self.consts:
            self.advance()
            n = self.consts[tok.text]
            if n is None:
                return None
        elif self.at("...") or self.at("]"):
            if self.at("..."):
                self.advance()
            return None
        else:
            self.fail("array size must be a literal or a constant")
        if n < 1:
            self.fail("array size must be positive", tok)
        return n

    def type_name(self) -> CType:
        """Abstract declarator, as used by ``sizeof``."""
        tok = self.tok
        t = self.base_type()
        while self.at("*"):
            self.advance()
            t = Pointer(t)
        return self.complete(t, tok)

    # -- top level

    def program(self) -> Program:
        globals_, functions = [], {}
        while self.tok.kind != "eof":
            start = self.tok
            if self.at(";"):
                self.advance()
                continue
            is_const = self.at("const")
            base = self.base_type()
            if self.at(";"):
                self.advance()
                continue
            name, t = self.declarator(base)
            if self.at("("):
                fn = self.function(name, t, start)
                prev = functions.get(name)
                if prev is not None and prev.body is not None and fn.body is not None:
                    self.fail(f"function {name!r} redefined", start)
                if prev is None or fn.body is not None:
                    functions[name] = fn
                continue
            decls = []
            while True:
                init = None
                if self.at("="):
                    self.advance()
                    init = self.initializer()
                if is_const and t == INT and isinstance(init, (IntLit, Unknown)):
                    self.consts[name] = init.value if isinstance(init, IntLit) else None
                else:
                    decls.append(VarDecl(name, t, init, pos=start.pos, end=self.last_end()))
                if not self.at(","):
                    break
                self.advance()
                name, t = self.declarator(base)
            self.expect(";")
            globals_ += decls
        return Program(self.records, self.consts, globals_, functions, self.comments, self.source)

    def function(self, name: str, ret: CType, start: Token) -> FuncDef:
        self.expect("(")
        params = []
        if self.at("void") and self.peek().text == ")":
            self.advance()
        while not self.at(")"):
            base = self.base_type()
            pname, ptype = self.declarator(base)
            if isinstance(ptype, Array):
                ptype = Pointer(ptype.elem)
            params.append((pname, ptype))
            if not self.at(","):
                break
            self.advance()
        self.expect(")")
        if self.at(";"):
            self.advance()
            return FuncDef(name, ret, params, None, pos=start.pos, end=self.last_end())
        body = self.block()
        return FuncDef(name, ret, params, body, pos=start.pos, end=body.end)

    def initializer(self) -> Expr:
        if self.at("{"):
            self.fail("aggregate initializers are not supported")
        return self.expr()

    # -- statements

    def block(self) -> Block:
        start = self.expect("{")
        items = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail("unterminated block")
            items.append(self.statement())
        self.advance()
        return Block(items, pos=start.pos, end=self.last_end())

    def statement(self):
        start = self.tok
        if self.at("{"):
            return self.block()
        if self.at(";"):
            self.advance()
            return Empty(pos=start.pos, end=self.last_end())
        if self.starts_type():
            return self.declaration()
        if self.at("if"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.statement()
            orelse = None
            if self.at("else"):
                self.advance()
                orelse = self.statement()
            return If(cond, then, orelse, pos=start.pos, end=self.last_end())
        if self.at("while"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.statement()
            return While(cond, body, pos=start.pos, end=self.last_end())
        if self.at("return"):
            self.advance()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return Return(value, pos=start.pos, end=self.last_end())
        if self.at("break", "continue"):
            kw = self.advance().text
            self.expect(";")
            cls = Break if kw == "break" else Continue
            return cls(pos=start.pos, end=self.last_end())
        if self.at("for", "do", "goto", "switch"):
            kw = self.tok.text
            self.fail(f"unsupported statement {kw!r}")
        if self.at("...") and self.peek().text == ";":
            self.advance()
            self.advance()
            return Empty(pos=start.pos, end=self.last_end())
        e = self.expr()
        self.expect(";")
        return ExprStmt(e, pos=start.pos, end=self.last_end())

    def declaration(self) -> DeclStmt:
        start = self.tok
        base = self.base_type()
        decls = []
        if self.at(";"):
            self.advance()
            return DeclStmt([], pos=start.pos, end=self.last_end())
        while True:
            dstart = self.tok
            name, t = self.declarator(base)
            init = None
            if self.at("="):
                self.advance()
                init = self.initializer()
            decls.append(VarDecl(name, t, init, pos=dstart.pos, end=self.last_end()))
            if not self.at(","):
                break
            self.advance()
        self.expect(";")
        return DeclStmt(decls, pos=start.pos, end=self.last_end())

    # -- expressions

    def expr(self) -> Expr:
        start = self.tok
        left = self.binary(0)
        if self.at("=", "+=", "-="):
            op = self.advance().text
            value = self.expr()
            return AssignExpr(op, left, value, pos=start.pos, end=self.last_end())
        return left

    _LEVELS = [("||",), ("&&",), ("==", "!="), ("<", ">", "<=", ">="), ("+", "-"), ("*", "/", "%")]

    def binary(self, level: int) -> Expr:
        if level == len(self._LEVELS):
            return self.unary()
        start = self.tok
        left = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in self._LEVELS[level]:
            op = self.advance().text
            right = self.binary(level + 1)
            left = Binary(op, left, right, pos=start.pos, end=self.last_end())
        return left

    def unary(self) -> Expr:
        start = self.tok
        if self.at("&", "*", "!", "-", "+", "~", "++", "--"):
            op = self.advance().text
            operand = self.unary()
            return Unary(op, operand, pos=start.pos, end=self.last_end())
        if self.at("sizeof"):
            self.advance()
            self.expect("(")
            if self.starts_type():
                t = self.type_name()
                self.expect(")")
                return SizeOf(t, pos=start.pos, end=self.last_end())
            self.fail("sizeof needs a type name")
        if self.at("(") and self.peek().kind == "kw" and self.peek().text in BASE_TYPES | {"struct", "const"}:
            self.fail("casts are not supported")
        return self.postfix()

    def postfix(self) -> Expr:
        start = self.tok
        e = self.primary()
        while True:
            if self.at("["):
                self.advance()
                idx = self.expr()
                self.expect("]")
                e = Index(e, idx, pos=start.pos, end=self.last_end())
            elif self.at(".", "->"):
                arrow = self.advance().text == "->"
                fname = self.ident().text
                e = Member(e, fname, arrow, pos=start.pos, end=self.last_end())
            elif self.at("++", "--"):
                op = self.advance().text
                e = Postfix(op, e, pos=start.pos, end=self.last_end())
            elif self.at("("):
                if not isinstance(e, Name):
                    self.fail("only direct calls are supported")
                self.advance()
                args = []
                while not self.at(")"):
                    args.append(self.expr())
                    if not self.at(","):
                        break
                    self.advance()
                self.expect(")")
                e = Call(e.id, args, pos=start.pos, end=self.last_end())
            else:
                return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return IntLit(int(t.text, 0), pos=t.pos, end=self.last_end())
        if t.kind == "ident":
            self.advance()
            if t.text in self.consts and not self.at("("):
                v = self.consts[t.text]
                if v is None:
                    return Unknown(pos=t.pos, end=self.last_end())
                return IntLit(v, pos=t.pos, end=self.last_end())
            return Name(t.text, pos=t.pos, end=self.last_end())
        if self.at("true", "false"):
            self.advance()
            return BoolLit(t.text == "true", pos=t.pos, end=self.last_end())
        if self.at("NULL"):
            self.advance()
            return NullLit(pos=t.pos, end=self.last_end())
        if self.at("..."):
            self.advance()
            return Unknown(pos=t.pos, end=self.last_end())
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail("expected an expression")


def parse(source: str) -> Program:
    """Parse mini-C source; raises SyntaxErrors (no partial tree)."""
    return Parser(source).program()


def expr_text(source: str, node: Node) -> str:
    """Source text of ``node`` collapsed onto one line."""
    lines = source.split("\n")
    (l0, c0), (l1, c1) = node.pos, node.end
    if l0 == l1:
        text = lines[l0 - 1][c0 - 1 : c1 - 1]
    else:
        parts = [lines[l0 - 1][c0 - 1 :]] + lines[l0 : l1 - 1] + [lines[l1 - 1][: c1 - 1]]
        text = " ".join(p.strip() for p in parts)
    return " ".join(text.split())
