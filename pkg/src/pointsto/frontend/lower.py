"""Type-directed lowering of mini-C functions to memory-operation CFGs.

Pointer-valued C expressions become location-set expressions: ``p`` read as
a value is ``*p`` over memory locations, ``&e`` is the location of ``e``, an
array decays to its Head slot, ``p + i`` shifts along array parts.

Stack discipline per function: the body's locals live in the top allocation
list, each nested block is bracketed by mark/unmark, and the callee's
parameters (plus a ``__ret`` slot) form the innermost block below the body.
A call is lowered as

    mark; new_var params, __ret; assign args; mark; call
    unmark; copy __ret to the destination; unmark

where the call edge performs link, enters the callee and returns through
unlink.
"""

from __future__ import annotations

from typing import Callable, Optional

from ..arith import IntAbstraction
from ..memory import NULL, Array, CType, Function, Pointer, Record, RecordRef, Scalar, field_offset
from ..transfer import CompareOp
from . import syntax as S
from .cfg import (
    Binding,
    CAnd,
    CAtom,
    CConst,
    CNot,
    COpaque,
    COr,
    CallOp,
    Check,
    Edge,
    FilterOp,
    FunctionCfg,
    HeapSite,
    LoweredProgram,
    MarkOp,
    NewVar,
    Nop,
    SAdd,
    SDeref,
    SField,
    SLoc,
    StmtOp,
    SymExpr,
    UnmarkOp,
)

RET = "__ret"
NULL_PTR = Pointer(Scalar("void"))
INTRINSICS = {"malloc", "free", "rand"}


class LoweringError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UnsupportedFeature(LoweringError):
    pass


def _is_ptr(t: CType) -> bool:
    return isinstance(t, Pointer)


def _is_int(t: CType) -> bool:
    return isinstance(t, Scalar) and t.name != "void"


def _offset_of(path: tuple) -> tuple:
    return path[:-1], path[-1]


class _FunctionLowerer:
    def __init__(self, prog: "_ProgramLowerer", fn: S.FuncDef):
        self.prog = prog
        self.fn = fn
        self.cfg = FunctionCfg(fn.name, is_main=fn.name == "main")
        self.depth = 0
        self.scopes: list = []
        self.loops: list = []  # (head, exit, depth)
        self.cur = 0
        self.body_end: Optional[int] = None

    # -- plumbing

    def err(self, node: S.Node, msg: str, unsupported: bool = False):
        cls = UnsupportedFeature if unsupported else LoweringError
        raise cls(node.line, msg)

    def text(self, node: S.Node) -> str:
        return S.expr_text(self.prog.source, node)

    def node(self, line: int) -> int:
        return self.cfg.new_node(line)

    def emit(self, op, line: int) -> int:
        nxt = self.node(line)
        self.cfg.edges.append(Edge(self.cur, nxt, op))
        self.cur = nxt
        return nxt

    def jump(self, dst: int) -> None:
        self.cfg.edges.append(Edge(self.cur, dst, Nop()))

    def snapshot(self, node: int) -> None:
        merged: dict = {}
        for scope in self.scopes:
            merged.update(scope)
        self.cfg.scopes[node] = (self.depth, merged)

    def anchor(self, kind: str, ast: S.Node) -> None:
        self.cfg.visible.add(self.cur)
        self.snapshot(self.cur)
        self.prog.anchors.append((kind, ast, self.fn.name, self.cur))

    def declare(self, node: S.Node, name: str, binding: Binding) -> None:
        scope = self.scopes[-1]
        if name in scope:
            self.err(node, f"{name!r} redeclared in the same block")
        scope[name] = binding

    def lookup(self, node: S.Node, name: str) -> Binding:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        if name in self.prog.global_bindings:
            return self.prog.global_bindings[name]
        if name in self.prog.functions:
            return Binding("function", Function(name))
        self.err(node, f"undeclared identifier {name!r}")

    def var_prefix(self, name: str, b: Binding, extra: int = 0) -> tuple:
        if b.kind == "global":
            return ("global", name)
        if b.kind == "function":
            return ("text", name)
        d = self.depth + extra
        if b.depth == d:
            return ("top", name)
        return ("topb", d - b.depth - 1, name)

    def record(self, t: CType, node: S.Node) -> Record:
        if isinstance(t, RecordRef):
            t = self.prog.records.get(t.name)
            if t is None:
                self.err(node, "use of an incomplete struct type")
        if not isinstance(t, Record):
            self.err(node, "member access on a non-struct value")
        return t

    # -- expressions

    def lvalue(self, e: S.Expr) -> tuple:
        """``(sym, ctype, checks)`` for the location designated by ``e``."""
        if isinstance(e, S.Name):
            b = self.lookup(e, e.id)
            return SLoc(self.var_prefix(e.id, b) + (0,)), b.ctype, []
        if isinstance(e, S.Unary) and e.op == "*":
            v, t, ck = self.rvalue(e.operand)
            if not _is_ptr(t) or t == NULL_PTR:
                self.err(e, "dereference of a non-pointer")
            target = t.target
            if isinstance(target, RecordRef):
                target = self.record(target, e)
            return v, target, ck
        if isinstance(e, S.Index):
            v, t, ck = self.rvalue(e.base)
            if not _is_ptr(t):
                self.err(e, "indexing a non-pointer value")
            elem = t.target
            if isinstance(elem, RecordRef):
                elem = self.record(elem, e)
            if isinstance(e.index, S.Unknown):
                offs = None
                ick = []
            else:
                offs, ick = self.int_value(e.index)
            return SAdd(v, elem, offs), elem, ck + ick
        if isinstance(e, S.Member):
            if e.arrow:
                v, t, ck = self.rvalue(e.base)
                if not _is_ptr(t):
                    self.err(e, "'->' on a non-pointer")
                rec = self.record(t.target, e)
            else:
                v, t, ck = self.lvalue(e.base)
                rec = self.record(t, e)
            try:
                off = field_offset(rec, e.field)
                ftype = dict(rec.fields)[e.field]
            except KeyError:
                self.err(e, f"struct {rec.name} has no field {e.field!r}")
            if isinstance(v, SLoc) and off == 0:
                return v, ftype, ck
            if isinstance(v, SLoc) and not e.arrow:
                prefix, slot = _offset_of(v.path)
                return SLoc(prefix + (slot + off,)), ftype, ck
            return SField(v, off, rec.name), ftype, ck
        self.err(e, f"{self.text(e)!r} is not an lvalue")

    def rvalue(self, e: S.Expr) -> tuple:
        """``(sym, ctype, checks)`` for a pointer-valued expression; sym None = unknown."""
        if isinstance(e, S.NullLit) or (isinstance(e, S.IntLit) and e.value == 0):
            return SLoc(NULL), NULL_PTR, []
        if isinstance(e, S.Unknown):
            return None, NULL_PTR, []
        if isinstance(e, S.Unary) and e.op == "&":
            if isinstance(e.operand, S.Unary) and e.operand.op == "*":
                return self.rvalue(e.operand.operand)
            v, t, ck = self.lvalue(e.operand)
            if not isinstance(v, SLoc):
                ck = ck + [Check(v, "addr", self.text(e.operand))]
            return v, Pointer(t), ck
        if isinstance(e, S.Binary) and e.op in ("+", "-"):
            lt = self.type_of(e.left)
            if e.op == "+" and not _is_ptr(lt) and not isinstance(lt, Array):
                e = S.Binary("+", e.right, e.left, pos=e.pos, end=e.end)
            v, t, ck = self.rvalue(e.left)
            if not _is_ptr(t) or t == NULL_PTR:
                self.err(e, "pointer arithmetic on a non-pointer")
            rt = self.type_of(e.right)
            if not _is_int(rt):
                self.err(e, "pointer offset must be an integer", unsupported=_is_ptr(rt))
            offs, ick = self.int_value(e.right)
            if e.op == "-":
                offs = -offs
            if v is None:
                return None, t, ck + ick
            return SAdd(v, t.target, offs), t, ck + ick
        if isinstance(e, (S.Name, S.Unary, S.Index, S.Member)) and not (isinstance(e, S.Unary) and e.op != "*"):
            v, t, ck = self.lvalue(e)
            if isinstance(t, Array):
                if not isinstance(v, SLoc):
                    ck = ck + [Check(v, "addr", self.text(e))]
                return v, Pointer(t.elem), ck
            if isinstance(t, Function):
                return v, Pointer(t), ck
            if _is_ptr(t):
                sym = SDeref(v)
                return sym, t, ck + [Check(sym, "value", self.text(e))]
            self.err(e, f"{self.text(e)!r} is not a pointer")
        if isinstance(e, S.Call):
            self.err(e, "calls are only supported as statements or assignment sources", unsupported=True)
        if isinstance(e, (S.AssignExpr, S.Postfix)) or (isinstance(e, S.Unary) and e.op in ("++", "--")):
            self.err(e, "side effects inside expressions are not supported", unsupported=True)
        self.err(e, f"{self.text(e)!r} is not a pointer expression")

    def int_value(self, e: S.Expr) -> tuple:
        """``(IntAbstraction, checks)`` for an integer expression (values are not tracked)."""
        if isinstance(e, S.IntLit):
            return IntAbstraction.of([e.value]), []
        if isinstance(e, (S.Unknown, S.BoolLit)):
            return (IntAbstraction.of([int(e.value)]) if isinstance(e, S.BoolLit) else IntAbstraction.top()), []
        if isinstance(e, S.SizeOf):
            return IntAbstraction.top(), []
        if isinstance(e, S.Unary) and e.op in ("-", "+"):
            v, ck = self.int_value(e.operand)
            return (-v if e.op == "-" else v), ck
        if isinstance(e, S.Unary) and e.op in ("!", "~"):
            _, ck = self.int_value(e.operand) if not _is_ptr(self.type_of(e.operand)) else (None, self.rvalue(e.operand)[2])
            return IntAbstraction.top(), ck
        if isinstance(e, S.Binary):
            lt, rt = self.type_of(e.left), self.type_of(e.right)
            if e.op in ("+", "-", "*") and not _is_ptr(lt) and not _is_ptr(rt):
                a, ca = self.int_value(e.left)
                b, cb = self.int_value(e.right)
                res = {"+": a + b, "-": a - b, "*": a * b}[e.op]
                return res, ca + cb
            ck = []
            for side, t in ((e.left, lt), (e.right, rt)):
                if _is_ptr(t) or isinstance(t, Array):
                    ck += self.rvalue(side)[2]
                elif e.op in ("&&", "||", "==", "!=", "<", ">", "<=", ">=", "/", "%", "+", "-", "*"):
                    ck += self.int_value(side)[1]
            return IntAbstraction.top(), ck
        if isinstance(e, S.Call) and e.func == "rand":
            return IntAbstraction.top(), []
        if isinstance(e, (S.Name, S.Unary, S.Index, S.Member)):
            v, t, ck = self.lvalue(e)
            if not _is_int(t):
                self.err(e, f"{self.text(e)!r} is not an integer")
            if isinstance(v, SLoc):
                return IntAbstraction.top(), ck
            return IntAbstraction.top(), ck + [Check(v, "read", self.text(e))]
        if isinstance(e, S.Call):
            self.err(e, "calls are only supported as statements or assignment sources", unsupported=True)
        self.err(e, "side effects inside expressions are not supported", unsupported=True)

    def type_of(self, e: S.Expr) -> CType:
        if isinstance(e, (S.IntLit, S.BoolLit, S.SizeOf)):
            return S.INT
        if isinstance(e, S.NullLit):
            return NULL_PTR
        if isinstance(e, S.Unknown):
            return S.INT
        if isinstance(e, S.Call):
            if e.func in self.prog.functions:
                return self.prog.functions[e.func].ret
            return NULL_PTR if e.func == "malloc" else S.INT
        if isinstance(e, S.Unary):
            if e.op == "&":
                return Pointer(self.type_of(e.operand))
            if e.op == "*":
                t = self.type_of(e.operand)
                if isinstance(t, Array):
                    return t.elem
                if not _is_ptr(t):
                    self.err(e, "dereference of a non-pointer")
                return t.target
            if e.op in ("++", "--"):
                return self.type_of(e.operand)
            return S.INT
        if isinstance(e, S.Postfix):
            return self.type_of(e.operand)
        if isinstance(e, S.Binary):
            if e.op in ("+", "-"):
                lt, rt = self.type_of(e.left), self.type_of(e.right)
                if isinstance(lt, Array):
                    lt = Pointer(lt.elem)
                if isinstance(rt, Array):
                    rt = Pointer(rt.elem)
                if _is_ptr(lt) and _is_ptr(rt):
                    return S.INT
                if _is_ptr(lt):
                    return lt
                if _is_ptr(rt) and e.op == "+":
                    return rt
            return S.INT
        if isinstance(e, S.AssignExpr):
            return self.type_of(e.target)
        return self.lvalue(e)[1]

    # -- conditions

    def cond(self, e: S.Expr):
        if isinstance(e, S.Binary) and e.op in ("&&", "||"):
            cls = CAnd if e.op == "&&" else COr
            return cls(self.cond(e.left), self.cond(e.right))
        if isinstance(e, S.Unary) and e.op == "!":
            return CNot(self.cond(e.operand))
        if isinstance(e, S.BoolLit):
            return CConst(e.value)
        if isinstance(e, S.IntLit):
            return CConst(e.value != 0)
        if isinstance(e, S.Unknown) or (isinstance(e, S.Call) and e.func == "rand"):
            return COpaque()
        if isinstance(e, S.Binary) and e.op in ("==", "!=", "<", ">", "<=", ">="):
            lt, rt = self.type_of(e.left), self.type_of(e.right)
            ptrish = lambda t: _is_ptr(t) or isinstance(t, (Array, Function))
            if ptrish(lt) or ptrish(rt):
                lv, _, lc = self.rvalue(e.left)
                rv, _, rc = self.rvalue(e.right)
                if lv is None or rv is None:
                    return COpaque(tuple(lc + rc))
                text = self.text(e)
                op = e.op
                if op == "==":
                    return CAtom(CompareOp.EQ, lv, rv, tuple(lc + rc), text)
                if op == "!=":
                    return CAtom(CompareOp.NEQ, lv, rv, tuple(lc + rc), text)
                if op == "<":
                    return CAtom(CompareOp.LESS, lv, rv, tuple(lc + rc), text)
                if op == ">":
                    return CAtom(CompareOp.LESS, rv, lv, tuple(lc + rc), text)
                if op == ">=":
                    return CAtom(CompareOp.NOT_LESS, lv, rv, tuple(lc + rc), text)
                return CAtom(CompareOp.NOT_LESS, rv, lv, tuple(lc + rc), text)
            _, ck = self.int_value(e)
            return COpaque(tuple(ck))
        t = self.type_of(e)
        if _is_ptr(t) or isinstance(t, Array):
            v, _, ck = self.rvalue(e)
            if v is None:
                return COpaque(tuple(ck))
            return CAtom(CompareOp.NEQ, v, SLoc(NULL), tuple(ck), self.text(e))
        _, ck = self.int_value(e)
        return COpaque(tuple(ck))

    # -- statements

    def lower(self) -> FunctionCfg:
        fn = self.fn
        self.cur = self.node(fn.line)
        self.cfg.entry = self.cur
        self.cfg.visible.add(self.cur)
        params: dict = {}
        self.scopes.append(params)
        if self.cfg.is_main:
            for pname, ptype in fn.params:
                self.emit(NewVar(pname, ptype), fn.line)
                self.declare(fn, pname, Binding("local", ptype, 0))
            for g in self.prog.global_inits:
                self.assign_to(lambda g=g: self.lvalue(S.Name(g.name, pos=g.pos, end=g.pos)), g.init, g)
        else:
            for pname, ptype in fn.params:
                self.declare(fn, pname, Binding("param", ptype, -1))
            if fn.ret != S.VOID:
                params[RET] = Binding("ret", fn.ret, -1)
        self.scopes.append({})
        self.body_end = self.node(fn.body.end[0])
        self.snapshot(self.cfg.entry)
        self.anchor("entry", fn.body)
        for item in fn.body.items:
            self.stmt(item)
        self.jump(self.body_end)
        self.cur = self.body_end
        if not self.cfg.is_main:
            self.emit(UnmarkOp(), fn.body.end[0])
            self.emit(MarkOp(), fn.body.end[0])
        self.cfg.exit = self.cur
        self.cfg.visible.add(self.cur)
        self.snapshot(self.cur)
        return self.cfg

    def dead(self, line: int) -> None:
        self.cur = self.node(line)

    def unmarks_to(self, depth: int, line: int) -> None:
        for _ in range(self.depth - depth):
            self.emit(UnmarkOp(), line)

    def block(self, b: S.Block) -> None:
        self.emit(MarkOp(), b.line)
        self.depth += 1
        self.scopes.append({})
        self.anchor("entry", b)
        for item in b.items:
            self.stmt(item)
        self.scopes.pop()
        self.depth -= 1
        self.emit(UnmarkOp(), b.end[0])

    def stmt(self, s) -> None:
        self.stmt_inner(s)
        self.anchor("after", s)

    def stmt_inner(self, s) -> None:
        line = s.line
        if isinstance(s, S.Block):
            self.block(s)
        elif isinstance(s, S.Empty):
            pass
        elif isinstance(s, S.DeclStmt):
            for d in s.decls:
                if isinstance(d.ctype, Scalar) and d.ctype.name == "void":
                    self.err(d, "variable of type void")
                self.emit(NewVar(d.name, d.ctype), d.line)
                self.declare(d, d.name, Binding("local", d.ctype, self.depth))
                if d.init is not None:
                    self.assign_to(lambda d=d: self.lvalue(S.Name(d.name, pos=d.pos, end=d.pos)), d.init, d)
        elif isinstance(s, S.ExprStmt):
            self.expr_stmt(s.expr)
        elif isinstance(s, S.If):
            c = self.cond(s.cond)
            start = self.cur
            join = self.node(line)
            for branch, body in ((True, s.then), (False, s.orelse)):
                self.cur = start
                self.emit(FilterOp(c, branch), line)
                if body is not None:
                    self.stmt_body(body)
                self.jump(join)
            self.cur = join
        elif isinstance(s, S.While):
            c = self.cond(s.cond)
            head = self.emit(Nop(), line)
            exit_ = self.node(line)
            self.cfg.edges.append(Edge(head, exit_, FilterOp(c, False)))
            self.emit(FilterOp(c, True), line)
            self.loops.append((head, exit_, self.depth))
            self.stmt_body(s.body)
            self.loops.pop()
            self.jump(head)
            self.cur = exit_
        elif isinstance(s, (S.Break, S.Continue)):
            if not self.loops:
                self.err(s, f"{'break' if isinstance(s, S.Break) else 'continue'} outside a loop")
            head, exit_, depth = self.loops[-1]
            self.unmarks_to(depth, line)
            self.jump(exit_ if isinstance(s, S.Break) else head)
            self.dead(line)
        elif isinstance(s, S.Return):
            self.ret(s)
        else:
            self.err(s, f"unsupported statement {type(s).__name__}", unsupported=True)

    def stmt_body(self, body) -> None:
        """Branch or loop body: blocks get their own frame, single statements do not."""
        if isinstance(body, S.Block):
            self.block(body)
        else:
            self.stmt_inner(body)

    def ret(self, s: S.Return) -> None:
        fn = self.fn
        if s.value is not None:
            if fn.ret == S.VOID:
                self.err(s, "return with a value in a void function")
            if not self.cfg.is_main:
                b = Binding("ret", fn.ret, -1)
                self.assign_to(lambda: (SLoc(self.var_prefix(RET, b) + (0,)), fn.ret, []), s.value, s)
            else:
                self.eval_only(s.value)
        self.unmarks_to(0, s.line)
        self.jump(self.body_end)
        self.dead(s.line)

    # -- assignments and calls

    def write_check(self, sym: SymExpr, node: S.Node) -> list:
        return [] if isinstance(sym, SLoc) else [Check(sym, "write", self.text(node))]

    def assign_to(self, target: Callable[[], tuple], value: S.Expr, node: S.Node, dest_node: S.Node | None = None) -> None:
        """Lower ``<target> = value``; ``target`` is resolved after the value is computed."""
        if isinstance(value, S.Call) and value.func not in ("rand",):
            self.call(value, target, dest_node or node)
            return
        L, t, lck = target()
        if isinstance(t, (Array, Record)):
            self.err(node, "aggregate assignment is not supported", unsupported=True)
        wck = self.write_check(L, dest_node or node)
        if _is_ptr(t):
            R, _, rck = self.rvalue(value)
            if R is None:
                self.emit(StmtOp(tuple(rck + lck + wck)), node.line)
            else:
                self.emit(StmtOp(tuple(rck + lck + wck), L, R), node.line)
        else:
            if _is_ptr(self.type_of(value)):
                self.err(node, "pointer assigned to a non-pointer", unsupported=True)
            _, rck = self.int_value(value)
            self.emit(StmtOp(tuple(rck + lck + wck)), node.line)

    def eval_only(self, e: S.Expr) -> None:
        if isinstance(e, S.Call):
            self.call(e, None, e)
            return
        t = self.type_of(e)
        if _is_ptr(t) or isinstance(t, (Array, Function)):
            _, _, ck = self.rvalue(e)
        elif isinstance(t, Record):
            _, _, ck = self.lvalue(e)
        else:
            _, ck = self.int_value(e)
        if ck:
            self.emit(StmtOp(tuple(ck)), e.line)

    def expr_stmt(self, e: S.Expr) -> None:
        if isinstance(e, S.AssignExpr):
            if isinstance(e.target, S.Unknown):
                if e.op != "=":
                    self.err(e, "compound assignment to '...'")
                self.eval_only(e.value)
                return
            if e.op == "=":
                self.assign_to(lambda: self.lvalue(e.target), e.value, e, e.target)
                return
            delta = e.value if e.op == "+=" else S.Unary("-", e.value, pos=e.value.pos, end=e.value.end)
            self.increment(e.target, delta, e)
            return
        if isinstance(e, (S.Postfix, S.Unary)) and e.op in ("++", "--"):
            one = S.IntLit(1 if e.op == "++" else -1, pos=e.pos, end=e.end)
            self.increment(e.operand, one, e)
            return
        self.eval_only(e)

    def increment(self, target: S.Expr, delta: S.Expr, node: S.Node) -> None:
        L, t, lck = self.lvalue(target)
        wck = self.write_check(L, target)
        if _is_ptr(t):
            offs, dck = self.int_value(delta)
            cur = SDeref(L)
            R = SAdd(cur, t.target, offs)
            self.emit(StmtOp(tuple(lck + dck + [Check(R, "value", self.text(node))] + wck), L, R), node.line)
        elif _is_int(t):
            _, dck = self.int_value(delta)
            rck = [] if isinstance(L, SLoc) else [Check(L, "read", self.text(target))]
            self.emit(StmtOp(tuple(lck + dck + rck + wck)), node.line)
        else:
            self.err(node, "increment of a non-scalar", unsupported=True)

    def call(self, c: S.Call, target: Optional[Callable[[], tuple]], node: S.Node) -> None:
        if c.func == "malloc":
            self.malloc(c, target, node)
            return
        if c.func == "free":
            if len(c.args) != 1:
                self.err(c, "free takes one argument")
            self.free(c)
            return
        if c.func == "rand":
            if target is not None:
                self.assign_to(target, S.Unknown(pos=c.pos, end=c.end), node)
            return
        fn = self.prog.functions.get(c.func)
        if fn is None:
            self.err(c, f"call to undeclared function {c.func!r}")
        if len(c.args) != len(fn.params):
            self.err(c, f"{c.func} expects {len(fn.params)} arguments, got {len(c.args)}")
        if target is not None and fn.ret == S.VOID:
            self.err(c, f"{c.func} returns void")
        if fn.body is None:
            # no body to analyze: arguments are evaluated, the result is unknown
            for a in c.args:
                self.eval_only(a)
            if target is not None:
                self.assign_to(target, S.Unknown(pos=c.pos, end=c.end), node)
            return
        line = c.line
        self.emit(MarkOp(), line)
        self.depth += 1
        if fn.ret != S.VOID:
            self.emit(NewVar(RET, fn.ret), line)
        for pname, ptype in fn.params:
            self.emit(NewVar(pname, ptype), line)
        for (pname, ptype), arg in zip(fn.params, c.args):
            if isinstance(ptype, (Record, Array)):
                self.err(arg, "aggregate parameters are not supported", unsupported=True)
            slot = lambda pname=pname, ptype=ptype: (SLoc(("top", pname, 0)), ptype, [])
            if isinstance(arg, S.Call):
                self.err(arg, "calls as arguments are not supported", unsupported=True)
            self.assign_to(slot, arg, arg)
        self.emit(MarkOp(), line)
        self.depth += 1
        self.emit(CallOp(self.prog.call_site(self.fn.name, c), c.func), line)
        self.emit(UnmarkOp(), line)
        self.depth -= 1
        if target is not None:
            ret = lambda: (SLoc(("top", RET, 0)), fn.ret, [])
            self.assign_from(target, ret, node)
        self.emit(UnmarkOp(), line)
        self.depth -= 1

    def assign_from(self, target: Callable[[], tuple], source: Callable[[], tuple], node: S.Node) -> None:
        L, t, lck = target()
        R0, st, _ = source()
        wck = self.write_check(L, node)
        if _is_ptr(t):
            if not (_is_ptr(st) or st == NULL_PTR):
                self.err(node, "non-pointer result assigned to a pointer")
            self.emit(StmtOp(tuple(lck + wck), L, SDeref(R0)), node.line)
        else:
            self.emit(StmtOp(tuple(lck + wck)), node.line)

    def malloc(self, c: S.Call, target, node: S.Node) -> None:
        if target is None:
            return
        L, t, lck = target()
        if not _is_ptr(t):
            self.err(c, "malloc result must be stored in a pointer")
        elem = t.target
        if isinstance(elem, RecordRef):
            elem = self.record(elem, c)
        if len(c.args) != 1:
            self.err(c, "malloc takes one argument")
        ctype = _heap_type(elem, c.args[0])
        site = self.prog.heap_site(c, ctype)
        wck = self.write_check(L, node)
        self.emit(StmtOp(tuple(lck + wck), L, SLoc(("heap", site, 0))), c.line)

    def free(self, c: S.Call) -> None:
        arg = c.args[0]
        R, t, rck = self.rvalue(arg)
        if not (isinstance(arg, (S.Name, S.Unary, S.Index, S.Member)) and _is_ptr(t)):
            self.err(c, "free needs a pointer variable", unsupported=True)
        L, _, lck = self.lvalue(arg)
        # the freed pointer now dangles
        self.emit(StmtOp(tuple(rck + lck), L, SLoc(("special", "undef"))), c.line)


def _heap_type(elem: CType, size: S.Expr) -> CType:
    """``sizeof(T)`` gives one T, ``n * sizeof(T)`` an array of n (or unknown)."""
    if isinstance(size, S.SizeOf):
        return elem
    if isinstance(size, S.Binary) and size.op == "*":
        a, b = size.left, size.right
        if isinstance(a, S.SizeOf):
            a, b = b, a
        if isinstance(b, S.SizeOf):
            n = a.value if isinstance(a, S.IntLit) else None
            if n is not None and n < 1:
                n = None
            return Array(elem, n)
    return Array(elem, None)


class _ProgramLowerer:
    def __init__(self, prog: S.Program):
        self.ast = prog
        self.source = prog.source
        self.records = prog.records
        self.functions = prog.functions
        self.anchors: list = []
        self.heap: dict = {}
        self.sites: set = set()
        self.global_bindings = {g.name: Binding("global", g.ctype) for g in prog.globals}
        self.global_inits = [g for g in prog.globals if g.init is not None]

    def call_site(self, caller: str, c: S.Call) -> str:
        name = f"{caller}@{c.line}"
        if name in self.sites:
            name = f"{caller}@{c.line}:{c.pos[1]}"
        self.sites.add(name)
        return name

    def heap_site(self, c: S.Call, ctype: CType) -> str:
        name = f"pp{c.line}"
        if name in self.heap:
            name = f"pp{c.line}_{c.pos[1]}"
        self.heap[name] = HeapSite(name, ctype, c.line)
        return name

    def lower(self) -> LoweredProgram:
        seen = set()
        for g in self.ast.globals:
            if g.name in seen:
                raise LoweringError(g.line, f"global {g.name!r} redeclared")
            if g.name in self.functions:
                raise LoweringError(g.line, f"{g.name!r} is both a variable and a function")
            seen.add(g.name)
        fns = {}
        order = []
        for name, fn in self.functions.items():
            if fn.body is None:
                continue
            fns[name] = _FunctionLowerer(self, fn).lower()
            order.append(name)
        if "main" not in fns and self.global_inits:
            raise LoweringError(self.global_inits[0].line, "global initializers need a main function")
        return LoweredProgram(
            functions=fns,
            order=order,
            text=list(self.functions),
            globals=[(g.name, g.ctype) for g in self.ast.globals],
            heap=list(self.heap.values()),
            records=self.records,
            source=self.source,
            anchors=self.anchors,
        )


def lower(program: S.Program) -> LoweredProgram:
    return _ProgramLowerer(program).lower()
