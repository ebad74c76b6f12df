from pathlib import Path

import pytest

from pointsto.frontend import syntax as S
from pointsto.frontend.analyzer import AnalysisConfig, Analyzer, OffByOnePolicy, analyze, memory_rows
from pointsto.frontend.cfg import CallOp
from pointsto.frontend.lower import lower
from pointsto.frontend.report import render_json, render_text
from pointsto.memory import describe_frame, mem_leq

CORPUS = Path(__file__).parent / "corpus"
FILES = sorted(CORPUS.glob("*.mc"))


def run(src, **kw):
    return analyze(lower(S.parse(src)), AnalysisConfig(**kw))


def final_rows(result, fn="main"):
    exits = [p for p in result.points if p.function == fn and p.node == result.program.functions[fn].exit]
    assert len(exits) == 1
    return dict(memory_rows(exits[0].memory) or ())


# ---------------------------------------------------------------- invariants


@pytest.mark.parametrize("path", FILES, ids=lambda p: p.stem)
def test_fixpoint_is_post_fixpoint(path):
    an = Analyzer(lower(S.parse(path.read_text())))
    an.run()
    for (fn, ctx, node), mem in an.states.items():
        for edge in an.succ[fn][node]:
            if isinstance(edge.op, CallOp):
                callee = an.prog.functions[edge.op.callee]
                cctx = an._callee_ctx(ctx, edge.op.call_site)
                target = an.states[(callee.name, cctx, callee.entry)]
                assert mem_leq(an._enter(mem, ctx, edge.op), target)
                exit_mem = an.states.get((callee.name, cctx, callee.exit))
                if exit_mem is not None:
                    assert mem_leq(an._leave(exit_mem, ctx), an.states[(fn, ctx, edge.dst)])
                continue
            out = an.transfer.apply(edge.op, mem)
            if out.is_bottom:
                continue
            assert mem_leq(out, an.states[(fn, ctx, edge.dst)]), (fn, ctx, node, edge)


@pytest.mark.parametrize("path", FILES, ids=lambda p: p.stem)
def test_reports_are_deterministic(path):
    src = path.read_text()
    a, b = run(src), run(src)
    assert render_json(a) == render_json(b)
    assert render_text(a) == render_text(b)


def test_program_without_main():
    res = run("int *p;")
    assert len(res.points) == 1 and res.points[0].id == "<program>:0"
    assert res.diagnostics == []
    assert dict(memory_rows(res.points[0].memory)) == {"global.p": ["special.null"]}


def test_empty_main_has_entry_and_exit():
    res = run("int main() {}")
    assert [p.function for p in res.points] == ["main", "main"]
    assert res.diagnostics == []


# ---------------------------------------------------------------- behaviour


def test_strong_update_on_scalar_weak_on_array():
    res = run("int x, y, *p, *a[4];\nint main() { p = &x; p = &y; a[...] = &x; a[...] = &y; }")
    rows = final_rows(res)
    assert rows["global.p"] == ["global.y"]
    assert rows["global.a.Tail"] == ["global.x", "global.y", "special.null"]


def test_heap_allocation_and_free():
    src = "int main() {\n  int **h;\n  h = malloc(sizeof(int*));\n  free(h);\n}"
    res = run(src)
    rows = final_rows(res)
    assert rows["top.h"] == ["special.undef"]
    assert rows["heap.pp3"] == ["special.undef"]


def test_recursion_terminates():
    src = """int a, b, *g;
void r(int *p) {
  if (...) { g = p; r(&b); }
}
int main() { r(&a); }
"""
    res = run(src)
    assert set(final_rows(res)["global.g"]) == {"global.a", "global.b", "special.null"}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_context_depth_keeps_results_sound(k):
    src = """int a, b, *x, *y;
int *id(int *p) { return p; }
int main() {
  x = id(&a);
  y = id(&b);
}
"""
    rows = final_rows(run(src, k=k))
    assert rows["global.x"] == ["global.a"]
    assert rows["global.y"] == ["global.b"]


def test_off_by_one_policies():
    src = (CORPUS / "loop_tail_tail.mc").read_text()
    kinds = {p: [d.kind for d in run(src, deref_offbyone=p).diagnostics] for p in OffByOnePolicy}
    assert kinds[OffByOnePolicy.ERROR] == ["OffByOneDeref"]
    assert kinds[OffByOnePolicy.WARN] == ["OffByOneDeref", "ArrayOverflow"]
    assert kinds[OffByOnePolicy.ALLOW] == ["ArrayOverflow"]


def test_short_circuit_guard_avoids_spurious_null_deref():
    src = """struct S { int *f; } s;
struct S *p;
int main() {
  int *q;
  if (p != 0 && p->f != 0) { q = p->f; }
}
"""
    assert run(src).diagnostics == []


def test_frame_shape_identified_by_call_site():
    res = run((CORPUS / "frame_shape.mc").read_text())
    entry = res.program.functions["g"].entry
    shapes = {}
    for p in res.points:
        if p.function == "g" and p.node == entry:
            shapes[p.context] = [describe_frame(f) for f in p.memory.head]
    assert shapes == {
        ("f@8",): ["[[int p], [int a, int b], [int c]]"],
        ("f@12",): ["[[int p], [int a, int b], [int d, int e]]"],
    }
