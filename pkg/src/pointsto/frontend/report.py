"""Text and JSON renderings of an analysis result."""

from __future__ import annotations

import json

from .analyzer import AnalysisResult, memory_rows


def to_json(result: AnalysisResult) -> dict:
    points = []
    for p in result.points:
        mem = memory_rows(p.memory)
        points.append(
            {
                "id": p.id,
                "line": p.line,
                "memory": None if mem is None else [{"source": s, "targets": ts} for s, ts in mem],
            }
        )
    return {
        "program_points": points,
        "diagnostics": [d.to_dict() for d in result.diagnostics],
        "stats": {"iterations": result.iterations},
    }


def render_json(result: AnalysisResult) -> str:
    return json.dumps(to_json(result), indent=2) + "\n"


def render_text(result: AnalysisResult) -> str:
    out = []
    for p in result.points:
        out.append(f"[{p.id}] line {p.line}")
        mem = memory_rows(p.memory)
        if mem is None:
            out.append("  unreachable")
        for src, ts in mem or ():
            out.append(f"  {src} -> {{{', '.join(ts)}}}")
    out.append(f"diagnostics: {len(result.diagnostics)}")
    for d in result.diagnostics:
        out.append(f"  line {d.line}: {d.kind}: {d.expr}")
    out.append(f"iterations: {result.iterations}")
    return "\n".join(out) + "\n"


def render(result: AnalysisResult, fmt: str = "text") -> str:
    if fmt == "json":
        return render_json(result)
    if fmt == "text":
        return render_text(result)
    raise ValueError(f"unknown report format {fmt!r}")
