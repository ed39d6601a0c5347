"""Fixed-format MPS writer."""

from __future__ import annotations

import math

from .model import EQ, GE, LE, ModelIR

_ROW_TYPE = {LE: "L", GE: "G", EQ: "E"}
OBJ_ROW = "obj"


def _num(v: float) -> str:
    # shortest round-trip repr; '-0' and '.0' trimmed for compactness
    if v == 0:
        return "0"
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def _line(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    # fixed-format fields start at columns 2, 5, 15, 25, 40 and 50
    out = " " + f1.ljust(2) + " " + f2.ljust(8)
    if f3 or f4:
        out += "  " + f3.ljust(8) + "  " + f4.rjust(12)
    if f5 or f6:
        out += "   " + f5.ljust(8) + "  " + f6.rjust(12)
    return out.rstrip()


def export_mps(model: ModelIR) -> str:
    """Serialize ``model`` as MPS text.

    Columns are named ``x<id>`` and rows ``c<id>``; the objective row is
    ``obj`` and carries the negated objective constant in RHS, as CPLEX,
    Gurobi and HiGHS expect. Output depends only on model content, so two
    builds of the same model give byte-identical files.
    """
    model.validate()
    lines = [f"NAME          {model.name}", "ROWS", _line("N", OBJ_ROW)]
    for con in model.constraints:
        lines.append(_line(_ROW_TYPE[con.sense], f"c{con.id}"))

    columns: list[list[tuple[str, float]]] = [[] for _ in model.variables]
    for vid, a in sorted(model.objective.items()):
        if a != 0.0:
            columns[vid].append((OBJ_ROW, a))
    for con in model.constraints:
        for vid, a in sorted(con.coefs.items()):
            columns[vid].append((f"c{con.id}", a))

    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for v in model.variables:
        if v.integer != in_int:
            tag = "'INTORG'" if v.integer else "'INTEND'"
            lines.append(_line("", f"MARKER{marker:02d}"[:8], "'MARKER'", tag))
            marker += 1
            in_int = v.integer
        entries = columns[v.id] or [(OBJ_ROW, 0.0)]
        name = f"x{v.id}"
        for i in range(0, len(entries), 2):
            chunk = entries[i:i + 2]
            if len(chunk) == 2:
                lines.append(_line("", name, chunk[0][0], _num(chunk[0][1]),
                                   chunk[1][0], _num(chunk[1][1])))
            else:
                lines.append(_line("", name, chunk[0][0], _num(chunk[0][1])))
    if in_int:
        lines.append(_line("", f"MARKER{marker:02d}"[:8], "'MARKER'", "'INTEND'"))

    lines.append("RHS")
    if model.obj_constant != 0.0:
        lines.append(_line("", "RHS", OBJ_ROW, _num(-model.obj_constant)))
    for con in model.constraints:
        if con.rhs != 0.0:
            lines.append(_line("", "RHS", f"c{con.id}", _num(con.rhs)))

    lines.append("BOUNDS")
    for v in model.variables:
        name = f"x{v.id}"
        if v.binary:
            lines.append(_line("BV", "BND", name))
        elif v.lb == v.ub:
            lines.append(_line("FX", "BND", name, _num(v.lb)))
        elif v.lb == -math.inf and v.ub == math.inf:
            lines.append(_line("FR", "BND", name))
        else:
            if v.lb == -math.inf:
                lines.append(_line("MI", "BND", name))
            elif v.lb != 0.0 or v.integer:
                lines.append(_line("LO", "BND", name, _num(v.lb)))
            if v.ub != math.inf:
                lines.append(_line("UP", "BND", name, _num(v.ub)))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
