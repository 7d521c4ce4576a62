"""Plain-text serialization of operator sets.

Layout::

    fsbp v1 N=<n> space=<tag> element=<xl>,<xr>
    nodes
    <n values>
    P
    <n rows>
    ...

Sections ``nodes``, ``P``, ``Q``, ``D1``, ``D2``, ``S`` follow the header in
that order; every number is written with 17 significant digits so that a
round trip is lossless in double precision.
"""

from __future__ import annotations

import re

import numpy as np

from .operators import FsbpOperatorSet

SECTIONS = ("nodes", "P", "Q", "D1", "D2", "S")
_HEADER = re.compile(r"^fsbp\s+v1\s+N=(\d+)\s+space=(\S+)(?:\s+element=(\S+),(\S+))?\s*$")


class OperatorFileError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def dumps(ops: FsbpOperatorSet) -> str:
    if ops.D2 is None:
        raise ValueError("operator set has no D2")
    xl, xr = ops.element
    lines = [f"fsbp v1 N={ops.n} space={ops.tag} element={_fmt(xl)},{_fmt(xr)}"]
    for name in SECTIONS:
        lines.append(name)
        arr = np.atleast_2d(getattr(ops, name))
        for row in arr:
            lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write(ops: FsbpOperatorSet, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(ops))


def loads(text: str) -> FsbpOperatorSet:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise OperatorFileError("empty operator file")
    m = _HEADER.match(lines[0])
    if not m:
        raise OperatorFileError(f"bad header line: {lines[0]!r}")
    n = int(m.group(1))
    tag = m.group(2)
    element = (-1.0, 1.0) if m.group(3) is None else (float(m.group(3)), float(m.group(4)))

    data = {}
    pos = 1
    for name in SECTIONS:
        if pos >= len(lines) or lines[pos] != name:
            found = lines[pos] if pos < len(lines) else "end of file"
            raise OperatorFileError(f"expected section {name!r}, found {found!r}")
        nrows = 1 if name == "nodes" else n
        rows = lines[pos + 1: pos + 1 + nrows]
        if len(rows) != nrows:
            raise OperatorFileError(f"section {name!r} truncated")
        try:
            arr = np.array([[float(v) for v in r.split()] for r in rows])
        except ValueError as exc:
            raise OperatorFileError(f"section {name!r}: {exc}") from None
        if arr.shape != (nrows, n):
            raise OperatorFileError(f"section {name!r} has shape {arr.shape}, expected ({nrows}, {n})")
        data[name] = arr[0] if name == "nodes" else arr
        pos += 1 + nrows
    if pos != len(lines):
        raise OperatorFileError(f"trailing content after section 'S': {lines[pos]!r}")
    return FsbpOperatorSet(nodes=data["nodes"], P=data["P"], Q=data["Q"], D1=data["D1"],
                           S=data["S"], D2=data["D2"], element=element, tag=tag)


def read(path) -> FsbpOperatorSet:
    with open(path) as fh:
        return loads(fh.read())
