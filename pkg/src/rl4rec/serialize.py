"""Versioned text matrix files.

Layout (UTF-8, ``\\n`` line ends)::

    RL4REC-MATRIX 1
    <name> <rows> <cols>
    <row 0: cols values separated by single spaces>
    ...
    <name> <rows> <cols>
    ...

Values are written with ``repr`` so floats round-trip exactly. Vectors are
stored as 1 x n blocks, scalars as 1 x 1. Names contain no whitespace.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ParseError, ValidationError

MAGIC = "RL4REC-MATRIX"
VERSION = 1


def write_matrices(path, blocks: Mapping[str, np.ndarray]):
    lines = [f"{MAGIC} {VERSION}"]
    for name, arr in blocks.items():
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim > 2:
            a = a.reshape(a.shape[0], -1)
        a = np.atleast_2d(a)
        if any(c.isspace() for c in name) or not name:
            raise ValidationError(f"bad block name {name!r}")
        lines.append(f"{name} {a.shape[0]} {a.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in a)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrices(path) -> dict[str, np.ndarray]:
    text = Path(path).read_text().split("\n")
    if not text or text[0].split() != [MAGIC, str(VERSION)]:
        raise ParseError(f"{path}: not a {MAGIC} v{VERSION} file")
    out: dict[str, np.ndarray] = {}
    k = 1
    while k < len(text) and text[k].strip():
        head = text[k].split()
        if len(head) != 3:
            raise ParseError(f"{path}:{k + 1}: bad block header {text[k]!r}")
        try:
            name, rows, cols = head[0], int(head[1]), int(head[2])
        except ValueError:
            raise ParseError(f"{path}:{k + 1}: bad block header {text[k]!r}") from None
        try:
            vals = [[float(x) for x in text[k + 1 + r].split()] for r in range(rows)]
            if any(len(v) != cols for v in vals):
                raise ValueError
        except (IndexError, ValueError):
            raise ParseError(f"{path}:{k + 1}: block {name!r} is truncated or malformed") from None
        arr = np.array(vals, dtype=np.float64).reshape(rows, cols)
        out[name] = arr
        k += 1 + rows
    return out
