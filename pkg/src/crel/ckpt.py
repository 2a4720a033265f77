"""Text-based checkpoint blocks shared by the model modules.

A checkpoint is a one-line header followed by named matrix blocks:

    <name> <rows> <cols>
    <row 0 floats, space separated>
    ...

Floats are written with shortest round-trip repr, so save -> load -> save
is byte-stable at float64.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def parse_header(line: str, expected_tag: str) -> dict[str, str]:
    parts = line.split()
    if not parts or parts[0] != expected_tag:
        raise ValueError(f"expected {expected_tag!r} header, got {line!r}")
    fields = {}
    for p in parts[1:]:
        key, _, value = p.partition("=")
        fields[key] = value
    return fields


def format_header(tag: str, **fields) -> str:
    return " ".join([tag] + [f"{k}={v}" for k, v in fields.items()])


def write_matrix(out: list[str], name: str, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    out.append(f"{name} {a.shape[0]} {a.shape[1]}")
    for row in a:
        out.append(" ".join(repr(float(v)) for v in row))


def read_matrix(lines: list[str], pos: int, name: str) -> tuple[np.ndarray, int]:
    parts = lines[pos].split()
    if len(parts) != 3 or parts[0] != name:
        raise ValueError(f"expected block {name!r} at line {pos + 1}, "
                         f"got {lines[pos]!r}")
    rows, cols = int(parts[1]), int(parts[2])
    data = np.empty((rows, cols), dtype=np.float64)
    for r in range(rows):
        vals = lines[pos + 1 + r].split()
        if len(vals) != cols:
            raise ValueError(f"block {name!r} row {r} has {len(vals)} values, "
                             f"expected {cols}")
        data[r] = [float(v) for v in vals]
    return data, pos + 1 + rows


def read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def write_lines(path: str | Path, lines: list[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
