"""Cellular-automaton edge detector.

A pixel's response is the summed absolute intensity difference ``phi`` to the
neighbours selected by a linear rule number, damped as ``phi / (delta + phi)``
and compared against ``tau``. Rule numbers are sums of per-cell powers of two;
which cell owns which bit is given by a cell table that can be swapped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .image_core import InvalidInputError, as_gray, pad_zero

__all__ = [
    "RADII",
    "DEFAULT_CELL_TABLE",
    "RuleMask",
    "DetectorParams",
    "max_rule",
    "decode_rule",
    "encode_rule",
    "load_cell_table",
    "dump_cell_table",
    "phi",
    "mu",
    "neighbor_differences",
    "detect_edges",
    "phi_map",
    "detect_from_differences",
    "decode_particle",
]

RADII = (1, 2)

Offset = tuple[int, int]


def _ring(radius: int) -> list[Offset]:
    """Cells at Chebyshev distance ``radius``, clockwise from due east (rows grow downward)."""
    cells = [(dy, radius) for dy in range(0, radius + 1)]
    cells += [(radius, dx) for dx in range(radius - 1, -radius - 1, -1)]
    cells += [(dy, -radius) for dy in range(radius - 1, -radius - 1, -1)]
    cells += [(-radius, dx) for dx in range(-radius + 1, radius + 1)]
    cells += [(dy, radius) for dy in range(-radius + 1, 0)]
    return cells


def _default_table(radius: int) -> tuple[Offset, ...]:
    cells = [(0, 0)]
    for ring in range(1, radius + 1):
        cells += _ring(ring)
    return tuple(cells)


# bit index -> (dy, dx)
DEFAULT_CELL_TABLE: dict[int, tuple[Offset, ...]] = {r: _default_table(r) for r in RADII}


def _check_radius(r: int) -> None:
    if r not in RADII:
        raise InvalidInputError(f"unsupported radius {r}; expected one of {RADII}")


def _table(r: int, table: Mapping[int, Sequence[Offset]] | None) -> Sequence[Offset]:
    _check_radius(r)
    cells = (table or DEFAULT_CELL_TABLE)[r]
    if len(cells) != (2 * r + 1) ** 2:
        raise InvalidInputError(f"cell table for r={r} must list {(2 * r + 1) ** 2} cells")
    return cells


def max_rule(r: int) -> int:
    _check_radius(r)
    return 2 ** ((2 * r + 1) ** 2) - 1


@dataclass(frozen=True)
class RuleMask:
    radius: int
    rule: int
    offsets: tuple[Offset, ...]
    bits: tuple[int, ...]


@dataclass(frozen=True)
class DetectorParams:
    delta: int
    tau: float
    mask: RuleMask

    def __post_init__(self):
        if not 0 <= self.delta <= 255:
            raise InvalidInputError(f"delta {self.delta} outside [0, 255]")
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidInputError(f"tau {self.tau} outside [0, 1]")

    @property
    def radius(self) -> int:
        return self.mask.radius

    @property
    def rule(self) -> int:
        return self.mask.rule

    @classmethod
    def from_triple(cls, delta: int, tau: float, rule: int, r: int, table=None) -> "DetectorParams":
        return cls(int(delta), float(tau), decode_rule(int(rule), r, table))

    def as_dict(self) -> dict:
        return {"delta": self.delta, "tau": self.tau, "rule": self.rule, "radius": self.radius}


def decode_rule(z: int, r: int, table=None) -> RuleMask:
    cells = _table(r, table)
    if not 0 <= z <= max_rule(r):
        raise InvalidInputError(f"rule {z} outside [0, {max_rule(r)}] for r={r}")
    bits = tuple(b for b in range(len(cells)) if (z >> b) & 1)
    return RuleMask(r, z, tuple(tuple(cells[b]) for b in bits), bits)


def encode_rule(offsets, r: int, table=None) -> int:
    """Inverse of :func:`decode_rule` on the offset set."""
    index = {tuple(c): b for b, c in enumerate(_table(r, table))}
    z = 0
    for off in offsets:
        try:
            z |= 1 << index[tuple(off)]
        except KeyError:
            raise InvalidInputError(f"offset {off} is not in the r={r} neighbourhood") from None
    return z


def load_cell_table(path) -> dict[int, tuple[Offset, ...]]:
    """Read ``{"1": [[bit, dy, dx], ...], "2": [...]}``; radii left out keep the default."""
    raw = json.loads(Path(path).read_text())
    table = dict(DEFAULT_CELL_TABLE)
    for key, rows in raw.items():
        r = int(key)
        _check_radius(r)
        n = (2 * r + 1) ** 2
        cells: list[Offset | None] = [None] * n
        for bit, dy, dx in rows:
            if not 0 <= bit < n or max(abs(dy), abs(dx)) > r:
                raise InvalidInputError(f"bad cell table row {(bit, dy, dx)} for r={r}")
            cells[bit] = (int(dy), int(dx))
        if None in cells or len(set(cells)) != n:
            raise InvalidInputError(f"cell table for r={r} is not a bijection")
        table[r] = tuple(cells)
    return table


def dump_cell_table(table=None) -> str:
    table = table or DEFAULT_CELL_TABLE
    return json.dumps(
        {str(r): [[b, dy, dx] for b, (dy, dx) in enumerate(cells)] for r, cells in table.items()}
    )


def phi(padded: np.ndarray, i: int, j: int, mask: RuleMask) -> int:
    """Summed absolute difference between ``padded[i, j]`` and its masked neighbours."""
    padded = np.asarray(padded)
    r = mask.radius
    h, w = padded.shape
    if not (r <= i < h - r and r <= j < w - r):
        raise InvalidInputError(f"({i}, {j}) is closer than {r} to the padded border")
    centre = int(padded[i, j])
    return sum(abs(centre - int(padded[i + dy, j + dx])) for dy, dx in mask.offsets)


def mu(phi_value, delta):
    """``phi / (delta + phi)``, taken as 0 when both are 0. Works elementwise on arrays."""
    phi_value = np.asarray(phi_value, dtype=np.float64)
    denom = delta + phi_value
    out = np.divide(phi_value, denom, out=np.zeros_like(phi_value), where=denom != 0)
    return out if out.ndim else float(out)


def neighbor_differences(img: np.ndarray, r: int) -> np.ndarray:
    """``|X - X_shifted|`` for every neighbourhood cell, over the unpadded area.

    Returns a uint8 array of shape ``((2r+1)**2, H, W)`` whose planes follow
    the default cell table order. Summing a subset of planes gives ``phi`` for
    that rule, which lets a swarm reuse the planes across particles.
    """
    cells = _table(r, None)
    x = as_gray(img).astype(np.int16)
    h, w = x.shape
    padded = pad_zero(x, r)
    out = np.empty((len(cells), h, w), dtype=np.uint8)
    for b, (dy, dx) in enumerate(cells):
        shifted = padded[r + dy:r + dy + h, r + dx:r + dx + w]
        out[b] = np.abs(x - shifted)
    return out


_PLANE = {r: {cell: b for b, cell in enumerate(DEFAULT_CELL_TABLE[r])} for r in RADII}


def phi_map(diffs: np.ndarray, mask: RuleMask) -> np.ndarray:
    planes = [_PLANE[mask.radius][off] for off in mask.offsets]
    if not planes:
        return np.zeros(diffs.shape[1:], dtype=np.int64)
    return diffs[planes].sum(axis=0, dtype=np.int64)


def detect_from_differences(diffs: np.ndarray, params: DetectorParams) -> np.ndarray:
    return (mu(phi_map(diffs, params.mask), params.delta) > params.tau).astype(np.uint8)


def detect_edges(img: np.ndarray, params: DetectorParams) -> np.ndarray:
    """Single CA step from a gray image to a binary edge map of the same size."""
    return detect_from_differences(neighbor_differences(img, params.radius), params)


def decode_particle(position, r: int, full_neighborhood: bool = False, table=None) -> DetectorParams:
    """Map a point of ``[0, 1]^3`` to ``(delta, tau, rule)``.

    With ``full_neighborhood`` the rule coordinate is ignored and every cell of
    the radius-``r`` neighbourhood is used.
    """
    x = np.clip(np.asarray(position, dtype=np.float64), 0.0, 1.0)
    zmax = max_rule(r)
    delta = int(min(max(np.floor(x[0] * 255 + 0.5), 0), 255))
    tau = float(x[1])
    z = zmax if full_neighborhood else int(min(max(np.floor(x[2] * zmax + 0.5), 0), zmax))
    return DetectorParams(delta, tau, decode_rule(z, r, table))
