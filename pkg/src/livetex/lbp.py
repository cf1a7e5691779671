"""Circular local binary pattern operators over single-channel planes.

Implements the classic LBP code (test oracle only) and the
rotation-invariant uniform variant used throughout the pipeline: a neighbor
bit is 1 where the interpolated sample is at least as bright as the center,
patterns with at most two circular transitions map to their popcount, and
every other pattern collapses to the single code ``points + 1``.

Sampling details the operator definition leaves open, fixed here:
  * non-integer sample coordinates use bilinear interpolation, evaluated as
    two nested lerps so constant regions reproduce the center value exactly;
  * sample offsets within 1e-9 of the pixel grid are snapped onto it, so
    exact-grid points read the pixel directly instead of a jittered blend;
  * codes are produced only where the full neighborhood is in bounds, which
    shrinks the output by ceil(radius) per side.

The per-pixel kernel dominates extraction time. It runs through numba when
available; set ``LIVETEX_NUMBA=0`` to force the pure-numpy fallback (same
results bit for bit, see benchmarks/bench_lbp.py).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but degrade gracefully
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@dataclass(frozen=True)
class LbpParams:
    """Circular neighborhood: ``points`` samples on a circle of ``radius`` px."""

    points: int
    radius: float

    def __post_init__(self):
        if self.points < 4:
            raise ValueError(f"need at least 4 sample points, got {self.points}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.points < 60 and self.points + 2 > 2 ** self.points:
            raise ValueError("code range P+2 exceeds the 2^P distinct patterns")

    @property
    def margin(self) -> int:
        return int(math.ceil(self.radius))

    @property
    def code_count(self) -> int:
        """Distinct output codes: popcounts 0..P plus the non-uniform bucket."""
        return self.points + 2


@dataclass(frozen=True)
class LbpCodeMap:
    """Per-pixel codes over the valid interior region of a plane."""

    codes: np.ndarray  # (height, width) uint16, values in [0, points+1]
    points: int
    margin: int

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]


def delta(x) -> int:
    """Thresholding step: 1 for x >= 0, else 0 (ties count as bright)."""
    return 1 if x >= 0 else 0


def sample_offsets(params: LbpParams) -> np.ndarray:
    """(dx, dy) offsets of the circular samples, starting north, CCW.

    Point p sits at angle 2*pi*p/points: (dx, dy) = (-R sin, R cos).
    Offsets within 1e-9 of an integer are snapped onto the grid.
    """
    p = np.arange(params.points, dtype=np.float64)
    ang = 2.0 * np.pi * p / params.points
    off = np.stack([-params.radius * np.sin(ang), params.radius * np.cos(ang)], axis=1)
    snapped = np.round(off)
    near = np.abs(off - snapped) < 1e-9
    return np.where(near, snapped, off)


def classic_code(bits) -> int:
    """Plain LBP code: sum of bits[p] * 2**p. Oracle only, not a feature."""
    bits = np.asarray(bits, dtype=np.int64)
    return int((bits << np.arange(bits.size, dtype=np.int64)).sum())


def transitions_u(bits) -> int:
    """Number of 0/1 changes along the circular neighborhood (always even)."""
    bits = np.asarray(bits, dtype=np.int64)
    return int(np.abs(np.diff(bits)).sum() + abs(int(bits[-1]) - int(bits[0])))


def riu2_code(bits) -> int:
    """Rotation-invariant uniform code: popcount if uniform, else P+1."""
    bits = np.asarray(bits, dtype=np.int64)
    if transitions_u(bits) <= 2:
        return int(bits.sum())
    return bits.size + 1


def _interp_tables(params: LbpParams):
    """Per-sample integer corners and lerp weights for bilinear sampling.

    When a weight is exactly 0 the far corner is never read, so it aliases
    the near one; that keeps integer-radius samples inside the margin.
    """
    off = sample_offsets(params)
    dx, dy = off[:, 0], off[:, 1]
    x0 = np.floor(dx).astype(np.int64)
    y0 = np.floor(dy).astype(np.int64)
    tx = dx - x0
    ty = dy - y0
    x1 = np.where(tx == 0.0, x0, x0 + 1)
    y1 = np.where(ty == 0.0, y0, y0 + 1)
    return y0, x0, y1, x1, ty, tx


@njit(cache=True)
def _riu2_codes_jit(g, y0s, x0s, y1s, x1s, tys, txs, margin, out):  # pragma: no cover - numba
    points = y0s.shape[0]
    vh, vw = out.shape
    for i in range(vh):
        cy = i + margin
        for j in range(vw):
            cx = j + margin
            gc = g[cy, cx]
            pop = 0
            trans = 0
            first = 0
            prev = 0
            code = points + 1
            done = False
            for p in range(points):
                g00 = g[cy + y0s[p], cx + x0s[p]]
                g01 = g[cy + y0s[p], cx + x1s[p]]
                g10 = g[cy + y1s[p], cx + x0s[p]]
                g11 = g[cy + y1s[p], cx + x1s[p]]
                a = g00 + txs[p] * (g01 - g00)
                b = g10 + txs[p] * (g11 - g10)
                gp = a + tys[p] * (b - a)
                bit = 1 if gp >= gc else 0
                pop += bit
                if p == 0:
                    first = bit
                else:
                    trans += bit ^ prev
                    if trans > 2:
                        done = True  # non-uniform regardless of remaining bits
                        break
                prev = bit
            if not done:
                trans += first ^ prev
                if trans <= 2:
                    code = pop
            out[i, j] = code
    return out


def _riu2_codes_numpy(g, y0s, x0s, y1s, x1s, tys, txs, margin):
    h, w = g.shape
    centers = g[margin : h - margin, margin : w - margin]
    pop = np.zeros(centers.shape, dtype=np.int64)
    trans = np.zeros(centers.shape, dtype=np.int64)
    first = prev = None
    for p in range(y0s.shape[0]):

        def corner(dy, dx):
            return g[margin + dy : h - margin + dy, margin + dx : w - margin + dx]

        g00 = corner(y0s[p], x0s[p])
        g01 = corner(y0s[p], x1s[p])
        g10 = corner(y1s[p], x0s[p])
        g11 = corner(y1s[p], x1s[p])
        a = g00 + txs[p] * (g01 - g00)
        b = g10 + txs[p] * (g11 - g10)
        gp = a + tys[p] * (b - a)
        bit = (gp >= centers).astype(np.int64)
        pop += bit
        if first is None:
            first = bit
        else:
            trans += bit != prev
        prev = bit
    trans += first != prev
    codes = np.where(trans <= 2, pop, y0s.shape[0] + 1)
    return codes.astype(np.uint16)


def _use_numba() -> bool:
    if not _HAVE_NUMBA:
        return False
    return os.environ.get("LIVETEX_NUMBA", "1").lower() not in ("0", "false", "off")


def apply_riu2(plane: np.ndarray, params: LbpParams, backend: str | None = None) -> LbpCodeMap:
    """Compute the rotation-invariant uniform code of every interior pixel.

    ``plane`` is a (H, W) 8-bit channel; the output shrinks by
    ``params.margin`` per side. ``backend`` forces "numba" or "numpy";
    by default numba is used unless LIVETEX_NUMBA disables it.
    """
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2-d plane, got shape {plane.shape}")
    m = params.margin
    h, w = plane.shape
    if h <= 2 * m or w <= 2 * m:
        raise ValueError(
            f"plane {h}x{w} too small for radius {params.radius} "
            f"(needs more than {2 * m} pixels per axis)"
        )

    g = plane.astype(np.float64)
    y0s, x0s, y1s, x1s, tys, txs = _interp_tables(params)

    if backend is None:
        backend = "numba" if _use_numba() else "numpy"
    if backend == "numba" and _HAVE_NUMBA:
        out = np.empty((h - 2 * m, w - 2 * m), dtype=np.uint16)
        codes = _riu2_codes_jit(g, y0s, x0s, y1s, x1s, tys, txs, m, out)
    elif backend in ("numba", "numpy"):
        codes = _riu2_codes_numpy(g, y0s, x0s, y1s, x1s, tys, txs, m)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return LbpCodeMap(codes=codes, points=params.points, margin=m)
