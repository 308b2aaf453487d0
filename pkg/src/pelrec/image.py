"""Frames, subpixel sampling, spatial gradients and the per-pixel observation system.

Frames are plain 2-D ``float64`` arrays indexed ``frame[y, x]`` (rows along y,
columns along x).  Locations are ``(x, y)`` pairs in pixel units; subpixel
positions are allowed anywhere in the closed rectangle
``0 <= x <= width - 1``, ``0 <= y <= height - 1``.

Interpolation cell convention
-----------------------------
For a location ``(x, y)`` the four corners are named ``f_ij = f(x0 + i, y0 + j)``
with ``x0 = floor(x)``, ``y0 = floor(y)``, ``i`` running along x (columns) and
``j`` along y (rows).  The sampled value is

    (1-tx)(1-ty) f00 + tx(1-ty) f10 + (1-tx) ty f01 + tx ty f11

and the gradient returned by :func:`spatial_gradient` is the exact gradient of
that bilinear patch, i.e. first-order differences across the cell:

    gx = (1-ty)(f10 - f00) + ty(f11 - f01)
    gy = (1-tx)(f01 - f00) + tx(f11 - f10)

Passing ``literal_indices=True`` evaluates the alternative expressions
``gx = (1-ty)(f01 - f00) + ty(f11 - f10)`` and
``gy = (1-tx)(f10 - f00) + tx(f11 - f01)`` with the same corner naming.  Those
difference along the wrong axis for a row-major frame and are kept only for
experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import BoundaryError, ConfigurationError, InsufficientObservationsError

__all__ = [
    "MIN_OBSERVATIONS",
    "MaskSpec",
    "ObservationSystem",
    "as_frame",
    "bilinear_sample",
    "spatial_gradient",
    "dfd",
    "build_system",
    "in_bounds",
]

MIN_OBSERVATIONS = 3

MASK_KINDS = ("square", "causal")


def as_frame(data, copy: bool = False) -> np.ndarray:
    """Validate and convert `data` to a 2-D float64 frame.

    Raises
    ------
    ConfigurationError
        If the array is not 2-D, is smaller than 2x2, or holds NaN/Inf.
    """
    frame = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
    if frame.ndim != 2:
        raise ConfigurationError(f"frame must be 2-D, got shape {frame.shape}")
    if frame.shape[0] < 2 or frame.shape[1] < 2:
        raise ConfigurationError(f"frame must be at least 2x2, got {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ConfigurationError("frame contains non-finite intensities")
    return frame


def in_bounds(shape: tuple[int, int], x, y) -> np.ndarray:
    """Boolean mask of locations whose interpolation cell lies inside a frame of `shape`."""
    h, w = shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)


def _cell(shape, x, y):
    # The last row/column is reached with t = 1 on the preceding cell, so the
    # closed frame rectangle is sampleable without extrapolation.
    h, w = shape
    x0 = np.clip(np.floor(x), 0, w - 2).astype(np.intp)
    y0 = np.clip(np.floor(y), 0, h - 2).astype(np.intp)
    return x0, y0, x - x0, y - y0


def _corners(frame, x0, y0):
    f00 = frame[y0, x0]
    f10 = frame[y0, x0 + 1]
    f01 = frame[y0 + 1, x0]
    f11 = frame[y0 + 1, x0 + 1]
    return f00, f10, f01, f11


def _sample_unchecked(frame, x, y, *, gradient=False, literal_indices=False):
    """Vectorised sampling on locations already known to be in bounds.

    Returns the value, or ``(value, gx, gy)`` when `gradient` is set.
    """
    x0, y0, tx, ty = _cell(frame.shape, x, y)
    f00, f10, f01, f11 = _corners(frame, x0, y0)
    value = (1 - ty) * ((1 - tx) * f00 + tx * f10) + ty * ((1 - tx) * f01 + tx * f11)
    if not gradient:
        return value
    if literal_indices:
        gx = (1 - ty) * (f01 - f00) + ty * (f11 - f10)
        gy = (1 - tx) * (f10 - f00) + tx * (f11 - f01)
    else:
        gx = (1 - ty) * (f10 - f00) + ty * (f11 - f01)
        gy = (1 - tx) * (f01 - f00) + tx * (f11 - f10)
    return value, gx, gy


def _checked_xy(frame, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ok = in_bounds(frame.shape, x, y)
    if not np.all(ok):
        bad = np.argwhere(~np.broadcast_to(ok, np.broadcast_shapes(x.shape, y.shape)))
        raise BoundaryError(
            f"{len(bad)} sample location(s) fall outside the {frame.shape[1]}x{frame.shape[0]} frame"
        )
    return x, y


def _unwrap(value):
    return value.item() if isinstance(value, np.ndarray) and value.ndim == 0 else value


def bilinear_sample(frame, x, y):
    """Bilinearly interpolated intensity of `frame` at ``(x, y)``.

    `x` and `y` may be scalars or broadcastable arrays.  Integer locations
    return the stored intensity exactly.

    Raises
    ------
    BoundaryError
        If any location needs intensities outside the frame.
    """
    frame = np.asarray(frame, dtype=np.float64)
    x, y = _checked_xy(frame, x, y)
    return _unwrap(_sample_unchecked(frame, x, y))


def spatial_gradient(frame, x, y, *, literal_indices: bool = False):
    """Gradient ``(gx, gy)`` of the bilinear interpolant at ``(x, y)``.

    Both components are first-order differences of the four cell corners,
    blended by the fractional offsets; for any function of the form
    ``a + b x + c y + d x y`` they equal the analytic partial derivatives.
    See the module docstring for `literal_indices`.
    """
    frame = np.asarray(frame, dtype=np.float64)
    x, y = _checked_xy(frame, x, y)
    _, gx, gy = _sample_unchecked(frame, x, y, gradient=True, literal_indices=literal_indices)
    return _unwrap(gx), _unwrap(gy)


def dfd(current, previous, r, d) -> float:
    """Displaced frame difference ``current(r) - previous(r - d)``.

    Both terms are bilinear samples, so the first is exact at integer `r`.
    """
    x, y = float(r[0]), float(r[1])
    dx, dy = float(d[0]), float(d[1])
    return bilinear_sample(current, x, y) - bilinear_sample(previous, x - dx, y - dy)


@dataclass(frozen=True)
class MaskSpec:
    """Neighbourhood shape used to stack observations around a working pixel.

    ``kind="square"`` covers the full ``(2h+1) x (2h+1)`` window.
    ``kind="causal"`` keeps the rows strictly above the working pixel, the
    same-row offsets strictly to its left, and the pixel itself; i.e. only
    pixels already visited by a raster scan.
    """

    kind: str = "square"
    half_width: int = 2

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ConfigurationError(f"unknown mask kind {self.kind!r}; expected one of {MASK_KINDS}")
        if int(self.half_width) != self.half_width or self.half_width < 1:
            raise ConfigurationError(f"half_width must be a positive integer, got {self.half_width}")

    def offsets(self) -> np.ndarray:
        """``(N, 2)`` integer array of ``(dx, dy)`` offsets in raster order."""
        h = int(self.half_width)
        out = []
        for oy in range(-h, h + 1):
            for ox in range(-h, h + 1):
                if self.kind == "causal" and (oy > 0 or (oy == 0 and ox > 0)):
                    continue
                out.append((ox, oy))
        return np.array(out, dtype=np.intp)

    @property
    def size(self) -> int:
        h = int(self.half_width)
        if self.kind == "square":
            return (2 * h + 1) ** 2
        return h * (2 * h + 1) + h + 1


@dataclass
class ObservationSystem:
    """Stacked local linear model ``z = G u + n`` for one working pixel.

    ``g`` is ``(N, p)``, ``z`` is ``(N,)``; ``locations`` (optional) holds the
    ``(x, y)`` pixel each row came from.
    """

    g: np.ndarray
    z: np.ndarray
    locations: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=np.float64))
        self.z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        if self.g.shape[0] != self.z.shape[0]:
            raise ConfigurationError(f"G has {self.g.shape[0]} rows but z has {self.z.shape[0]} entries")
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.z))):
            raise ConfigurationError("observation system contains non-finite entries")
        if self.locations is not None:
            self.locations = np.asarray(self.locations, dtype=np.float64).reshape(-1, 2)
            if self.locations.shape[0] != self.z.shape[0]:
                raise ConfigurationError("locations must have one entry per row")

    @property
    def n_obs(self) -> int:
        return self.z.shape[0]

    @property
    def n_params(self) -> int:
        return self.g.shape[1]

    def permuted(self, order: Iterable[int]) -> "ObservationSystem":
        order = np.asarray(list(order), dtype=np.intp)
        locs = None if self.locations is None else self.locations[order]
        return ObservationSystem(self.g[order], self.z[order], locs)


def build_system(
    current,
    previous,
    r,
    d,
    mask: MaskSpec,
    *,
    literal_indices: bool = False,
    min_rows: int = MIN_OBSERVATIONS,
) -> ObservationSystem:
    """Linearise the displaced frame difference over the mask around `r`.

    For each mask offset location ``r_j`` whose own sample and displaced
    sample ``r_j - d`` are in bounds, one row is appended:
    ``z_j = current(r_j) - previous(r_j - d)`` and
    ``G_j = -grad previous(r_j - d)``.  The minus sign comes from the
    first-order expansion of ``previous(r_j - d - u)``, so that
    ``z = G u + n`` holds with ``u`` the correction to add to `d`.

    Raises
    ------
    InsufficientObservationsError
        If fewer than `min_rows` rows survive boundary clipping.
    """
    current = np.asarray(current, dtype=np.float64)
    previous = np.asarray(previous, dtype=np.float64)
    if current.shape != previous.shape:
        raise ConfigurationError(f"frame shapes differ: {current.shape} vs {previous.shape}")
    x, y = float(r[0]), float(r[1])
    dx, dy = float(d[0]), float(d[1])
    if not np.isfinite([x, y, dx, dy]).all():
        raise ConfigurationError("working location and displacement must be finite")

    off = mask.offsets()
    xs = x + off[:, 0]
    ys = y + off[:, 1]
    px, py = xs - dx, ys - dy
    ok = in_bounds(current.shape, xs, ys) & in_bounds(previous.shape, px, py)
    n = int(ok.sum())
    if n < min_rows:
        raise InsufficientObservationsError(f"only {n} valid observations at ({x}, {y}); need {min_rows}")

    xs, ys, px, py = xs[ok], ys[ok], px[ok], py[ok]
    shifted, gx, gy = _sample_unchecked(previous, px, py, gradient=True, literal_indices=literal_indices)
    z = _sample_unchecked(current, xs, ys) - shifted
    g = -np.column_stack([gx, gy])
    return ObservationSystem(g, z, np.column_stack([xs, ys]))
