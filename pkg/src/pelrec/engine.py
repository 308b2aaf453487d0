"""Pel-recursive predictor-corrector motion estimation.

Every pixel starts from a predicted displacement ``d0`` and is refined by
``d <- d + u`` where ``u`` solves the local linearised system built by
:func:`pelrec.image.build_system` with the configured regression back-end.

With ``init="zero"`` pixels are independent and the whole frame is iterated
as one vectorised batch.  With ``init="causal"`` each pixel is seeded from the
final estimate of its left neighbour (the pixel above for the first column),
so the scan runs sequentially in raster order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError
from .fields import DisplacementField, Status
from .image import MIN_OBSERVATIONS, MaskSpec, _sample_unchecked, as_frame, in_bounds
from .solvers import COND_LIMIT, ESTIMATORS, RATIO_FLOOR, RegularizerSpec, as_regularizer, solve_batch

__all__ = ["EngineConfig", "PixelEstimate", "estimate_pixel", "estimate_field", "estimate_sequence"]

INIT_MODES = ("zero", "causal")

# pixels per vectorised batch; bounds peak memory at roughly batch * mask size floats
_BATCH = 1 << 15


@dataclass(frozen=True)
class EngineConfig:
    """Settings for the pel-recursive estimator.

    `clamp` defaults to the mask half-width.  `fallback` replaces a singular
    solve by RLS with `fallback_lambda`; without it such pixels keep ``d0``.
    """

    estimator: str = "pcr2"
    mask: MaskSpec = field(default_factory=MaskSpec)
    lam: RegularizerSpec = field(default_factory=lambda: RegularizerSpec.scalar(10.0))
    xi: RegularizerSpec = field(default_factory=lambda: RegularizerSpec.scalar(10.0))
    components: int = 2
    max_iterations: int = 10
    eps: float = 0.01
    clamp: float | None = None
    init: str = "zero"
    fallback: bool = True
    fallback_lambda: float = 1.0
    literal_indices: bool = False
    ratio_floor: float | None = RATIO_FLOOR
    cond_limit: float = COND_LIMIT

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if self.init not in INIT_MODES:
            raise ConfigurationError(f"unknown init mode {self.init!r}; expected one of {INIT_MODES}")
        object.__setattr__(self, "lam", as_regularizer(self.lam))
        object.__setattr__(self, "xi", as_regularizer(self.xi))
        if not 1 <= self.components <= 2:
            raise ConfigurationError(f"components must be 1 or 2, got {self.components}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be positive")
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")
        if self.clamp is None:
            object.__setattr__(self, "clamp", float(self.mask.half_width))
        if not self.clamp > 0:
            raise ConfigurationError("clamp must be positive")
        if not self.fallback_lambda > 0:
            raise ConfigurationError("fallback_lambda must be positive")

    def with_(self, **changes) -> "EngineConfig":
        """Copy with some fields replaced (clamp is re-derived unless given)."""
        if "mask" in changes and "clamp" not in changes:
            changes["clamp"] = None
        return replace(self, **changes)


class PixelEstimate(NamedTuple):
    d: np.ndarray
    status: Status
    iterations: int


def _solve(gtg, gtz, config: EngineConfig, estimator: str):
    return solve_batch(
        gtg,
        gtz,
        estimator,
        lam=config.lam,
        xi=config.xi,
        k=config.components,
        ratio_floor=config.ratio_floor,
        cond_limit=config.cond_limit,
    )


def _iterate(current, previous, px, py, d0, config: EngineConfig):
    """Run the recursion for a batch of working pixels.

    Returns ``(d, status, iterations)`` with shapes ``(n, 2)``, ``(n,)``, ``(n,)``.
    """
    n = px.shape[0]
    off = config.mask.offsets()
    xs = px[:, None] + off[None, :, 0]
    ys = py[:, None] + off[None, :, 1]
    cur_ok = in_bounds(current.shape, xs, ys)
    cur_vals = _sample_unchecked(current, np.where(cur_ok, xs, 0.0), np.where(cur_ok, ys, 0.0))

    d = np.array(d0, dtype=np.float64).reshape(n, 2)
    d_start = d.copy()
    status = np.full(n, Status.MAX_ITER, dtype=np.uint8)
    iterations = np.zeros(n, dtype=np.int32)
    fell_back = np.zeros(n, dtype=bool)
    active = np.arange(n)
    clamp = config.clamp

    for it in range(config.max_iterations):
        if active.size == 0:
            break
        sx = xs[active] - d[active, 0:1]
        sy = ys[active] - d[active, 1:2]
        ok = cur_ok[active] & in_bounds(previous.shape, sx, sy)
        val, gx, gy = _sample_unchecked(
            previous,
            np.where(ok, sx, 0.0),
            np.where(ok, sy, 0.0),
            gradient=True,
            literal_indices=config.literal_indices,
        )
        z = np.where(ok, cur_vals[active] - val, 0.0)
        gx = np.where(ok, -gx, 0.0)
        gy = np.where(ok, -gy, 0.0)

        enough = ok.sum(axis=1) >= MIN_OBSERVATIONS
        short = active[~enough]
        if it == 0:
            status[short] = Status.SKIPPED
        # a later iterate that runs out of support simply stops where it is
        active = active[enough]
        z, gx, gy = z[enough], gx[enough], gy[enough]
        if active.size == 0:
            break

        gtg = np.empty((active.size, 2, 2))
        gtg[:, 0, 0] = np.sum(gx * gx, axis=1)
        gtg[:, 0, 1] = gtg[:, 1, 0] = np.sum(gx * gy, axis=1)
        gtg[:, 1, 1] = np.sum(gy * gy, axis=1)
        gtz = np.column_stack([np.sum(gx * z, axis=1), np.sum(gy * z, axis=1)])

        u, solved = _solve(gtg, gtz, config, config.estimator)
        if not solved.all():
            bad = ~solved
            if config.fallback:
                u_fb, _ = solve_batch(gtg[bad], gtz[bad], "rls", lam=config.fallback_lambda)
                u[bad] = u_fb
                fell_back[active[bad]] = True
            else:
                failed = active[bad]
                status[failed] = Status.FALLBACK
                d[failed] = d_start[failed]
                iterations[failed] += 1
                active, u = active[solved], u[solved]

        d[active] = np.clip(d[active] + u, -clamp, clamp)
        iterations[active] += 1
        done = np.hypot(u[:, 0], u[:, 1]) <= config.eps
        status[active[done]] = Status.CONVERGED
        active = active[~done]

    status[fell_back & (status != Status.SKIPPED)] = Status.FALLBACK
    return d, status, iterations


def _check_pair(current, previous):
    current = as_frame(current)
    previous = as_frame(previous)
    if current.shape != previous.shape:
        raise ConfigurationError(f"frame shapes differ: {current.shape} vs {previous.shape}")
    return current, previous


def estimate_pixel(current, previous, r, d0, config: EngineConfig) -> PixelEstimate:
    """Refine the displacement of one working pixel starting from `d0`."""
    current, previous = _check_pair(current, previous)
    d, status, iters = _iterate(
        current,
        previous,
        np.array([float(r[0])]),
        np.array([float(r[1])]),
        np.asarray(d0, dtype=np.float64).reshape(1, 2),
        config,
    )
    return PixelEstimate(d[0], Status(int(status[0])), int(iters[0]))


def estimate_field(current, previous, config: EngineConfig | None = None) -> DisplacementField:
    """Dense displacement field mapping `current` back onto `previous`."""
    config = config or EngineConfig()
    current, previous = _check_pair(current, previous)
    h, w = current.shape
    vectors = np.zeros((h, w, 2))
    status = np.empty((h, w), dtype=np.uint8)
    iterations = np.zeros((h, w), dtype=np.int32)

    if config.init == "zero":
        ys, xs = np.mgrid[0:h, 0:w]
        px = xs.ravel().astype(np.float64)
        py = ys.ravel().astype(np.float64)
        d_flat = vectors.reshape(-1, 2)
        s_flat = status.reshape(-1)
        i_flat = iterations.reshape(-1)
        for start in range(0, px.size, _BATCH):
            sl = slice(start, start + _BATCH)
            d, s, it = _iterate(current, previous, px[sl], py[sl], np.zeros((px[sl].size, 2)), config)
            d_flat[sl], s_flat[sl], i_flat[sl] = d, s, it
    else:
        for y in range(h):
            for x in range(w):
                if x > 0:
                    seed_at = (y, x - 1)
                elif y > 0:
                    seed_at = (y - 1, x)
                else:
                    seed_at = None
                d0 = np.zeros(2)
                if seed_at is not None and status[seed_at] != Status.SKIPPED:
                    d0 = vectors[seed_at]
                d, s, it = _iterate(
                    current, previous, np.array([float(x)]), np.array([float(y)]), d0.reshape(1, 2), config
                )
                vectors[y, x], status[y, x], iterations[y, x] = d[0], s[0], it[0]

    vectors[status == Status.SKIPPED] = 0.0
    return DisplacementField(vectors, status, iterations)


def estimate_sequence(frames: Sequence, config: EngineConfig | None = None) -> list[DisplacementField]:
    """Fields for consecutive pairs; entry ``j`` maps frame ``j + 1`` back to frame ``j``."""
    frames = list(frames)
    if len(frames) < 2:
        raise ConfigurationError(f"need at least 2 frames, got {len(frames)}")
    shape = np.shape(frames[0])
    if any(np.shape(f) != shape for f in frames):
        raise ConfigurationError("all frames must share the same dimensions")
    return [estimate_field(frames[j + 1], frames[j], config) for j in range(len(frames) - 1)]
