"""Synthetic sequences with exact ground-truth motion.

A scene is a smooth random texture moved by piecewise-constant velocities:
each rectangular region carries one velocity, everything else is static.
Frames are produced by backward bilinear warping, so the displaced frame
difference against the true field vanishes by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BoundaryError, CalibrationError, ConfigurationError
from .fields import DisplacementField
from .image import _sample_unchecked, as_frame, in_bounds

__all__ = [
    "Region",
    "SceneSpec",
    "NoiseSpec",
    "generate_texture",
    "warp_frame",
    "add_noise",
    "measure_snr",
    "make_sequence",
    "truth_field",
]

# contrast is the intensity std of the texture at this smoothness
_REFERENCE_SMOOTHNESS = 2.0


@dataclass(frozen=True)
class Region:
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)`` moving with ``velocity``."""

    x0: int
    y0: int
    x1: int
    y1: int
    velocity: tuple[float, float]

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ConfigurationError(f"empty region {self}")
        v = tuple(float(c) for c in self.velocity)
        if len(v) != 2 or not all(math.isfinite(c) for c in v):
            raise ConfigurationError(f"velocity must be two finite numbers, got {self.velocity}")
        object.__setattr__(self, "velocity", v)

    def overlaps(self, other: "Region") -> bool:
        return self.x0 < other.x1 and other.x0 < self.x1 and self.y0 < other.y1 and other.y0 < self.y1


@dataclass(frozen=True)
class SceneSpec:
    """Texture and motion description of a synthetic sequence.

    With no `motion` regions the whole frame moves with `velocity`.
    `accumulate` selects how frame ``k`` is made: ``"sequential"`` warps
    frame ``k-1`` (exact pairwise registration), ``"cumulative"`` resamples
    the initial texture at the accumulated displacement (no compounding blur,
    pairwise registration exact only for integer velocities).
    """

    width: int = 64
    height: int = 64
    texture_seed: int = 0
    smoothness: float = 2.0
    contrast: float = 45.0
    velocity: tuple[float, float] = (1.0, 0.5)
    motion: tuple[Region, ...] = ()
    frame_count: int = 3
    accumulate: str = "sequential"
    max_speed: float = 4.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ConfigurationError("scene must be at least 2x2 pixels")
        if not self.smoothness > 0:
            raise ConfigurationError("smoothness must be positive")
        if self.frame_count < 1:
            raise ConfigurationError("frame_count must be positive")
        if self.accumulate not in ("sequential", "cumulative"):
            raise ConfigurationError(f"unknown accumulate mode {self.accumulate!r}")
        object.__setattr__(self, "motion", tuple(self.motion))
        object.__setattr__(self, "velocity", tuple(float(c) for c in self.velocity))
        for i, a in enumerate(self.regions):
            if max(abs(a.velocity[0]), abs(a.velocity[1])) > self.max_speed:
                raise ConfigurationError(f"velocity {a.velocity} exceeds max_speed {self.max_speed}")
            for b in self.regions[i + 1 :]:
                if a.overlaps(b):
                    raise ConfigurationError(f"regions overlap: {a} and {b}")

    @property
    def regions(self) -> tuple[Region, ...]:
        if self.motion:
            return self.motion
        return (Region(0, 0, self.width, self.height, self.velocity),)

    @property
    def margin(self) -> int:
        """Padding that keeps every backward sample inside the texture canvas."""
        vmax = max(max(abs(r.velocity[0]), abs(r.velocity[1])) for r in self.regions)
        return (math.ceil(vmax) + 1) * max(self.frame_count - 1, 0) + 2


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise calibrated by SNR in dB; ``inf`` disables it."""

    snr_db: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigurationError(f"invalid snr_db {self.snr_db}")

    @property
    def enabled(self) -> bool:
        return math.isfinite(self.snr_db)


def generate_texture(spec: SceneSpec, margin: int = 0) -> np.ndarray:
    """Smooth pseudo-random texture in ``(0, 255)``.

    White noise from `texture_seed` is Gaussian-filtered with standard
    deviation `smoothness`; the gain is fixed so that the result has an
    intensity std of about `contrast` at smoothness 2 px and flattens as the
    smoothing grows.  Extremes are squeezed into range with ``tanh`` rather
    than clipped, so no region saturates into a flat patch.  `margin` pads
    every side of the canvas.
    """
    h = spec.height + 2 * margin
    w = spec.width + 2 * margin
    rng = np.random.default_rng(spec.texture_seed)
    noise = rng.standard_normal((h, w))
    smooth = ndimage.gaussian_filter(noise, spec.smoothness, mode="reflect")
    # filtered unit white noise has std ~ 1 / (2 sqrt(pi) sigma)
    gain = spec.contrast * 2.0 * math.sqrt(math.pi) * _REFERENCE_SMOOTHNESS
    return 127.5 + 127.5 * np.tanh(gain * smooth / 127.5)


def _vectors(field) -> np.ndarray:
    if isinstance(field, DisplacementField):
        return field.vectors
    vec = np.asarray(field, dtype=np.float64)
    if vec.ndim != 3 or vec.shape[2] != 2:
        raise ConfigurationError(f"field must have shape (H, W, 2), got {vec.shape}")
    return vec


def warp_frame(frame, field) -> np.ndarray:
    """Backward warp: ``out(r) = frame(r - d(r))`` by bilinear sampling.

    Raises
    ------
    BoundaryError
        If any ``r - d(r)`` leaves the frame.
    """
    frame = as_frame(frame)
    vec = _vectors(field)
    if vec.shape[:2] != frame.shape:
        raise ConfigurationError(f"field {vec.shape[:2]} does not match frame {frame.shape}")
    ys, xs = np.mgrid[0 : frame.shape[0], 0 : frame.shape[1]]
    sx = xs - vec[..., 0]
    sy = ys - vec[..., 1]
    ok = in_bounds(frame.shape, sx, sy)
    if not ok.all():
        raise BoundaryError(f"{int((~ok).sum())} pixels warp from outside the frame")
    return _sample_unchecked(frame, sx, sy)


def _warp_clamped(frame, vec):
    # Edge-replicating warp for the padded canvas; the contaminated border is cropped later.
    h, w = frame.shape
    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.clip(xs - vec[..., 0], 0, w - 1)
    sy = np.clip(ys - vec[..., 1], 0, h - 1)
    return _sample_unchecked(frame, sx, sy)


def add_noise(frame, noise: NoiseSpec) -> np.ndarray:
    """Add zero-mean Gaussian noise with variance ``var(frame) / 10**(snr_db / 10)``.

    The output is not clipped, so the injected variance is exactly as calibrated.
    """
    frame = as_frame(frame)
    if not noise.enabled:
        return frame.copy()
    var = float(np.var(frame))
    if var <= 0:
        raise CalibrationError("cannot calibrate noise against a constant frame")
    sigma_n = math.sqrt(var / 10.0 ** (noise.snr_db / 10.0))
    rng = np.random.default_rng(noise.seed)
    return frame + sigma_n * rng.standard_normal(frame.shape)


def measure_snr(clean, noisy) -> float:
    """Empirical ``10 log10(var(clean) / var(noisy - clean))`` in dB."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noisy, dtype=np.float64) - clean
    return 10.0 * math.log10(np.var(clean) / np.var(noise))


def truth_field(spec: SceneSpec, margin: int = 0) -> DisplacementField:
    """Piecewise-constant true displacement field of `spec` (optionally padded)."""
    vec = np.zeros((spec.height + 2 * margin, spec.width + 2 * margin, 2))
    for r in spec.regions:
        vec[r.y0 + margin : r.y1 + margin, r.x0 + margin : r.x1 + margin] = r.velocity
    return DisplacementField(vec)


def make_sequence(scene: SceneSpec, noise: NoiseSpec | None = None):
    """Frames and per-pair truth fields for `scene`.

    Returns
    -------
    frames : list of (H, W) arrays
        ``scene.frame_count`` frames; with `noise` each gets independent noise
        drawn from a stream derived from ``noise.seed`` and the frame index.
    truths : list of DisplacementField
        ``frame_count - 1`` fields; entry ``j`` maps frame ``j + 1`` to frame ``j``.
    """
    noise = noise or NoiseSpec()
    pad = scene.margin
    canvas = generate_texture(scene, margin=pad)
    vel = truth_field(scene, margin=pad).vectors
    crop = (slice(pad, pad + scene.height), slice(pad, pad + scene.width))

    clean = [canvas[crop].copy()]
    current = canvas
    for k in range(1, scene.frame_count):
        if scene.accumulate == "sequential":
            current = _warp_clamped(current, vel)
        else:
            current = _warp_clamped(canvas, k * vel)
        clean.append(current[crop].copy())

    frames = clean
    if noise.enabled:
        seeds = np.random.SeedSequence(noise.seed).spawn(scene.frame_count)
        frames = [
            add_noise(f, NoiseSpec(noise.snr_db, int(s.generate_state(1)[0]))) for f, s in zip(clean, seeds)
        ]
    truth = truth_field(scene)
    truths = [truth.copy() for _ in range(scene.frame_count - 1)]
    return frames, truths
