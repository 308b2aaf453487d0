"""Motion-compensation quality and ground-truth error measures.

The improvement in motion compensation (IMC) compares the energy of the plain
frame difference with that of the motion-compensated difference::

    IMC = 10 log10( sum (I_k(r) - I_{k-1}(r))^2 / sum (I_k(r) - I_{k-1}(r - d(r)))^2 )

Both sums run over the same pixels: those whose estimate was not skipped and
whose compensated sample ``r - d(r)`` lies inside the frame.  Perfect
registration would give an infinite ratio, so results are clipped to
``+-cap`` (99 dB by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, EmptyDomainError
from .fields import DisplacementField, Status
from .image import _sample_unchecked, as_frame, in_bounds

__all__ = [
    "IMC_CAP_DB",
    "SSD_FLOOR",
    "MetricsReport",
    "compensation_ssd",
    "imc_db",
    "imc_frame",
    "imc_sequence",
    "endpoint_error",
    "interior_mask",
    "evaluate_sequence",
]

IMC_CAP_DB = 99.0
SSD_FLOOR = 1e-12


def _as_field(field, shape) -> DisplacementField:
    if not isinstance(field, DisplacementField):
        field = DisplacementField(field)
    if field.shape != tuple(shape):
        raise ConfigurationError(f"field {field.shape} does not match frame {tuple(shape)}")
    return field


def compensation_ssd(current, previous, field) -> tuple[float, float, int]:
    """Uncompensated and compensated sums of squared differences.

    Returns ``(ssd_plain, ssd_compensated, n_pixels)`` over the shared valid
    pixel set.
    """
    current = as_frame(current)
    previous = as_frame(previous)
    if current.shape != previous.shape:
        raise ConfigurationError(f"frame shapes differ: {current.shape} vs {previous.shape}")
    field = _as_field(field, current.shape)
    ys, xs = np.mgrid[0 : current.shape[0], 0 : current.shape[1]]
    sx = xs - field.dx
    sy = ys - field.dy
    ok = in_bounds(previous.shape, sx, sy) & (field.status != Status.SKIPPED)
    comp = _sample_unchecked(previous, sx[ok], sy[ok])
    plain = np.sum((current[ok] - previous[ok]) ** 2)
    compensated = np.sum((current[ok] - comp) ** 2)
    return float(plain), float(compensated), int(ok.sum())


def imc_db(plain: float, compensated: float, cap: float = IMC_CAP_DB) -> float:
    """dB ratio of two SSD values with the floor/cap conventions of this module.

    Both below the floor means nothing to compensate and gives 0 dB.
    """
    small_num = plain < SSD_FLOOR
    small_den = compensated < SSD_FLOOR
    if small_num and small_den:
        return 0.0
    if small_den:
        return cap
    if small_num:
        return -cap
    return float(np.clip(10.0 * math.log10(plain / compensated), -cap, cap))


def imc_frame(current, previous, field, cap: float = IMC_CAP_DB) -> float:
    """IMC of one frame pair in dB."""
    plain, compensated, _ = compensation_ssd(current, previous, field)
    return imc_db(plain, compensated, cap)


def imc_sequence(frames: Sequence, fields: Sequence, cap: float = IMC_CAP_DB) -> float:
    """Sequence IMC: both SSDs are summed over all pairs before taking the ratio."""
    if len(fields) != len(frames) - 1:
        raise ConfigurationError(f"{len(frames)} frames need {len(frames) - 1} fields, got {len(fields)}")
    plain = compensated = 0.0
    for j, field in enumerate(fields):
        p, c, _ = compensation_ssd(frames[j + 1], frames[j], field)
        plain += p
        compensated += c
    return imc_db(plain, compensated, cap)


def endpoint_error(field, truth, mask=None) -> tuple[float, float]:
    """Mean and max Euclidean endpoint error over non-skipped pixels.

    `mask` optionally restricts the domain further (e.g. to interior pixels).

    Raises
    ------
    EmptyDomainError
        If no pixel is left to compare.
    """
    if not isinstance(field, DisplacementField):
        field = DisplacementField(field)
    truth = _as_field(truth, field.shape)
    valid = field.valid & truth.valid
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    if not valid.any():
        raise EmptyDomainError("no valid pixels to compare")
    err = np.linalg.norm(field.vectors[valid] - truth.vectors[valid], axis=-1)
    return float(err.mean()), float(err.max())


def interior_mask(shape, margin: int) -> np.ndarray:
    """Boolean mask that is True at least `margin` pixels away from every border."""
    h, w = shape
    m = np.zeros((h, w), dtype=bool)
    m[margin : h - margin, margin : w - margin] = True
    return m


@dataclass
class MetricsReport:
    per_frame_imc_db: list[float]
    sequence_imc_db: float
    mean_endpoint_error: float | None
    valid_pixel_fraction: float


def evaluate_sequence(frames, fields, truths=None, margin: int = 0) -> MetricsReport:
    """Collect per-pair and sequence IMC, plus endpoint error when truth is known."""
    per_frame = [imc_frame(frames[j + 1], frames[j], f) for j, f in enumerate(fields)]
    epe = None
    if truths is not None:
        mask = interior_mask(fields[0].shape, margin)
        errs = [endpoint_error(f, t, mask)[0] for f, t in zip(fields, truths)]
        epe = float(np.mean(errs))
    valid = float(np.mean([f.valid.mean() for f in fields]))
    return MetricsReport(per_frame, imc_sequence(frames, fields), epe, valid)
