"""Dense displacement fields and per-pixel estimation status."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


class Status(enum.IntEnum):
    CONVERGED = 0
    MAX_ITER = 1
    SKIPPED = 2
    FALLBACK = 3


@dataclass
class DisplacementField:
    """Per-pixel displacement ``d(r) = (dx, dy)`` mapping a frame back to its predecessor.

    ``vectors[y, x]`` holds ``(dx, dy)`` in pixels; ``status[y, x]`` a
    :class:`Status` code.  Skipped pixels carry the vector ``(0, 0)``.
    """

    vectors: np.ndarray
    status: np.ndarray = field(default=None)
    iterations: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 2:
            raise ConfigurationError(f"vectors must have shape (H, W, 2), got {self.vectors.shape}")
        shape = self.vectors.shape[:2]
        if self.status is None:
            self.status = np.full(shape, Status.CONVERGED, dtype=np.uint8)
        self.status = np.asarray(self.status, dtype=np.uint8)
        if self.iterations is None:
            self.iterations = np.zeros(shape, dtype=np.int32)
        self.iterations = np.asarray(self.iterations, dtype=np.int32)
        if self.status.shape != shape or self.iterations.shape != shape:
            raise ConfigurationError("status/iterations must match the vector grid")

    @classmethod
    def zeros(cls, shape) -> "DisplacementField":
        h, w = shape
        return cls(np.zeros((h, w, 2)))

    @classmethod
    def constant(cls, shape, d) -> "DisplacementField":
        h, w = shape
        vec = np.empty((h, w, 2))
        vec[...] = np.asarray(d, dtype=np.float64)
        return cls(vec)

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def dx(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def dy(self) -> np.ndarray:
        return self.vectors[..., 1]

    @property
    def valid(self) -> np.ndarray:
        """Mask of pixels that were not skipped."""
        return self.status != Status.SKIPPED

    def counts(self) -> dict[Status, int]:
        return {s: int(np.sum(self.status == s)) for s in Status}

    def copy(self) -> "DisplacementField":
        return DisplacementField(self.vectors.copy(), self.status.copy(), self.iterations.copy())
