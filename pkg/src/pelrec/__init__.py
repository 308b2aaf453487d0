"""Pel-recursive dense motion estimation with OLS, RLS and principal component regression."""

__version__ = "0.1.0"

from .engine import EngineConfig, estimate_field, estimate_pixel, estimate_sequence
from .errors import (
    BoundaryError,
    CalibrationError,
    ConfigurationError,
    DegenerateComponentError,
    EmptyDomainError,
    FormatError,
    InsufficientMembersError,
    InsufficientObservationsError,
    PelrecError,
    SingularSystemError,
    ZeroVarianceError,
)
from .fields import DisplacementField, Status
from .image import MaskSpec, ObservationSystem, bilinear_sample, build_system, dfd, spatial_gradient
from .metrics import endpoint_error, imc_frame, imc_sequence
from .solvers import PcaFactors, RegularizerSpec, ols, pca, pcr1, pcr2, rls
from .synth import NoiseSpec, Region, SceneSpec, add_noise, generate_texture, make_sequence, warp_frame

__all__ = [
    "BoundaryError",
    "CalibrationError",
    "ConfigurationError",
    "DegenerateComponentError",
    "DisplacementField",
    "EmptyDomainError",
    "EngineConfig",
    "FormatError",
    "InsufficientMembersError",
    "InsufficientObservationsError",
    "MaskSpec",
    "NoiseSpec",
    "ObservationSystem",
    "PcaFactors",
    "PelrecError",
    "Region",
    "RegularizerSpec",
    "SceneSpec",
    "SingularSystemError",
    "Status",
    "ZeroVarianceError",
    "add_noise",
    "bilinear_sample",
    "build_system",
    "dfd",
    "endpoint_error",
    "estimate_field",
    "estimate_pixel",
    "estimate_sequence",
    "generate_texture",
    "imc_frame",
    "imc_sequence",
    "make_sequence",
    "ols",
    "pca",
    "pcr1",
    "pcr2",
    "rls",
    "spatial_gradient",
    "warp_frame",
]
