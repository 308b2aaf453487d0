"""PCA-space grouping and classification of displacement vectors.

Displacement vectors are projected onto their leading principal components;
each labelled class is then modelled as a multivariate normal in that score
space.  A vector belongs to a class when its Mahalanobis distance to the class
centre is within the class ellipse *and* the norm of its residual off the
retained subspace is below the class residual threshold.  A vector may belong
to several classes at once, or to none (an outlier).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError, InsufficientMembersError, ZeroVarianceError
from .fields import DisplacementField
from .solvers import pca

__all__ = [
    "COV_FLOOR",
    "PcProjection",
    "ClassModel",
    "ClusterModel",
    "Classification",
    "samples_from_field",
    "project_dvs",
    "fit_classes",
    "classify",
    "mahalanobis",
    "ellipse_parameters",
]

COV_FLOOR = 1e-9
RESIDUAL_FLOOR = 1e-9


@dataclass(frozen=True)
class PcProjection:
    """Centred PCA of a set of displacement vectors.

    ``basis`` is ``(p, m)`` with orthonormal columns, ``scores`` ``(n, m)``,
    ``explained_variance`` the per-component sample variance (all ``p``
    components, descending), ``residuals`` the per-sample norm of the part
    left off the retained subspace (identically zero when ``m == p``).
    """

    basis: np.ndarray
    scores: np.ndarray
    sample_mean: np.ndarray
    explained_variance: np.ndarray
    residuals: np.ndarray

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    def transform(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Scores and residual norms of row vectors `x`."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        centred = x - self.sample_mean
        scores = centred @ self.basis
        residual = np.linalg.norm(centred - scores @ self.basis.T, axis=1)
        return scores, residual


@dataclass(frozen=True)
class ClassModel:
    label: int
    center: np.ndarray
    covariance: np.ndarray
    mahalanobis_threshold: float
    residual_threshold: float
    n_members: int


@dataclass(frozen=True)
class ClusterModel:
    classes: tuple[ClassModel, ...]
    quantile: float
    residual_quantile: float

    def __len__(self):
        return len(self.classes)


@dataclass(frozen=True)
class Classification:
    """Result of :func:`classify`.

    ``memberships`` are class indices (positions in ``model.classes``) ordered
    by increasing distance; ``nearest`` is the least-distance class whether or
    not it accepted the sample.
    """

    memberships: tuple[int, ...]
    nearest: int
    distances: np.ndarray

    @property
    def verdict(self) -> str:
        n = len(self.memberships)
        if n == 0:
            return "outlier"
        return "single-class" if n == 1 else "multiple-loci"


def samples_from_field(field: DisplacementField) -> tuple[np.ndarray, np.ndarray]:
    """Non-skipped vectors of a field as ``(n, 2)`` samples plus their ``(n, 2)`` pixel coordinates."""
    ys, xs = np.nonzero(field.valid)
    return field.vectors[ys, xs], np.column_stack([xs, ys])


def project_dvs(samples, m: int = 2) -> PcProjection:
    """Centred principal-component projection of displacement vectors.

    Raises
    ------
    ZeroVarianceError
        If all samples coincide.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, p = x.shape
    if not 1 <= m <= min(2, p):
        raise ConfigurationError(f"m must be 1 or 2 (and <= {p}), got {m}")
    if n < m + 1:
        raise ConfigurationError(f"need at least {m + 1} samples, got {n}")
    factors = pca(x, p, center=True)
    if factors.eigenvalues[0] <= 0 or np.ptp(x, axis=0).max() == 0:
        raise ZeroVarianceError("all displacement samples are identical")
    basis = factors.loadings[:, :m]
    scores = factors.scores[:, :m]
    residuals = np.linalg.norm(factors.scores[:, m:], axis=1)
    return PcProjection(
        basis=basis,
        scores=scores,
        sample_mean=factors.column_means,
        explained_variance=factors.eigenvalues / (n - 1),
        residuals=residuals,
    )


def fit_classes(
    projection: PcProjection,
    labels=None,
    *,
    quantile: float = 0.975,
    residual_quantile: float = 0.975,
) -> ClusterModel:
    """Fit one normal model per label in score space.

    `labels` holds one class id per projected sample (``None``: one class for
    everything; negative ids are ignored).  The Mahalanobis threshold is
    ``sqrt(chi2.ppf(quantile, m))``; the residual threshold is the
    `residual_quantile` of the class's training residuals, floored at a tiny
    positive value so that in-subspace points are always accepted.
    """
    scores = projection.scores
    n, m = scores.shape
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels).reshape(-1)
    if labels.shape[0] != n:
        raise ConfigurationError(f"{labels.shape[0]} labels for {n} samples")
    if not 0 < quantile < 1 or not 0 < residual_quantile <= 1:
        raise ConfigurationError("quantiles must lie in (0, 1)")

    residuals = projection.residuals
    d_thr = float(np.sqrt(stats.chi2.ppf(quantile, m)))

    classes = []
    for label in np.unique(labels[labels >= 0]):
        sel = labels == label
        count = int(sel.sum())
        if count < m + 1:
            raise InsufficientMembersError(f"class {label} has {count} members; need at least {m + 1}")
        pts = scores[sel]
        cov = np.atleast_2d(np.cov(pts, rowvar=False))
        w, v = np.linalg.eigh((cov + cov.T) / 2)
        cov = (v * np.maximum(w, COV_FLOOR)) @ v.T
        r_thr = max(float(np.quantile(residuals[sel], residual_quantile)), RESIDUAL_FLOOR)
        classes.append(ClassModel(int(label), pts.mean(axis=0), cov, d_thr, r_thr, count))
    return ClusterModel(tuple(classes), quantile, residual_quantile)


def mahalanobis(scores, center, covariance) -> np.ndarray:
    """Mahalanobis distance of score rows to a class."""
    diff = np.atleast_2d(scores) - center
    sol = np.linalg.solve(covariance, diff.T).T
    return np.sqrt(np.maximum(np.sum(diff * sol, axis=1), 0.0))


def classify(dv, projection: PcProjection, model: ClusterModel) -> Classification:
    """Assign a displacement vector to every class that accepts it."""
    score, residual = projection.transform(dv)
    dist = np.array([mahalanobis(score, c.center, c.covariance)[0] for c in model.classes])
    # stable sort: ties go to the lower class index
    order = np.argsort(dist, kind="stable")
    members = tuple(
        int(i)
        for i in order
        if dist[i] <= model.classes[i].mahalanobis_threshold and residual[0] <= model.classes[i].residual_threshold
    )
    return Classification(members, int(order[0]), dist)


def ellipse_parameters(cls: ClassModel) -> dict:
    """Centre, semi-axes and orientation of a 2-D class boundary ellipse.

    Semi-axes are ``threshold * sqrt(eigenvalue)``; the orientation (radians)
    is the angle of the principal covariance eigenvector.
    """
    if cls.center.shape[0] != 2:
        raise ConfigurationError("ellipses are defined for two-component projections only")
    w, v = np.linalg.eigh(cls.covariance)
    major = v[:, 1]
    if major[np.argmax(np.abs(major))] < 0:
        major = -major
    return {
        "center": cls.center.copy(),
        "axis_major": float(cls.mahalanobis_threshold * np.sqrt(w[1])),
        "axis_minor": float(cls.mahalanobis_threshold * np.sqrt(w[0])),
        "orientation": float(np.arctan2(major[1], major[0])),
        "threshold": cls.mahalanobis_threshold,
    }
