"""Closed-form estimators for the local linear model ``z = G u + n``.

Five estimators are provided for a single :class:`~pelrec.image.ObservationSystem`:

========  ==========================================
``ols``   ``(G^T G)^-1 G^T z``
``rls``   ``(G^T G + L)^-1 G^T z``
``pca``   ``G = T P^T`` with loadings ``P`` and scores ``T = G P``
``pcr1``  ``P (T^T T)^-1 T^T z`` over the retained components
``pcr2``  ``P (T^T T + X)^-1 T^T z``, ``X`` a PC-domain regulariser
========  ==========================================

They work for any number of parameters ``p``; the motion problem uses ``p = 2``.
:func:`solve_batch` evaluates the same estimators for a stack of systems
given only their normal-equation blocks ``G^T G`` and ``G^T z``; the
pel-recursive engine uses it so that every pixel of a frame is solved at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateComponentError, SingularSystemError
from .image import ObservationSystem

__all__ = [
    "ESTIMATORS",
    "COND_LIMIT",
    "RATIO_FLOOR",
    "EIGEN_FLOOR",
    "RegularizerSpec",
    "PcaFactors",
    "as_regularizer",
    "ols",
    "rls",
    "pca",
    "pcr1",
    "pcr2",
    "solve_batch",
]

ESTIMATORS = ("ols", "rls", "pcr1", "pcr2")

COND_LIMIT = 1e12
RATIO_FLOOR = 1e-8
EIGEN_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizerSpec:
    """Penalty matrix added to a Gram matrix.

    ``kind`` is ``"none"``, ``"scalar"`` (``value * I``) or ``"diagonal"``.
    """

    kind: str = "none"
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("none", "scalar", "diagonal"):
            raise ConfigurationError(f"unknown regulariser kind {self.kind!r}")
        vals = tuple(float(v) for v in np.atleast_1d(self.values)) if self.kind != "none" else ()
        if self.kind == "scalar" and len(vals) != 1:
            raise ConfigurationError("scalar regulariser needs exactly one value")
        if self.kind == "diagonal" and len(vals) == 0:
            raise ConfigurationError("diagonal regulariser needs at least one value")
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ConfigurationError(f"regulariser entries must be finite and >= 0, got {vals}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def none(cls) -> "RegularizerSpec":
        return cls("none")

    @classmethod
    def scalar(cls, value: float) -> "RegularizerSpec":
        return cls("scalar", (value,))

    @classmethod
    def diagonal(cls, values) -> "RegularizerSpec":
        return cls("diagonal", tuple(values))

    def diag(self, p: int) -> np.ndarray:
        """Diagonal of the penalty as a length-`p` vector."""
        if self.kind == "none":
            return np.zeros(p)
        if self.kind == "scalar":
            return np.full(p, self.values[0])
        if len(self.values) < p:
            raise ConfigurationError(f"diagonal regulariser has {len(self.values)} entries, need {p}")
        return np.asarray(self.values[:p], dtype=np.float64)

    def matrix(self, p: int) -> np.ndarray:
        return np.diag(self.diag(p))


def as_regularizer(value) -> RegularizerSpec:
    """Coerce ``None``, a scalar, a sequence or a spec into a :class:`RegularizerSpec`."""
    if isinstance(value, RegularizerSpec):
        return value
    if value is None:
        return RegularizerSpec.none()
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1 and np.ndim(value) == 0:
        return RegularizerSpec.scalar(float(arr[0]))
    return RegularizerSpec.diagonal(tuple(arr))


@dataclass
class PcaFactors:
    """Principal components of an observation matrix.

    Attributes
    ----------
    loadings : (p, k) array
        Orthonormal principal directions ``P``.
    scores : (N, k) array
        ``T = G P`` (of the centred matrix when centring was requested).
    eigenvalues : (k,) array
        Eigenvalues of ``G^T G`` in descending order (squared singular values).
    column_means : (p,) array
        Means subtracted before factorising; zeros when not centred.
    rank : int
        Numerical rank of the (centred) matrix.
    rank_deficient : bool
        True when more components were requested than the numerical rank.
    """

    loadings: np.ndarray
    scores: np.ndarray
    eigenvalues: np.ndarray
    column_means: np.ndarray
    rank: int
    rank_deficient: bool

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]

    def reconstruct(self) -> np.ndarray:
        """``T P^T`` plus the column means."""
        return self.scores @ self.loadings.T + self.column_means


def _as_gz(system):
    if isinstance(system, ObservationSystem):
        return system.g, system.z
    g, z = system
    s = ObservationSystem(g, z)
    return s.g, s.z


def _check_cond(mat: np.ndarray, cond_limit: float, what: str):
    w = np.linalg.eigvalsh(mat)
    top = np.max(np.abs(w))
    low = np.min(w)
    if not np.isfinite(top) or top == 0 or low <= 0 or top / low > cond_limit:
        cond = np.inf if low <= 0 or top == 0 else top / low
        raise SingularSystemError(f"{what} is singular or ill-conditioned (cond={cond:.3g})")


def ols(system, *, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Ordinary least-squares update ``(G^T G)^-1 G^T z``.

    Raises
    ------
    SingularSystemError
        If the condition number of ``G^T G`` exceeds `cond_limit`.
    """
    g, z = _as_gz(system)
    _check_cond(g.T @ g, cond_limit, "G^T G")
    u, *_ = np.linalg.lstsq(g, z, rcond=None)
    return u


def rls(system, lam=None, *, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Regularised least squares ``(G^T G + L)^-1 G^T z``.

    `lam` is anything accepted by :func:`as_regularizer`; a scalar means
    ``lam * I``.
    """
    g, z = _as_gz(system)
    p = g.shape[1]
    a = g.T @ g + as_regularizer(lam).matrix(p)
    _check_cond(a, cond_limit, "G^T G + L")
    return np.linalg.solve(a, g.T @ z)


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def pca(system, k: int | None = None, center: bool = False) -> PcaFactors:
    """Factorise ``G`` as ``T P^T`` through a thin SVD.

    `system` may be an :class:`ObservationSystem` or a bare ``(N, p)`` array.
    With `center` the column means are removed first.
    """
    g = system.g if isinstance(system, ObservationSystem) else np.atleast_2d(np.asarray(system, dtype=np.float64))
    n, p = g.shape
    k = p if k is None else int(k)
    if not 1 <= k <= p:
        raise ConfigurationError(f"component count must satisfy 1 <= k <= {p}, got {k}")
    if n < k:
        raise ConfigurationError(f"need at least k={k} observations, got {n}")

    means = g.mean(axis=0) if center else np.zeros(p)
    x = g - means
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    eig = np.zeros(p)
    eig[: s.size] = s**2
    tol = (s[0] if s.size else 0.0) * max(n, p) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol)) if s.size and s[0] > 0 else 0

    loadings = _sign_fix(vt[:k].T.copy())
    return PcaFactors(
        loadings=loadings,
        scores=x @ loadings,
        eigenvalues=eig[:k],
        column_means=means,
        rank=rank,
        rank_deficient=k > rank,
    )


def _retained(eigenvalues: np.ndarray, ratio_floor: float | None) -> int:
    if ratio_floor is None or eigenvalues[0] <= 0:
        return eigenvalues.size
    return int(np.sum(eigenvalues >= ratio_floor * eigenvalues[0]))


def pcr1(
    system,
    k: int | None = None,
    *,
    ratio_floor: float | None = RATIO_FLOOR,
    eigen_floor: float = EIGEN_FLOOR,
) -> np.ndarray:
    """Principal component regression ``P (T^T T)^-1 T^T z``.

    The first `k` components are requested (default: all); of those, any
    whose eigenvalue falls below ``ratio_floor`` times the largest is
    dropped.  Set ``ratio_floor=None`` to keep exactly `k`.

    Raises
    ------
    DegenerateComponentError
        If a retained eigenvalue is below the absolute `eigen_floor`.
    """
    return pcr2(system, k, None, ratio_floor=ratio_floor, eigen_floor=eigen_floor)


def pcr2(
    system,
    k: int | None = None,
    xi=None,
    *,
    ratio_floor: float | None = RATIO_FLOOR,
    eigen_floor: float = EIGEN_FLOOR,
    cond_limit: float = COND_LIMIT,
) -> np.ndarray:
    """PC-domain regularised regression ``P (T^T T + X)^-1 T^T z``.

    `xi` is the penalty on the retained score directions (scalar, diagonal or
    ``None``).  With no penalty this is exactly :func:`pcr1`.
    """
    g, z = _as_gz(system)
    factors = pca(ObservationSystem(g, z), k, center=False)
    keep = _retained(factors.eigenvalues, ratio_floor)
    xi = as_regularizer(xi)
    p_k = factors.loadings[:, :keep]
    t_k = factors.scores[:, :keep]
    penalty = xi.diag(keep)
    if xi.kind == "none" or not np.any(penalty > 0):
        low = factors.eigenvalues[keep - 1] if keep else 0.0
        if keep == 0 or low < eigen_floor:
            raise DegenerateComponentError(f"retained eigenvalue {low:.3g} is below the floor {eigen_floor:.3g}")
    a = t_k.T @ t_k + np.diag(penalty)
    _check_cond(a, cond_limit, "T^T T + X")
    return p_k @ np.linalg.solve(a, t_k.T @ z)


def solve_batch(
    gtg: np.ndarray,
    gtz: np.ndarray,
    estimator: str,
    *,
    lam=None,
    xi=None,
    k: int | None = None,
    ratio_floor: float | None = RATIO_FLOOR,
    eigen_floor: float = EIGEN_FLOOR,
    cond_limit: float = COND_LIMIT,
):
    """Solve a stack of systems from their normal-equation blocks.

    Parameters
    ----------
    gtg : (n, p, p) array
    gtz : (n, p) array
    estimator : {"ols", "rls", "pcr1", "pcr2"}

    Returns
    -------
    u : (n, p) array
        Updates; rows where the estimator is undefined are zero.
    ok : (n,) bool array
        False where the system was singular / degenerate for this estimator.
    """
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    gtg = np.asarray(gtg, dtype=np.float64)
    gtz = np.asarray(gtz, dtype=np.float64)
    n, p = gtz.shape
    u = np.zeros((n, p))

    if estimator in ("ols", "rls"):
        a = gtg.copy()
        if estimator == "rls":
            a += as_regularizer(lam).matrix(p)
        w = np.linalg.eigvalsh(a)
        top = np.abs(w).max(axis=1)
        low = w.min(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (top > 0) & (low > 0) & (top / low <= cond_limit)
        if ok.any():
            u[ok] = np.linalg.solve(a[ok], gtz[ok][..., None])[..., 0]
        return u, ok

    k = p if k is None else int(k)
    if not 1 <= k <= p:
        raise ConfigurationError(f"component count must satisfy 1 <= k <= {p}, got {k}")
    w, v = np.linalg.eigh(gtg)
    w = np.maximum(w[:, ::-1][:, :k], 0.0)
    v = v[:, :, ::-1][:, :, :k]
    keep = np.ones((n, k), dtype=bool)
    if ratio_floor is not None:
        keep &= w >= ratio_floor * w[:, :1]
    xi = as_regularizer(xi if estimator == "pcr2" else None)
    penalty = xi.diag(k)[None, :]
    denom = w + penalty
    if estimator == "pcr1" or not np.any(penalty > 0):
        ok = keep[:, 0] & (w[:, 0] >= eigen_floor) & np.all(~keep | (w >= eigen_floor), axis=1)
    else:
        ok = np.ones(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        top = np.where(keep, denom, 0).max(axis=1)
        low = np.where(keep, denom, np.inf).min(axis=1)
        ok &= (low > 0) & (top / low <= cond_limit)
        scores_z = np.einsum("npk,np->nk", v, gtz)
        coef = np.where(keep & ok[:, None], scores_z / np.where(denom > 0, denom, 1.0), 0.0)
    u = np.einsum("npk,nk->np", v, coef)
    return u, ok
