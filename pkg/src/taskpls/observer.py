"""Linear model observers: template estimation, test statistics, likelihood."""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    DegenerateVarianceError,
    IllConditionedCovarianceError,
    InsufficientDataError,
    InvalidParameterError,
    ShapeError,
)
from .objects import H0, H1, LabeledEnsemble, NoiseSpec, check_grid

DIRECT_SOLVE_MAX_PIXELS = 4096
RESIDUAL_RTOL = 1e-8
_CHUNK = 1024


@dataclass
class ObserverTemplate:
    w: np.ndarray
    kind: str = "custom"
    shrinkage: float = 0.0
    shape: tuple[int, int] | None = None
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).ravel()
        if self.kind not in ("hotelling", "npw", "custom"):
            raise InvalidParameterError(f"unknown template kind {self.kind!r}")
        if not np.all(np.isfinite(self.w)):
            raise InvalidParameterError("template contains non-finite values")
        if self.shape is not None:
            self.shape = tuple(int(s) for s in self.shape)
            if self.shape[0] * self.shape[1] != self.w.size:
                raise ShapeError(f"template length {self.w.size} does not match shape {self.shape}")

    @property
    def image(self) -> np.ndarray:
        """The template reshaped to its image grid."""
        if self.shape is None:
            raise ShapeError("template has no recorded image shape")
        return self.w.reshape(self.shape)

    def check_image(self, image) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.size != self.w.size or (self.shape is not None and image.shape[-2:] != self.shape):
            raise ShapeError(
                f"image shape {image.shape} incompatible with template of length {self.w.size}"
            )
        return image


def _class_moments(x: np.ndarray):
    """Mean and unbiased covariance of the rows of ``x``.

    Cross products are accumulated over fixed-size row chunks in a fixed
    order, so the result does not depend on how callers batch their data.
    """
    n = x.shape[0]
    mean = np.zeros(x.shape[1])
    for start in range(0, n, _CHUNK):
        mean += x[start:start + _CHUNK].sum(axis=0)
    mean /= n
    cov = np.zeros((x.shape[1], x.shape[1]))
    for start in range(0, n, _CHUNK):
        d = x[start:start + _CHUNK] - mean
        cov += d.T @ d
    cov /= n - 1
    return mean, cov


def _solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = b.size
    if n <= DIRECT_SOLVE_MAX_PIXELS:
        try:
            factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedCovarianceError(
                "average covariance is not positive definite; use a positive shrinkage"
            ) from exc
        pivots = np.diag(factor[0]) ** 2
        if pivots.min() <= n * np.finfo(float).eps * pivots.max():
            raise IllConditionedCovarianceError(
                "average covariance is numerically singular; use a positive shrinkage"
            )
        x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    else:
        x, info = scipy.sparse.linalg.cg(a, b, rtol=RESIDUAL_RTOL * 0.1, atol=0.0, maxiter=10 * n)
        if info != 0:
            raise IllConditionedCovarianceError(
                f"conjugate-gradient solve did not converge (info={info}); use a larger shrinkage"
            )
    bnorm = np.linalg.norm(b)
    resid = np.linalg.norm(a @ x - b)
    if not np.all(np.isfinite(x)) or (bnorm > 0 and resid > RESIDUAL_RTOL * bnorm):
        raise IllConditionedCovarianceError(
            f"Hotelling solve residual {resid:.3g} exceeds tolerance; use a larger shrinkage"
        )
    return x


def estimate_hotelling(ensemble: LabeledEnsemble, shrinkage: float = 1e-3) -> ObserverTemplate:
    """Hotelling template from the noisy images of a labeled ensemble.

    Solves ``(K + shrinkage * tr(K)/N * I) w = m1 - m0`` where ``K`` is the
    equal-weight average of the two class covariances.
    """
    if shrinkage < 0:
        raise InvalidParameterError("shrinkage must be >= 0")
    x0 = ensemble.by_label(H0).reshape(-1, np.prod(ensemble.shape))
    x1 = ensemble.by_label(H1).reshape(-1, np.prod(ensemble.shape))
    if len(x0) < 2 or len(x1) < 2:
        raise InsufficientDataError("need at least two images of each class")
    m0, k0 = _class_moments(x0)
    m1, k1 = _class_moments(x1)
    kbar = 0.5 * (k0 + k1)
    n = kbar.shape[0]
    a = kbar
    a[np.diag_indices(n)] += shrinkage * np.trace(kbar) / n
    w = _solve_spd(a, m1 - m0)
    meta = {
        "n_absent": int(len(x0)),
        "n_present": int(len(x1)),
        "estimated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if "master_seed" in ensemble.provenance:
        meta["master_seed"] = ensemble.provenance["master_seed"]
    return ObserverTemplate(w, "hotelling", float(shrinkage), ensemble.shape, meta)


def npw_template(signal) -> ObserverTemplate:
    """Non-prewhitening matched filter: the template is the signal itself."""
    signal = check_grid(signal, "signal")
    if not np.any(signal):
        raise InvalidParameterError("NPW template needs a non-zero signal")
    return ObserverTemplate(signal.ravel().copy(), "npw", 0.0, signal.shape)


def test_statistic(template: ObserverTemplate, image) -> float | np.ndarray:
    """``w^T g``. A stack of images ``(n, h, w)`` gives one statistic per image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        template.check_image(image[0])
        return (image.reshape(image.shape[0], -1) * template.w).sum(axis=-1)
    template.check_image(image)
    return float((image.ravel() * template.w).sum())


test_statistic.__test__ = False  # not a pytest test when imported into test modules


def nll_test_statistic(template: ObserverTemplate, f, t: float, noise: NoiseSpec) -> float:
    """Negative log of the Gaussian density of ``t`` given the clean image ``f``.

    Under white Gaussian noise the statistic ``w^T g`` has mean ``w^T f`` and
    variance ``std^2 * |w|^2``.
    """
    var = noise.std**2 * float(template.w @ template.w)
    if not var > 0:
        raise DegenerateVarianceError("noise std and template must both be non-zero")
    mean = test_statistic(template, f)
    return (t - mean) ** 2 / (2.0 * var) + 0.5 * np.log(2.0 * np.pi * var)
