"""Dirichlet-process Gaussian mixture core.

The generative story: latent vectors of one person follow a Gaussian whose
parameters are drawn from a Normal-Inverse-Wishart base distribution, and
class membership follows a Chinese-restaurant-process prior with
concentration alpha. Conjugacy makes the per-class posterior predictive a
multivariate student-t whose parameters depend only on cheap sufficient
statistics (count, mean, scatter), so a streaming classifier can re-score
every record in O(classes) without revisiting history.

Everything here is shared by both inference engines: predictive parameters,
student-t log-density, CRP prior weights, and the normalized one-record
posterior over {existing classes} + {new class}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import ConfigError, DataError, NumericalError

# Fallback scale when the pooled covariance is unusable (degenerate training).
_FALLBACK_SIGMA0_JITTER = 1e-6


@dataclass(frozen=True, eq=False)
class NIWHyper:
    """Base-distribution hyperparameters plus the DP concentration.

    alpha = 0 is allowed: it zeroes the new-class prior mass, degenerating the
    streaming classifier to a fixed-class Bayesian classifier.
    """

    mu0: np.ndarray
    sigma0: np.ndarray
    kappa: float
    m: float
    alpha: float
    h: int

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=float)
        sigma0 = np.asarray(self.sigma0, dtype=float)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma0)
        if self.h < 1:
            raise ConfigError(f"h must be >= 1, got {self.h}")
        if mu0.shape != (self.h,):
            raise ConfigError(f"mu0 shape {mu0.shape} does not match h={self.h}")
        if sigma0.shape != (self.h, self.h):
            raise ConfigError(f"sigma0 shape {sigma0.shape} does not match h={self.h}")
        if not np.allclose(sigma0, sigma0.T, rtol=1e-12, atol=1e-14):
            raise ConfigError("sigma0 must be symmetric")
        try:
            np.linalg.cholesky(sigma0)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("sigma0 must be positive-definite") from exc
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.m + 1 - self.h <= 0:
            raise ConfigError(
                f"m + 1 - h must be > 0 so predictive dof stay positive, got m={self.m}, h={self.h}"
            )


@dataclass(eq=False)
class ClassStats:
    """Sufficient statistics of one class: count, mean, and scatter.

    scatter is the sum of squared deviations, (n-1) times the sample
    covariance, kept unscaled so single-point classes are exact zeros.
    """

    label: str
    n: int
    mean: np.ndarray
    scatter: np.ndarray

    @classmethod
    def from_single(cls, label: str, x: np.ndarray) -> "ClassStats":
        x = np.asarray(x, dtype=float)
        return cls(label=label, n=1, mean=x.copy(), scatter=np.zeros((x.size, x.size)))

    @classmethod
    def from_points(cls, label: str, X: np.ndarray) -> "ClassStats":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError("from_points needs an n x h matrix with n >= 1")
        mean = X.mean(axis=0)
        centered = X - mean
        return cls(label=label, n=X.shape[0], mean=mean, scatter=centered.T @ centered)

    def copy(self) -> "ClassStats":
        return ClassStats(
            label=self.label, n=self.n, mean=self.mean.copy(), scatter=self.scatter.copy()
        )


def class_stats_update(stats: ClassStats, x: np.ndarray) -> ClassStats:
    """Fold one point into the statistics (single-pass update, no history)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot update class statistics with a non-finite vector")
    n_new = stats.n + 1
    delta = x - stats.mean
    mean_new = stats.mean + delta / n_new
    scatter_new = stats.scatter + np.outer(delta, x - mean_new)
    return ClassStats(label=stats.label, n=n_new, mean=mean_new, scatter=scatter_new)


def class_stats_downdate(stats: ClassStats, x: np.ndarray) -> ClassStats | None:
    """Remove one point; returns None when the class is emptied."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot downdate class statistics with a non-finite vector")
    n_new = stats.n - 1
    if n_new == 0:
        return None
    mean_new = stats.mean + (stats.mean - x) / n_new
    scatter_new = stats.scatter - np.outer(x - mean_new, x - stats.mean)
    return ClassStats(label=stats.label, n=n_new, mean=mean_new, scatter=scatter_new)


@dataclass(frozen=True, eq=False)
class PredictiveParams:
    """Student-t parameters of one class's posterior predictive."""

    mean: np.ndarray
    scale: np.ndarray
    dof: float


def predictive_params(stats: ClassStats | None, hyper: NIWHyper) -> PredictiveParams:
    """Posterior-predictive student-t parameters for a class, or for a new one.

    stats=None is the empty class: the predictive of a class that has no
    records yet, used for the new-class outcome.
    """
    kappa, m, h = hyper.kappa, hyper.m, hyper.h
    if stats is None:
        dof = m + 1.0 - h
        scale = hyper.sigma0 * ((kappa + 1.0) / (kappa * dof))
        return PredictiveParams(mean=hyper.mu0.copy(), scale=scale, dof=dof)
    n = stats.n
    dof = n + m + 1.0 - h
    mean = (n * stats.mean + kappa * hyper.mu0) / (n + kappa)
    dm = hyper.mu0 - stats.mean
    centering = (n * kappa / (n + kappa)) * np.outer(dm, dm)
    scale = ((n + kappa + 1.0) / ((n + kappa) * dof)) * (
        hyper.sigma0 + stats.scatter + centering
    )
    return PredictiveParams(mean=mean, scale=scale, dof=dof)


def _cholesky_with_jitter(S: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor with an escalating diagonal jitter.

    Latent vectors out of the non-negative projection can be collinear, so a
    small jitter (relative to the mean diagonal) is always added; it escalates
    by x10 up to 1e-2 of the mean diagonal before giving up.
    """
    h = S.shape[0]
    t = float(np.trace(S)) / h
    if not np.isfinite(t) or t <= 0:
        raise NumericalError("predictive scale matrix has non-positive trace")
    eye = np.eye(h)
    jitter = 1e-8 * t
    limit = 1e-2 * t
    while jitter <= limit * (1 + 1e-12):
        try:
            return np.linalg.cholesky(S + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("scale matrix is not positive-definite even after jitter")


def studentt_logpdf(x: np.ndarray, params: PredictiveParams) -> float:
    """Log density of the multivariate student-t at x.

    Computed through the Cholesky factor of the scale matrix (log-determinant
    and quadratic form); the scale is never inverted explicitly.
    """
    x = np.asarray(x, dtype=float)
    h = x.size
    v = params.dof
    L = _cholesky_with_jitter(params.scale)
    y = solve_triangular(L, x - params.mean, lower=True, check_finite=False)
    maha = float(y @ y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(
        gammaln((v + h) / 2.0)
        - gammaln(v / 2.0)
        - (h / 2.0) * np.log(v * np.pi)
        - 0.5 * logdet
        - ((v + h) / 2.0) * np.log1p(maha / v)
    )


@dataclass(eq=False)
class ModelState:
    """Mutable model: hyperparameters plus per-class sufficient statistics.

    classes preserves insertion order: training classes sorted by label, then
    online-discovered classes in creation order. That order is the documented
    outcome order for categorical draws.
    """

    hyper: NIWHyper
    classes: dict[str, ClassStats]
    n_train: int
    n_online_seen: int = 0
    next_novel_index: int = 1

    @classmethod
    def from_training(
        cls,
        latents: np.ndarray,
        labels: Sequence[str],
        hyper: NIWHyper,
    ) -> "ModelState":
        X = np.asarray(latents, dtype=float)
        if X.ndim != 2 or X.shape[0] != len(labels):
            raise DataError("training latents and labels disagree in length")
        classes: dict[str, ClassStats] = {}
        for label in sorted(set(labels)):
            rows = X[[i for i, l in enumerate(labels) if l == label]]
            classes[label] = ClassStats.from_points(label, rows)
        return cls(hyper=hyper, classes=classes, n_train=X.shape[0])

    def copy(self) -> "ModelState":
        return ModelState(
            hyper=self.hyper,
            classes={label: st.copy() for label, st in self.classes.items()},
            n_train=self.n_train,
            n_online_seen=self.n_online_seen,
            next_novel_index=self.next_novel_index,
        )

    def novel_label(self) -> str:
        """Name the next discovered class, skipping any label already taken."""
        idx = self.next_novel_index
        while f"novel-{idx}" in self.classes:
            idx += 1
        return f"novel-{idx}"

    def add_novel(self, x: np.ndarray) -> str:
        label = self.novel_label()
        self.classes[label] = ClassStats.from_single(label, x)
        self.next_novel_index = int(label.rsplit("-", 1)[1]) + 1
        return label


def crp_log_weights(model: ModelState) -> tuple[list[str], np.ndarray]:
    """Log prior over {existing classes} + {new class}, new class last.

    Existing classes weigh their total current count (training plus online
    assignments); the new-class outcome weighs alpha. The shared denominator
    alpha + n_train + n_online_seen makes the exponentials sum to 1.
    """
    labels = list(model.classes)
    counts = np.array([model.classes[label].n for label in labels], dtype=float)
    denom = model.hyper.alpha + model.n_train + model.n_online_seen
    if denom <= 0:
        raise ConfigError("CRP prior undefined: alpha and record counts are all zero")
    with np.errstate(divide="ignore"):
        logw = np.log(np.append(counts, model.hyper.alpha)) - np.log(denom)
    return labels, logw


@dataclass(frozen=True, eq=False)
class Posterior:
    """Normalized one-record class posterior.

    probs aligns with labels plus one trailing entry: probs[-1] is the
    new-class outcome.
    """

    labels: tuple[str, ...]
    probs: np.ndarray

    @property
    def novel_mass(self) -> float:
        return float(self.probs[-1])

    def as_dict(self, novel_key: str) -> dict[str, float]:
        out = {label: float(p) for label, p in zip(self.labels, self.probs[:-1])}
        out[novel_key] = float(self.probs[-1])
        return out


def posterior_over_classes(x: np.ndarray, model: ModelState) -> Posterior:
    """CRP prior times student-t predictive, normalized in log space."""
    x = np.asarray(x, dtype=float)
    labels, log_prior = crp_log_weights(model)
    scores = np.empty(len(labels) + 1)
    for i, label in enumerate(labels):
        scores[i] = studentt_logpdf(x, predictive_params(model.classes[label], model.hyper))
    scores[-1] = studentt_logpdf(x, predictive_params(None, model.hyper))
    scores += log_prior
    top = float(np.max(scores))
    if top == -np.inf:
        raise NumericalError("class posterior has no probability mass anywhere")
    probs = np.exp(scores - top)
    probs /= probs.sum()
    return Posterior(labels=tuple(labels), probs=probs)


def estimate_hyperparams(
    latents: np.ndarray,
    labels: Sequence[str],
    h: int | None = None,
    alpha: float = 100.0,
    kappa: float = 100.0,
    m_offset: float = 100.0,
) -> NIWHyper:
    """Estimate the NIW base distribution from labeled training latents.

    mu0 is the grand mean and sigma0 the pooled within-class covariance
    (jittered to positive-definite); kappa and the degrees-of-freedom offset
    default to 100 and alpha to 100, all overridable. Degenerate training
    data (fewer than one spare record per class) falls back to a small
    isotropic sigma0.
    """
    X = np.asarray(latents, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError("estimate_hyperparams needs at least one training record")
    if len(labels) != X.shape[0]:
        raise DataError("training latents and labels disagree in length")
    if h is None:
        h = X.shape[1]
    elif h != X.shape[1]:
        raise ConfigError(f"h={h} does not match latent dimension {X.shape[1]}")

    mu0 = X.mean(axis=0)
    distinct = sorted(set(labels))
    pooled_num = np.zeros((h, h))
    for label in distinct:
        rows = X[[i for i, l in enumerate(labels) if l == label]]
        centered = rows - rows.mean(axis=0)
        pooled_num += centered.T @ centered
    denom = X.shape[0] - len(distinct)
    if denom > 0 and float(np.trace(pooled_num)) > 0:
        sigma0 = _make_positive_definite(pooled_num / denom)
    else:
        sigma0 = _FALLBACK_SIGMA0_JITTER * np.eye(h)
    return NIWHyper(mu0=mu0, sigma0=sigma0, kappa=kappa, m=float(h) + m_offset, alpha=alpha, h=h)


def _make_positive_definite(S: np.ndarray) -> np.ndarray:
    """Symmetrize, then add the smallest escalating jitter that admits a Cholesky."""
    S = (S + S.T) / 2.0
    h = S.shape[0]
    try:
        np.linalg.cholesky(S)
        return S
    except np.linalg.LinAlgError:
        pass
    t = float(np.trace(S)) / h
    if t <= 0:
        return _FALLBACK_SIGMA0_JITTER * np.eye(h)
    jitter = 1e-8 * t
    while jitter <= 1e-2 * t * (1 + 1e-12):
        try:
            np.linalg.cholesky(S + jitter * np.eye(h))
            return S + jitter * np.eye(h)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("pooled covariance cannot be made positive-definite")
