"""Particle filter: sequential importance sampling with stratified resampling.

Each particle is one complete hypothesis of the online assignment history,
carrying its own copy of every class's sufficient statistics. Records are
proposed from the CRP prior restricted to the particle's classes, weighted by
the predictive density of the chosen class evaluated before the record is
folded in, and the ensemble resamples whenever the effective number of
particles collapses below the threshold.

Randomness is split into named substreams keyed by (run seed, stream tag,
particle index, record index), so serial and parallel execution, replays, and
mid-stream resumes all agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dpgmm import (
    ClassStats,
    NIWHyper,
    class_stats_update,
    predictive_params,
    studentt_logpdf,
)
from .errors import ConfigError, DegeneracyError

# Substream tags. Propagation uses (seed, PROPAGATE, particle, record);
# resampling uses (seed, RESAMPLE, trigger, record) where trigger 0 is the
# post-propagation check and 1 the post-feedback check; the random-selection
# baseline uses (seed, QUERY, 0, record).
STREAM_PROPAGATE = 0
STREAM_RESAMPLE = 1
STREAM_QUERY = 2


@dataclass(eq=False)
class Particle:
    """One assignment-history hypothesis with its importance weight."""

    weight: float
    assignments: list[str]
    classes: dict[str, ClassStats]
    novel_count: int = 0
    births: dict[str, int] = field(default_factory=dict)
    last_log_lik: float = float("nan")

    def copy(self) -> "Particle":
        return Particle(
            weight=self.weight,
            assignments=list(self.assignments),
            classes={label: st.copy() for label, st in self.classes.items()},
            novel_count=self.novel_count,
            births=dict(self.births),
            last_log_lik=self.last_log_lik,
        )

    def birth_label(self) -> str:
        """Canonical name for the next discovered class within this particle.

        Birth order numbers the name; the skip loop only matters when user
        feedback created a literally-named class that squats a canonical slot.
        """
        t = self.novel_count + 1
        while f"novel-{t}" in self.classes:
            t += 1
        return f"novel-{t}"


@dataclass(eq=False)
class Ensemble:
    """M weighted particles plus everything shared between them."""

    particles: list[Particle]
    hyper: NIWHyper
    n_train: int
    enp_threshold: float
    rng_seed: int
    position: int = 0
    last_x: np.ndarray | None = None

    @property
    def M(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.particles])


def pf_init(
    M: int,
    hyper: NIWHyper,
    train_stats: dict[str, ClassStats],
    enp_threshold: float | None = None,
    rng_seed: int = 0,
) -> Ensemble:
    """Build a fresh ensemble: uniform weights, shared training statistics.

    Every particle receives its own deep copy of the training-class
    statistics and an empty assignment history. enp_threshold defaults to M/2.
    """
    if M < 1:
        raise ConfigError(f"particle count M must be >= 1, got {M}")
    if enp_threshold is None:
        enp_threshold = M / 2.0
    n_train = sum(st.n for st in train_stats.values())
    particles = [
        Particle(
            weight=1.0 / M,
            assignments=[],
            classes={label: st.copy() for label, st in train_stats.items()},
        )
        for _ in range(M)
    ]
    return Ensemble(
        particles=particles,
        hyper=hyper,
        n_train=n_train,
        enp_threshold=float(enp_threshold),
        rng_seed=rng_seed,
    )


def _crp_probs(particle: Particle, hyper: NIWHyper, n_train: int, position: int) -> np.ndarray:
    """CRP prior over the particle's classes plus the new-class outcome (last)."""
    counts = np.fromiter(
        (st.n for st in particle.classes.values()), dtype=float, count=len(particle.classes)
    )
    denom = hyper.alpha + n_train + position
    return np.append(counts, hyper.alpha) / denom


def _normalize(ensemble: Ensemble, log_w: np.ndarray) -> None:
    top = float(np.max(log_w))
    if top == -np.inf:
        raise DegeneracyError("all particle weights underflowed to zero")
    w = np.exp(log_w - top)
    w /= w.sum()
    for p, wi in zip(ensemble.particles, w):
        p.weight = float(wi)


def pf_propagate(ensemble: Ensemble, x: np.ndarray) -> None:
    """Advance every particle by one record and renormalize the weights.

    Per particle: draw a class from the CRP prior restricted to its own
    classes (one uniform, inverse CDF, new-class outcome last), multiply the
    weight by the predictive density of the chosen class evaluated before its
    statistics absorb the record, then append the assignment.
    """
    x = np.asarray(x, dtype=float)
    i = ensemble.position
    ensemble.last_x = x.copy()
    log_w = np.empty(ensemble.M)
    with np.errstate(divide="ignore"):
        for mi, p in enumerate(ensemble.particles):
            rng = np.random.default_rng([ensemble.rng_seed, STREAM_PROPAGATE, mi, i])
            probs = _crp_probs(p, ensemble.hyper, ensemble.n_train, i)
            k = len(probs) - 1
            idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            idx = min(idx, k)
            if idx == k:
                label = p.birth_label()
                log_lik = studentt_logpdf(x, predictive_params(None, ensemble.hyper))
                p.classes[label] = ClassStats.from_single(label, x)
                p.novel_count += 1
                p.births[label] = i
            else:
                label = list(p.classes)[idx]
                log_lik = studentt_logpdf(
                    x, predictive_params(p.classes[label], ensemble.hyper)
                )
                p.classes[label] = class_stats_update(p.classes[label], x)
            p.assignments.append(label)
            p.last_log_lik = log_lik
            log_w[mi] = np.log(p.weight) + log_lik
    ensemble.position += 1
    _normalize(ensemble, log_w)


def enp(ensemble: Ensemble) -> float:
    """Effective number of particles, 1 / sum of squared weights; in [1, M]."""
    w = ensemble.weights()
    return float(1.0 / np.dot(w, w))


def pf_resample(ensemble: Ensemble, rng: np.random.Generator) -> None:
    """Stratified resampling: one uniform per stratum, deep copies, weights 1/M.

    Stratum j draws u = (j + U_j)/M, so a particle with weight w receives
    between floor(wM) and ceil(wM) copies.
    """
    M = ensemble.M
    w = ensemble.weights()
    cum = np.cumsum(w)
    u = (np.arange(M) + rng.random(M)) / M
    idx = np.minimum(np.searchsorted(cum, u, side="right"), M - 1)
    ensemble.particles = [ensemble.particles[k].copy() for k in idx]
    for p in ensemble.particles:
        p.weight = 1.0 / M


def pf_predict(ensemble: Ensemble, position: int) -> tuple[str, dict[str, float]]:
    """Aggregate particle weights by the label each assigned at the position.

    Labels are compared by name: training labels are global, discovered
    classes by their canonical within-particle birth name. Returns the argmax
    label (ties to the lexicographically smallest) and the normalized
    aggregated distribution.
    """
    if not 0 <= position < ensemble.position:
        raise ConfigError(
            f"position {position} has not been processed (stream is at {ensemble.position})"
        )
    agg: dict[str, float] = {}
    for p in ensemble.particles:
        label = p.assignments[position]
        agg[label] = agg.get(label, 0.0) + p.weight
    total = sum(agg.values())
    dist = {label: mass / total for label, mass in agg.items()}
    best = min(dist, key=lambda label: (-dist[label], label))
    return best, dist


@dataclass(frozen=True)
class StepResult:
    """Outcome of one full stream step."""

    index: int
    label: str
    dist: dict[str, float]
    resampled: bool
    enp_value: float


def pf_step(ensemble: Ensemble, x: np.ndarray) -> StepResult:
    """Propagate, resample if the ENP has collapsed, then predict."""
    pf_propagate(ensemble, x)
    i = ensemble.position - 1
    e = enp(ensemble)
    resampled = e <= ensemble.enp_threshold
    if resampled:
        rng = np.random.default_rng([ensemble.rng_seed, STREAM_RESAMPLE, 0, i])
        pf_resample(ensemble, rng)
    label, dist = pf_predict(ensemble, i)
    return StepResult(index=i, label=label, dist=dist, resampled=resampled, enp_value=e)


@dataclass(eq=False)
class PfRun:
    """Result of a feedback-free run."""

    ensemble: Ensemble
    predictions: list[tuple[str, str]] = field(default_factory=list)


def pf_run(
    train_stats: dict[str, ClassStats],
    hyper: NIWHyper,
    stream: Sequence[tuple[str, np.ndarray]],
    M: int,
    enp_threshold: float | None = None,
    rng_seed: int = 0,
) -> PfRun:
    """Run the filter over (record id, latent vector) pairs without feedback."""
    ensemble = pf_init(M, hyper, train_stats, enp_threshold=enp_threshold, rng_seed=rng_seed)
    run = PfRun(ensemble=ensemble)
    for record_id, x in stream:
        result = pf_step(ensemble, x)
        run.predictions.append((record_id, result.label))
    return run
