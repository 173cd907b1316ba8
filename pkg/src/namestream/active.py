"""Entropy-gated label queries and ensemble reconditioning from true labels.

The aggregated particle posterior for the current record decides whether the
prediction is uncertain enough to ask a human: the gate fires when the entropy
exceeds tau * log|J|, with |J| the number of labels carrying aggregated mass.
A received label rewrites the current record's assignment in every particle,
downdating whichever class was wrongly credited and reweighting each particle
by how well the truth explains the record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dpgmm import ClassStats, class_stats_downdate, class_stats_update
from .dpgmm import predictive_params, studentt_logpdf
from .errors import ConfigError
from .particle import STREAM_RESAMPLE, Ensemble, _normalize, enp, pf_resample

# Labels with aggregated mass at or below this are not counted in |J|;
# without the floor, numerically dead labels would inflate the threshold.
MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class ActiveConfig:
    """Query policy: threshold tau in [0, 1], optional budget, and mode."""

    tau: float = 1.0
    budget: int | None = None
    mode: str = "off"  # off | oracle | interactive

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.mode not in ("off", "oracle", "interactive"):
            raise ConfigError(f"unknown active mode {self.mode!r}")
        if self.budget is not None and self.budget < 0:
            raise ConfigError(f"budget must be >= 0, got {self.budget}")


@dataclass(frozen=True)
class QueryEvent:
    """One uncertainty query, resolved by a label, a skip, or still pending."""

    record_id: str
    index: int
    dist: dict[str, float]
    entropy: float
    threshold: float
    resolution: str = "pending"  # pending | answered | skipped
    answer: str | None = None


def entropy(dist: Mapping[str, float] | np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * log 0 taken as 0."""
    probs = np.asarray(list(dist.values()) if isinstance(dist, Mapping) else dist, dtype=float)
    positive = probs[probs > 0.0]
    return float(-np.sum(positive * np.log(positive)))


def effective_support(dist: Mapping[str, float]) -> int:
    """Number of labels carrying aggregated mass above the floor."""
    return sum(1 for mass in dist.values() if mass > MASS_FLOOR)


def should_query(
    dist: Mapping[str, float],
    config: ActiveConfig,
    queries_used: int = 0,
) -> bool:
    """True when the prediction is uncertain enough to spend a query on.

    The comparison is strict (a tie with the threshold does not query), so
    tau = 1 never queries: entropy can reach log|J| only at the uniform
    distribution, which is exactly the tie. A point-mass posterior has
    |J| = 1, threshold 0, entropy 0, and never queries either.
    """
    if config.mode == "off":
        return False
    if config.budget is not None and queries_used >= config.budget:
        return False
    if config.tau >= 1.0:
        return False
    J = effective_support(dist)
    if J <= 1:
        return False
    return entropy(dist) > config.tau * math.log(J)


def decide_random(p: float, rng: np.random.Generator) -> bool:
    """Random-selection baseline: query with fixed probability p per record."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"random selection probability must be in (0, 1), got {p}")
    return bool(rng.random() < p)


def apply_feedback(ensemble: Ensemble, position: int, true_label: str) -> None:
    """Recondition every particle on the true label of the current record.

    Only the most recently processed record can be corrected; retroactive
    relabeling would invalidate every downstream statistic. Per particle with
    a differing assignment: the wrongly credited class gives the record back
    (and disappears if that emptied it, which can only happen to a class born
    at this very position), the true class absorbs it (created fresh if the
    label is new to the particle), and the particle's weight swaps its last
    likelihood factor for the predictive density of the record under the true
    class given pre-record data. Weights renormalize and the ensemble
    resamples if the effective particle count collapsed.
    """
    current = ensemble.position - 1
    if position != current:
        raise ConfigError(
            f"feedback is only accepted for the current record {current}, got {position}"
        )
    x = ensemble.last_x
    if x is None:
        raise ConfigError("no record has been processed yet")

    log_w = np.empty(ensemble.M)
    with np.errstate(divide="ignore"):
        for mi, p in enumerate(ensemble.particles):
            assigned = p.assignments[position]
            if assigned == true_label:
                log_w[mi] = np.log(p.weight)
                continue
            downdated = class_stats_downdate(p.classes[assigned], x)
            if downdated is None:
                # Emptied: the record being removed was the one that created
                # the class, so it must have been born at this position.
                assert p.births.get(assigned) == position
                del p.classes[assigned]
                del p.births[assigned]
                if assigned == f"novel-{p.novel_count}":
                    p.novel_count -= 1
            else:
                p.classes[assigned] = downdated
            if true_label in p.classes:
                new_log_lik = studentt_logpdf(
                    x, predictive_params(p.classes[true_label], ensemble.hyper)
                )
                p.classes[true_label] = class_stats_update(p.classes[true_label], x)
            else:
                # A brand-new identity named by the user becomes a class under
                # its literal label; canonical birth order is not consumed.
                new_log_lik = studentt_logpdf(x, predictive_params(None, ensemble.hyper))
                p.classes[true_label] = ClassStats.from_single(true_label, x)
                p.births[true_label] = position
            p.assignments[position] = true_label
            log_w[mi] = np.log(p.weight) + (new_log_lik - p.last_log_lik)
            p.last_log_lik = new_log_lik

    _normalize(ensemble, log_w)
    if enp(ensemble) <= ensemble.enp_threshold:
        rng = np.random.default_rng([ensemble.rng_seed, STREAM_RESAMPLE, 1, position])
        pf_resample(ensemble, rng)
