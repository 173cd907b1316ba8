"""One-pass Gibbs sampler: sample each record's class from the full posterior.

Each online record is assigned exactly once, by drawing from the normalized
posterior over existing classes plus a new one, and the chosen class's
statistics absorb the record immediately (self-training on its own
predictions). There is no revisiting of past assignments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dpgmm import ModelState, class_stats_update, posterior_over_classes


@dataclass(eq=False)
class GibbsRun:
    """Result of one pass: the mutated model and the ordered predictions."""

    model: ModelState
    predictions: list[tuple[str, str]] = field(default_factory=list)
    rng_seed: int = 0


def gibbs_step(
    model: ModelState,
    x: np.ndarray,
    rng: np.random.Generator,
    map_mode: bool = False,
) -> str:
    """Assign one record and fold it into the model; returns the label.

    The categorical draw consumes exactly one uniform: inverse CDF over the
    posterior in outcome order (existing classes in model order, then the
    new-class outcome last). map_mode replaces the draw with an argmax whose
    ties go to the lexicographically smallest label.
    """
    posterior = posterior_over_classes(x, model)
    k = len(posterior.labels)
    if map_mode:
        names = list(posterior.labels) + [model.novel_label()]
        best = float(np.max(posterior.probs))
        tied = [i for i in range(k + 1) if posterior.probs[i] == best]
        idx = min(tied, key=lambda i: names[i])
    else:
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(posterior.probs), u, side="right"))
        idx = min(idx, k)
    if idx == k:
        label = model.add_novel(x)
    else:
        label = posterior.labels[idx]
        model.classes[label] = class_stats_update(model.classes[label], x)
    model.n_online_seen += 1
    return label


def gibbs_run(
    model: ModelState,
    stream: Sequence[tuple[str, np.ndarray]],
    rng_seed: int,
    map_mode: bool = False,
    start_position: int = 0,
) -> GibbsRun:
    """Run the sampler over (record id, latent vector) pairs in stream order.

    Record i draws from its own substream seeded by (rng_seed, i), so replays
    and mid-stream resumes reproduce the run bit for bit. start_position is
    the global index of the first stream element, for resumed runs.
    """
    run = GibbsRun(model=model, rng_seed=rng_seed)
    for offset, (record_id, x) in enumerate(stream):
        rng = np.random.default_rng([rng_seed, start_position + offset])
        label = gibbs_step(model, x, rng, map_mode=map_mode)
        run.predictions.append((record_id, label))
    return run
