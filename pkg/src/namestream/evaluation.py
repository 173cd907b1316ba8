"""Metrics, novel-label alignment, the synthetic benchmark, and experiment runs.

Scoring an open-set classifier needs a correspondence between discovered
labels and true emerging classes; align_labels builds one greedily by
descending record overlap (deterministic, ties broken lexicographically) and
every report states that rule in its header so results are self-describing.

The synthetic generator is the reproducible oracle for the experiment-level
claims: Gaussian clusters in h dimensions with power-law class sizes,
configurable separation, and emerging classes that enter near the training
centroid, the way sparse early records of unseen people land after a
non-negative projection.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .active import ActiveConfig, apply_feedback, decide_random, should_query
from .dpgmm import ModelState, estimate_hyperparams
from .errors import ConfigError, DataError
from .gibbs import gibbs_run
from .nnmf import nnls_project, nnmf_fit
from .particle import STREAM_QUERY, pf_init, pf_step
from .records import RawRecord, build_vocabulary, featurize_matrix, temporal_split

ALIGNMENT_RULE = (
    "discovered labels matched to unclaimed non-training true labels greedily "
    "by descending record overlap, ties broken lexicographically"
)


# ---------------------------------------------------------------------------
# Alignment and metrics


def align_labels(
    pred: Sequence[str],
    truth: Sequence[str],
    train_labels: Sequence[str] = (),
) -> dict[str, str | None]:
    """Map each predicted label to a true label, or to None when unmatched.

    Training labels map to themselves. Every other predicted label competes
    for the non-training true labels by overlap count; the mapping is
    injective on matched pairs.
    """
    if len(pred) != len(truth):
        raise DataError("prediction and truth sequences differ in length")
    train = set(train_labels)
    mapping: dict[str, str | None] = {}
    for label in set(pred):
        if label in train:
            mapping[label] = label
    novel_pred = sorted(set(pred) - train)
    novel_truth = {t for t in truth if t not in train}
    overlap: dict[tuple[str, str], int] = {}
    for p, t in zip(pred, truth):
        if p in train or t not in novel_truth:
            continue
        overlap[(p, t)] = overlap.get((p, t), 0) + 1
    claimed: set[str] = set()
    for (p, t), count in sorted(overlap.items(), key=lambda kv: (-kv[1], kv[0])):
        if count <= 0 or p in mapping or t in claimed:
            continue
        mapping[p] = t
        claimed.add(t)
    for p in novel_pred:
        mapping.setdefault(p, None)
    return mapping


def mean_f1(
    pred: Sequence[str],
    truth: Sequence[str],
    alignment: dict[str, str | None] | None = None,
    train_labels: Sequence[str] = (),
) -> float:
    """Unweighted mean F1 over the distinct true classes present in truth."""
    if not truth:
        raise DataError("mean_f1 needs a non-empty truth sequence")
    if alignment is None:
        alignment = align_labels(pred, truth, train_labels)
    mapped = [alignment.get(p) for p in pred]
    scores = []
    for c in sorted(set(truth)):
        tp = sum(1 for m, t in zip(mapped, truth) if m == c and t == c)
        n_pred = sum(1 for m in mapped if m == c)
        n_true = sum(1 for t in truth if t == c)
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_true
        f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
        scores.append(f1)
    return float(np.mean(scores))


def count_distinct(pred: Sequence[str]) -> int:
    """Number of distinct labels with at least one assigned record."""
    return len(set(pred))


# ---------------------------------------------------------------------------
# Synthetic benchmark


@dataclass(frozen=True)
class SyntheticConfig:
    """Benchmark geometry. Defaults are the standard suite; HARD_SYNTHETIC is
    the low-margin variant used to give label feedback headroom to matter."""

    h: int = 5
    n_known: int = 3
    n_emerging: int = 2
    n_train: int = 50
    n_stream: int = 50
    separation: float = 10.0
    exponent: float = 0.25
    emerging_offset: float = 0.15
    emerging_scale: float = 0.02
    emerging_count: int = 1

    def __post_init__(self):
        if self.h < self.n_known + self.n_emerging:
            raise ConfigError(
                "h must be at least n_known + n_emerging so every class mean "
                "gets its own axis"
            )
        if self.n_train < 2 * self.n_known:
            raise ConfigError("n_train must allow 2 records per known class")
        emerging_total = self.n_emerging * self.emerging_count
        if self.n_stream < emerging_total + self.n_known:
            raise ConfigError("n_stream too small for the configured classes")


HARD_SYNTHETIC = SyntheticConfig(
    separation=5.0,
    exponent=1.0,
    emerging_offset=0.45,
    emerging_scale=0.12,
    emerging_count=4,
)


def power_counts(total: int, k: int, exponent: float, floor: int) -> np.ndarray:
    """Split total into k class sizes proportional to rank^(-exponent).

    Rounded to integers, clipped to the floor, then nudged (largest class
    down, rank-0 class up) until the sizes sum to the total exactly.
    """
    if total < k * floor:
        raise ConfigError(f"cannot split {total} records into {k} classes of >= {floor}")
    ranks = np.arange(1, k + 1, dtype=float)
    w = ranks ** (-exponent)
    w /= w.sum()
    counts = np.maximum(np.rint(w * total).astype(int), floor)
    while counts.sum() > total:
        counts[int(np.argmax(counts))] -= 1
    while counts.sum() < total:
        counts[0] += 1
    return counts


@dataclass(frozen=True)
class PreparedData:
    """Latent-space dataset ready for either engine."""

    train_x: np.ndarray
    train_y: tuple[str, ...]
    stream_x: np.ndarray
    stream_y: tuple[str, ...] | None
    train_ids: tuple[str, ...] = ()
    stream_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.train_ids:
            object.__setattr__(
                self, "train_ids", tuple(f"t{i}" for i in range(len(self.train_y)))
            )
        if not self.stream_ids:
            object.__setattr__(
                self, "stream_ids", tuple(f"s{i}" for i in range(self.stream_x.shape[0]))
            )


def make_synthetic(config: SyntheticConfig, seed: int) -> PreparedData:
    """Draw one benchmark dataset.

    Known classes sit on their own axes at pairwise distance `separation` (in
    within-class sigma units, sigma = 1). Emerging classes appear only in the
    stream: tight clusters of emerging_count records each, offset from the
    empirical training centroid along axes no known class uses.
    """
    rng = np.random.default_rng(seed)
    h, k = config.h, config.n_known
    radius = config.separation / np.sqrt(2.0)
    known_means = [radius * np.eye(h)[c] for c in range(k)]
    known_labels = [f"person-{c}" for c in range(k)]

    train_counts = power_counts(config.n_train, k, config.exponent, floor=2)
    train_x_parts, train_y = [], []
    for c in range(k):
        train_x_parts.append(known_means[c] + rng.standard_normal((train_counts[c], h)))
        train_y.extend([known_labels[c]] * train_counts[c])
    train_x = np.vstack(train_x_parts)

    emerging_total = config.n_emerging * config.emerging_count
    stream_counts = power_counts(
        config.n_stream - emerging_total, k, config.exponent, floor=1
    )
    stream_x_parts, stream_y = [], []
    for c in range(k):
        stream_x_parts.append(known_means[c] + rng.standard_normal((stream_counts[c], h)))
        stream_y.extend([known_labels[c]] * stream_counts[c])

    centroid = train_x.mean(axis=0)
    for e in range(config.n_emerging):
        mean = centroid + config.emerging_offset * np.eye(h)[k + e]
        stream_x_parts.append(
            mean + config.emerging_scale * rng.standard_normal((config.emerging_count, h))
        )
        stream_y.extend([f"emerg-{e}"] * config.emerging_count)

    stream_x = np.vstack(stream_x_parts)
    order = rng.permutation(stream_x.shape[0])
    return PreparedData(
        train_x=train_x,
        train_y=tuple(train_y),
        stream_x=stream_x[order],
        stream_y=tuple(np.array(stream_y, dtype=object)[order]),
    )


def prepare_from_records(
    records: Sequence[RawRecord],
    T0: int,
    h: int,
    nnmf_iters: int = 500,
    nnmf_tol: float = 1e-9,
    seed: int = 0,
) -> PreparedData:
    """Full featurization pipeline: split, vocabulary, factorization, projection."""
    split = temporal_split(records, T0)
    if not split.train:
        raise DataError("temporal split produced an empty training partition")
    if any(r.true_label is None for r in split.train):
        raise DataError("all training records must carry true_label")
    vocab = build_vocabulary(split.train)
    X_train = featurize_matrix(split.train, vocab)
    result = nnmf_fit(X_train, h, max_iters=nnmf_iters, tol=nnmf_tol, seed=seed)
    X_stream = featurize_matrix(split.test, vocab)
    latents = np.array([nnls_project(row, result.basis) for row in X_stream])
    stream_y = tuple(r.true_label for r in split.test)
    return PreparedData(
        train_x=result.coefficients,
        train_y=tuple(r.true_label for r in split.train),
        stream_x=latents if len(split.test) else np.zeros((0, h)),
        stream_y=stream_y if all(y is not None for y in stream_y) else None,
        train_ids=tuple(r.id for r in split.train),
        stream_ids=tuple(r.id for r in split.test),
    )


# ---------------------------------------------------------------------------
# Experiment harness


@dataclass(frozen=True)
class ExperimentConfig:
    """Engine-facing knobs for one experiment arm."""

    alpha: float = 100.0
    kappa: float = 100.0
    m_offset: float = 100.0
    M: int = 100
    enp_threshold: float | None = None
    tau: float = 1.0
    feedback: str = "off"  # off | oracle | random
    p_random: float = 0.1
    map_mode: bool = False
    base_seed: int = 0

    def __post_init__(self):
        if self.feedback not in ("off", "oracle", "random"):
            raise ConfigError(f"unknown feedback mode {self.feedback!r}")


@dataclass(frozen=True)
class RunResult:
    seed: int
    mean_f1: float
    distinct: int
    queries: int
    runtime_s: float


@dataclass(eq=False)
class ExperimentReport:
    """Aggregated scores of R seeded runs; header states the alignment rule."""

    engine: str
    results: list[RunResult] = field(default_factory=list)
    header: str = f"alignment: {ALIGNMENT_RULE}"

    @property
    def f1_values(self) -> np.ndarray:
        return np.array([r.mean_f1 for r in self.results])

    @property
    def f1_mean(self) -> float:
        return float(self.f1_values.mean())

    @property
    def f1_std(self) -> float:
        return float(self.f1_values.std())

    @property
    def distinct_mean(self) -> float:
        return float(np.mean([r.distinct for r in self.results]))

    @property
    def distinct_std(self) -> float:
        return float(np.std([r.distinct for r in self.results]))

    @property
    def total_queries(self) -> int:
        return int(sum(r.queries for r in self.results))

    @property
    def runtime_s(self) -> float:
        return float(sum(r.runtime_s for r in self.results))

    def to_text(self) -> str:
        lines = [
            f"# {self.header}",
            f"engine={self.engine} runs={len(self.results)}",
            f"mean-F1 {self.f1_mean:.4f} ({self.f1_std:.4f})",
            f"distinct {self.distinct_mean:.2f} ({self.distinct_std:.2f})",
            f"queries {self.total_queries} runtime {self.runtime_s:.2f}s",
        ]
        return "\n".join(lines)


def run_one(
    data: PreparedData,
    engine: str,
    config: ExperimentConfig,
    seed: int,
) -> RunResult:
    """One seeded pass of the chosen engine over a prepared dataset."""
    started = time.perf_counter()
    hyper = estimate_hyperparams(
        data.train_x,
        list(data.train_y),
        alpha=config.alpha,
        kappa=config.kappa,
        m_offset=config.m_offset,
    )
    truth = list(data.stream_y) if data.stream_y is not None else None
    stream = list(zip(data.stream_ids, data.stream_x))
    queries = 0
    if engine == "gibbs":
        if config.feedback != "off":
            raise ConfigError("label feedback is a particle-filter feature")
        model = ModelState.from_training(data.train_x, list(data.train_y), hyper)
        predictions = [label for _, label in gibbs_run(model, stream, seed, config.map_mode).predictions]
    elif engine == "pf":
        train_model = ModelState.from_training(data.train_x, list(data.train_y), hyper)
        ensemble = pf_init(
            config.M,
            hyper,
            train_model.classes,
            enp_threshold=config.enp_threshold,
            rng_seed=seed,
        )
        active = ActiveConfig(tau=config.tau, mode="oracle") if config.feedback == "oracle" else None
        predictions = []
        for i, (_, x) in enumerate(stream):
            result = pf_step(ensemble, x)
            label = result.label
            if truth is not None and config.feedback == "oracle":
                if should_query(result.dist, active, queries):
                    apply_feedback(ensemble, i, truth[i])
                    label = truth[i]
                    queries += 1
            elif truth is not None and config.feedback == "random":
                rng = np.random.default_rng([seed, STREAM_QUERY, 0, i])
                if decide_random(config.p_random, rng):
                    apply_feedback(ensemble, i, truth[i])
                    label = truth[i]
                    queries += 1
            predictions.append(label)
    else:
        raise ConfigError(f"unknown engine {engine!r}")

    runtime = time.perf_counter() - started
    if truth is None:
        raise DataError("cannot score a stream without true labels")
    score = mean_f1(predictions, truth, train_labels=set(data.train_y))
    return RunResult(
        seed=seed,
        mean_f1=score,
        distinct=count_distinct(predictions),
        queries=queries,
        runtime_s=runtime,
    )


Dataset = SyntheticConfig | PreparedData


def _materialize(dataset: Dataset, seed: int) -> PreparedData:
    if isinstance(dataset, SyntheticConfig):
        return make_synthetic(dataset, seed)
    return dataset


def run_experiment(
    dataset: Dataset,
    engine: str,
    config: ExperimentConfig,
    runs: int,
) -> ExperimentReport:
    """R independent seeded runs; synthetic datasets are redrawn per seed so
    different engines with the same config see paired data."""
    report = ExperimentReport(engine=engine)
    for r in range(runs):
        seed = config.base_seed + r
        data = _materialize(dataset, seed)
        report.results.append(run_one(data, engine, config, seed))
    return report


SWEEPABLE = ("h", "alpha", "M", "tau", "T0")


@dataclass(eq=False)
class SweepResult:
    parameter: str
    values: list[float]
    reports: list[ExperimentReport]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                "parameter,value,engine,runs,f1_mean,f1_std,"
                "distinct_mean,distinct_std,queries,runtime_s\n"
            )
            for value, rep in zip(self.values, self.reports):
                fh.write(
                    f"{self.parameter},{value},{rep.engine},{len(rep.results)},"
                    f"{rep.f1_mean:.6f},{rep.f1_std:.6f},{rep.distinct_mean:.4f},"
                    f"{rep.distinct_std:.4f},{rep.total_queries},{rep.runtime_s:.3f}\n"
                )


def sweep(
    dataset: Dataset,
    parameter: str,
    values: Sequence[float],
    engine: str,
    config: ExperimentConfig,
    runs: int,
) -> SweepResult:
    """One report per parameter value, as a plot-ready table."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"parameter must be one of {SWEEPABLE}, got {parameter!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    reports = []
    for value in values:
        ds, cfg = dataset, config
        if parameter == "h":
            if not isinstance(dataset, SyntheticConfig):
                raise ConfigError("h sweeps need the synthetic benchmark")
            ds = replace(dataset, h=int(value))
        elif parameter == "alpha":
            cfg = replace(config, alpha=float(value))
        elif parameter == "M":
            cfg = replace(config, M=int(value))
        elif parameter == "tau":
            cfg = replace(config, tau=float(value))
        elif parameter == "T0":
            raise ConfigError("T0 sweeps need a record dataset; use sweep_records")
        reports.append(run_experiment(ds, engine, cfg, runs))
    return SweepResult(parameter=parameter, values=[float(v) for v in values], reports=reports)


def sweep_records(
    records: Sequence[RawRecord],
    values: Sequence[int],
    h: int,
    engine: str,
    config: ExperimentConfig,
    runs: int,
    nnmf_seed: int = 0,
) -> SweepResult:
    """T0 sweep: re-split and re-prepare the record dataset per value."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    reports = []
    for T0 in values:
        data = prepare_from_records(records, int(T0), h, seed=nnmf_seed)
        reports.append(run_experiment(data, engine, config, runs))
    return SweepResult(parameter="T0", values=[float(v) for v in values], reports=reports)
