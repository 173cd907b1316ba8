"""Snapshot and event-log persistence.

Snapshots are single JSON documents (model state or full particle ensemble)
that round-trip bit-exactly: floats are serialized with Python's shortest
round-trip repr, so a restored engine continues the stream with identical
arithmetic. The event log is JSONL with a self-contained header (prior,
training stats, engine settings) so a log alone can be replayed and checked
against the predictions it records.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .dpgmm import ClassStats, ModelState, NIWHyper
from .errors import DataError
from .particle import Ensemble, Particle, pf_init

SNAPSHOT_FORMAT = "namestream-snapshot"
EVENTS_FORMAT = "namestream-events"
VERSION = 1


# ---------------------------------------------------------------------------
# JSON helpers


def _hyper_to_json(hyper: NIWHyper) -> dict:
    return {
        "mu0": hyper.mu0.tolist(),
        "sigma0": hyper.sigma0.tolist(),
        "kappa": hyper.kappa,
        "m": hyper.m,
        "alpha": hyper.alpha,
        "h": hyper.h,
    }


def _hyper_from_json(obj: dict) -> NIWHyper:
    try:
        return NIWHyper(
            mu0=np.array(obj["mu0"], dtype=float),
            sigma0=np.array(obj["sigma0"], dtype=float),
            kappa=float(obj["kappa"]),
            m=float(obj["m"]),
            alpha=float(obj["alpha"]),
            h=int(obj["h"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed prior block: {exc}") from exc


def _stats_to_json(stats: ClassStats) -> dict:
    return {
        "label": stats.label,
        "n": stats.n,
        "mean": stats.mean.tolist(),
        "scatter": stats.scatter.tolist(),
    }


def _stats_from_json(obj: dict) -> ClassStats:
    try:
        return ClassStats(
            label=str(obj["label"]),
            n=int(obj["n"]),
            mean=np.array(obj["mean"], dtype=float),
            scatter=np.array(obj["scatter"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed class stats block: {exc}") from exc


def _float_or_null(value: float):
    return None if math.isnan(value) else value


def _nan_or_float(value) -> float:
    return math.nan if value is None else float(value)


# ---------------------------------------------------------------------------
# Model snapshots


def model_to_json(model: ModelState) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": VERSION,
        "kind": "model",
        "hyper": _hyper_to_json(model.hyper),
        "classes": [_stats_to_json(s) for s in model.classes.values()],
        "n_train": model.n_train,
        "n_online_seen": model.n_online_seen,
        "next_novel_index": model.next_novel_index,
    }


def model_from_json(obj: dict) -> ModelState:
    _check_envelope(obj, "model")
    hyper = _hyper_from_json(obj.get("hyper", {}))
    try:
        classes = {}
        for block in obj["classes"]:
            stats = _stats_from_json(block)
            classes[stats.label] = stats
        return ModelState(
            hyper=hyper,
            classes=classes,
            n_train=int(obj["n_train"]),
            n_online_seen=int(obj["n_online_seen"]),
            next_novel_index=int(obj["next_novel_index"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model snapshot: {exc}") from exc


# ---------------------------------------------------------------------------
# Ensemble snapshots


def _particle_to_json(p: Particle) -> dict:
    return {
        "weight": p.weight,
        "assignments": list(p.assignments),
        "classes": [_stats_to_json(s) for s in p.classes.values()],
        "novel_count": p.novel_count,
        "births": dict(p.births),
        "last_log_lik": _float_or_null(p.last_log_lik),
    }


def _particle_from_json(obj: dict) -> Particle:
    try:
        classes = {}
        for block in obj["classes"]:
            stats = _stats_from_json(block)
            classes[stats.label] = stats
        return Particle(
            weight=float(obj["weight"]),
            assignments=[str(a) for a in obj["assignments"]],
            classes=classes,
            novel_count=int(obj["novel_count"]),
            births={str(k): int(v) for k, v in obj["births"].items()},
            last_log_lik=_nan_or_float(obj["last_log_lik"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed particle block: {exc}") from exc


def ensemble_to_json(ensemble: Ensemble) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": VERSION,
        "kind": "ensemble",
        "hyper": _hyper_to_json(ensemble.hyper),
        "n_train": ensemble.n_train,
        "enp_threshold": ensemble.enp_threshold,
        "rng_seed": ensemble.rng_seed,
        "position": ensemble.position,
        "last_x": None if ensemble.last_x is None else ensemble.last_x.tolist(),
        "particles": [_particle_to_json(p) for p in ensemble.particles],
    }


def ensemble_from_json(obj: dict) -> Ensemble:
    _check_envelope(obj, "ensemble")
    hyper = _hyper_from_json(obj.get("hyper", {}))
    try:
        particles = [_particle_from_json(block) for block in obj["particles"]]
        if not particles:
            raise DataError("ensemble snapshot holds no particles")
        ensemble = Ensemble(
            particles=particles,
            hyper=hyper,
            n_train=int(obj["n_train"]),
            enp_threshold=float(obj["enp_threshold"]),
            rng_seed=int(obj["rng_seed"]),
        )
        ensemble.position = int(obj["position"])
        last_x = obj["last_x"]
        ensemble.last_x = None if last_x is None else np.array(last_x, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed ensemble snapshot: {exc}") from exc
    return ensemble


def _check_envelope(obj: dict, kind: str) -> None:
    if not isinstance(obj, dict):
        raise DataError("snapshot must be a JSON object")
    if obj.get("format") != SNAPSHOT_FORMAT:
        raise DataError(f"not a {SNAPSHOT_FORMAT} document")
    if obj.get("version") != VERSION:
        raise DataError(f"unsupported snapshot version {obj.get('version')!r}")
    if obj.get("kind") != kind:
        raise DataError(f"snapshot kind {obj.get('kind')!r}, expected {kind!r}")


def save_snapshot(obj: ModelState | Ensemble, path) -> None:
    if isinstance(obj, ModelState):
        doc = model_to_json(obj)
    elif isinstance(obj, Ensemble):
        doc = ensemble_to_json(obj)
    else:
        raise DataError(f"cannot snapshot object of type {type(obj).__name__}")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, allow_nan=False)
    os.replace(tmp, path)


def load_snapshot(path) -> ModelState | Ensemble:
    """Parse and validate fully before constructing; a truncated or corrupt
    file raises DataError and leaves no partial state behind."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"snapshot not found: {path}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"corrupt snapshot {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataError("snapshot must be a JSON object")
    kind = obj.get("kind")
    if kind == "model":
        return model_from_json(obj)
    if kind == "ensemble":
        return ensemble_from_json(obj)
    raise DataError(f"unknown snapshot kind {kind!r}")


# ---------------------------------------------------------------------------
# Event log


class EventLog:
    """Append-only JSONL audit trail. The header makes the file
    self-contained: engine, seed, prior, and training statistics."""

    def __init__(self, path, header: dict | None = None):
        self.path = path
        exists = os.path.exists(path) and os.path.getsize(path) > 0
        if header is not None and exists:
            raise DataError(f"event log {path} already exists")
        if header is None and not exists:
            raise DataError(f"event log {path} does not exist; pass a header to start one")
        self._fh = open(path, "a", encoding="utf-8")
        if header is not None:
            doc = {"format": EVENTS_FORMAT, "version": VERSION, **header}
            self._write(doc)

    def _write(self, obj: dict) -> None:
        self._fh.write(json.dumps(obj, allow_nan=False) + "\n")
        self._fh.flush()

    def append(self, event: str, **fields) -> None:
        self._write({"event": event, **fields})

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def start_event_log(
    path,
    engine: str,
    seed: int,
    hyper: NIWHyper,
    train_stats: dict[str, ClassStats],
    M: int | None = None,
    enp_threshold: float | None = None,
) -> EventLog:
    header = {
        "engine": engine,
        "seed": seed,
        "hyper": _hyper_to_json(hyper),
        "train_classes": [_stats_to_json(s) for s in train_stats.values()],
    }
    if M is not None:
        header["M"] = M
    if enp_threshold is not None:
        header["enp_threshold"] = enp_threshold
    return EventLog(path, header=header)


def read_events(path) -> tuple[dict, list[dict]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
    except FileNotFoundError as exc:
        raise DataError(f"event log not found: {path}") from exc
    if not lines:
        raise DataError(f"event log {path} is empty")
    parsed = []
    for lineno, line in enumerate(lines, start=1):
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: corrupt event line: {exc}") from exc
    header, events = parsed[0], parsed[1:]
    if header.get("format") != EVENTS_FORMAT or header.get("version") != VERSION:
        raise DataError(f"{path}: not a {EVENTS_FORMAT} v{VERSION} file")
    return header, events


@dataclass(frozen=True)
class ReplayResult:
    n_records: int
    mismatches: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _iter_records(events: list[dict]) -> Iterator[dict]:
    for event in events:
        if event.get("event") == "record":
            yield event


def replay_events(path) -> ReplayResult:
    """Re-run the logged stream from the header's initial state and compare
    the recomputed predictions against the logged ones, index by index."""
    from .active import apply_feedback
    from .gibbs import gibbs_step
    from .particle import pf_step

    header, events = read_events(path)
    hyper = _hyper_from_json(header.get("hyper", {}))
    train_stats = {}
    for block in header.get("train_classes", []):
        stats = _stats_from_json(block)
        train_stats[stats.label] = stats
    engine = header.get("engine")
    seed = int(header.get("seed", 0))

    feedback_by_index: dict[int, str] = {}
    for event in events:
        if event.get("event") == "feedback":
            feedback_by_index[int(event["index"])] = str(event["label"])

    mismatches = []
    n_records = 0
    if engine == "gibbs":
        model = ModelState(
            hyper=hyper,
            classes={label: stats.copy() for label, stats in train_stats.items()},
            n_train=sum(s.n for s in train_stats.values()),
        )
        for event in _iter_records(events):
            i = int(event["index"])
            x = np.array(event["x"], dtype=float)
            rng = np.random.default_rng([seed, i])
            label = gibbs_step(model, x, rng)
            n_records += 1
            if label != event["prediction"]:
                mismatches.append(i)
    elif engine == "pf":
        ensemble = pf_init(
            int(header.get("M", 100)),
            hyper,
            train_stats,
            enp_threshold=header.get("enp_threshold"),
            rng_seed=seed,
        )
        for event in _iter_records(events):
            i = int(event["index"])
            x = np.array(event["x"], dtype=float)
            result = pf_step(ensemble, x)
            n_records += 1
            if result.label != event["prediction"]:
                mismatches.append(i)
            if i in feedback_by_index:
                apply_feedback(ensemble, i, feedback_by_index[i])
    else:
        raise DataError(f"event log names unknown engine {engine!r}")
    return ReplayResult(n_records=n_records, mismatches=tuple(mismatches))
