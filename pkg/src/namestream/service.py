"""HTTP streaming service: one record in, one assignment out, with the
query/label loop exposed as plain JSON endpoints.

The protocol is strict single-writer: while a query is pending and not past
its deadline, further records are refused with 409 so the human answer can
still change the model before more evidence arrives. Expiry is lazy; the
next POST /records resolves an overdue query as expired and proceeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .active import ActiveConfig, apply_feedback, effective_support, entropy, should_query
from .dpgmm import NIWHyper
from .errors import ConfigError, DataError, NamestreamError
from .evaluation import count_distinct, mean_f1
from .nnmf import nnls_project
from .particle import Ensemble, enp, pf_step
from .records import FeatureVocabulary, RawRecord, featurize
from .persist import save_snapshot

REPRESENTATIVES_PER_CANDIDATE = 3


@dataclass(eq=False)
class ServiceSettings:
    tau: float = 0.35
    budget: int | None = None
    mode: str = "interactive"  # off | interactive
    query_timeout_s: float | None = 300.0

    def __post_init__(self):
        if self.mode not in ("off", "interactive"):
            raise ConfigError(f"service mode must be off or interactive, got {self.mode!r}")
        if self.query_timeout_s is not None and self.query_timeout_s <= 0:
            raise ConfigError("query_timeout_s must be positive when set")


class StaleQueryError(NamestreamError):
    """Label submitted for a query that is not the pending one."""

    exit_code = 1


class QueryPendingError(NamestreamError):
    """Record submitted while an unexpired query awaits its answer."""

    exit_code = 1


class StreamService:
    """Single-stream engine behind the HTTP surface.

    Bibliographic bodies are featurized through the prepared vocabulary and
    basis; bodies carrying a precomputed latent vector skip that path.
    """

    def __init__(
        self,
        ensemble: Ensemble,
        settings: ServiceSettings | None = None,
        vocab: FeatureVocabulary | None = None,
        basis: np.ndarray | None = None,
        train_labels: tuple[str, ...] = (),
        event_log=None,
        clock=time.monotonic,
    ):
        import threading

        self.ensemble = ensemble
        self.settings = settings or ServiceSettings()
        self.vocab = vocab
        self.basis = basis
        self.train_labels = tuple(train_labels)
        self.event_log = event_log
        self.clock = clock
        self._lock = threading.Lock()
        self._active = ActiveConfig(
            tau=self.settings.tau,
            budget=self.settings.budget,
            mode="interactive" if self.settings.mode == "interactive" else "off",
        )
        self._pending: dict | None = None
        self._predictions: list[str] = []
        self._truths: list[str | None] = []
        self._record_ids: list[str] = []
        self._recent_by_label: dict[str, list[str]] = {}
        self.queries_issued = 0
        self.queries_answered = 0
        self.queries_skipped = 0

    # -- body handling ------------------------------------------------------

    def _latent_from_body(
        self, body: dict
    ) -> tuple[str, np.ndarray, str | None, dict | None]:
        if not isinstance(body, dict):
            raise DataError("record body must be a JSON object")
        record_id = body.get("id")
        if not isinstance(record_id, str) or not record_id:
            raise DataError("record body needs a non-empty string id")
        truth = body.get("true_label")
        if truth is not None and not isinstance(truth, str):
            raise DataError("true_label must be a string when present")
        if "latent" in body:
            latent = body["latent"]
            if not isinstance(latent, list) or not latent:
                raise DataError("latent must be a non-empty array of numbers")
            try:
                x = np.array(latent, dtype=float)
            except (TypeError, ValueError) as exc:
                raise DataError(f"latent vector is not numeric: {exc}") from exc
            if x.ndim != 1 or x.shape[0] != self.ensemble.hyper.h:
                raise DataError(
                    f"latent vector must have length {self.ensemble.hyper.h}"
                )
            if not np.all(np.isfinite(x)):
                raise DataError("latent vector holds non-finite values")
            return record_id, x, truth, None
        if self.vocab is None or self.basis is None:
            raise DataError(
                "service was started without a vocabulary and basis; "
                "send records with a precomputed latent vector"
            )
        try:
            record = RawRecord(
                id=record_id,
                name_ref=str(body["name_ref"]),
                year=int(body["year"]),
                coauthors=frozenset(str(c) for c in body["coauthors"]),
                title=str(body["title"]),
                venue=str(body["venue"]),
                true_label=truth,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed bibliographic record: {exc}") from exc
        dense = featurize(record, self.vocab).to_dense()
        shown = {
            "title": record.title,
            "coauthors": sorted(record.coauthors),
            "venue": record.venue,
            "year": record.year,
        }
        return record_id, nnls_project(dense, self.basis), truth, shown

    # -- query lifecycle ----------------------------------------------------

    def _deadline_passed(self) -> bool:
        deadline = self._pending.get("deadline")
        return deadline is not None and self.clock() >= deadline

    def _expire_pending(self) -> None:
        index = self._pending["index"]
        self._pending = None
        self.queries_skipped += 1
        if self.event_log is not None:
            self.event_log.append("query-skipped", index=index)

    def _maybe_resolve_pending(self) -> None:
        if self._pending is None:
            return
        if self._deadline_passed():
            self._expire_pending()
            return
        raise QueryPendingError(
            f"query for record index {self._pending['index']} is awaiting a label"
        )

    def _issue_query(
        self,
        record_id: str,
        index: int,
        dist: dict[str, float],
        shown: dict | None = None,
    ) -> dict:
        h_value = entropy(dist)
        support = effective_support(dist)
        threshold = self._active.tau * math.log(support) if support > 1 else math.inf
        deadline = None
        if self.settings.query_timeout_s is not None:
            deadline = self.clock() + self.settings.query_timeout_s
        self._pending = {
            "record_id": record_id,
            "index": index,
            "dist": dict(dist),
            "entropy": h_value,
            "threshold": threshold,
            "deadline": deadline,
            "record": shown,
        }
        self.queries_issued += 1
        if self.event_log is not None:
            self.event_log.append("query", index=index, entropy=h_value)
        return self._query_view()

    def _query_view(self) -> dict | None:
        if self._pending is None:
            return None
        pending = self._pending
        candidates = []
        ordered = sorted(pending["dist"].items(), key=lambda kv: (-kv[1], kv[0]))
        for label, mass in ordered:
            recent = self._recent_by_label.get(label, [])
            candidates.append(
                {
                    "label": label,
                    "posterior": mass,
                    "representatives": list(reversed(recent[-REPRESENTATIVES_PER_CANDIDATE:])),
                }
            )
        remaining = None
        if pending["deadline"] is not None:
            remaining = max(0.0, pending["deadline"] - self.clock())
        return {
            "record_id": pending["record_id"],
            "index": pending["index"],
            "entropy": pending["entropy"],
            "threshold": pending["threshold"],
            "seconds_remaining": remaining,
            "record": pending.get("record"),
            "candidates": candidates,
        }

    # -- endpoints ----------------------------------------------------------

    def process(self, body: dict) -> dict:
        with self._lock:
            self._maybe_resolve_pending()
            record_id, x, truth, shown = self._latent_from_body(body)
            result = pf_step(self.ensemble, x)
            index = result.index
            self._predictions.append(result.label)
            self._truths.append(truth)
            self._record_ids.append(record_id)
            self._recent_by_label.setdefault(result.label, []).append(record_id)
            if self.event_log is not None:
                self.event_log.append(
                    "record",
                    index=index,
                    id=record_id,
                    x=[float(v) for v in x],
                    prediction=result.label,
                    posterior={k: float(v) for k, v in result.dist.items()},
                )
                if result.resampled:
                    self.event_log.append("resample", index=index)
            response = {
                "index": index,
                "prediction": result.label,
                "posterior": result.dist,
                "query": None,
            }
            if should_query(result.dist, self._active, self.queries_issued):
                response["query"] = self._issue_query(record_id, index, result.dist, shown)
            return response

    def pending_query(self) -> dict | None:
        with self._lock:
            return self._query_view()

    def submit_label(self, index, label) -> dict:
        with self._lock:
            if not isinstance(label, str) or not label:
                raise DataError("label must be a non-empty string")
            if not isinstance(index, int) or isinstance(index, bool):
                raise DataError("index must be an integer")
            if self._pending is None:
                raise StaleQueryError("no query is pending")
            if self._deadline_passed():
                self._expire_pending()
                raise StaleQueryError("the pending query expired before the label arrived")
            if index != self._pending["index"]:
                raise StaleQueryError(
                    f"label targets index {index} but the pending query is for "
                    f"index {self._pending['index']}"
                )
            apply_feedback(self.ensemble, index, label)
            self._predictions[index] = label
            self._recent_by_label.setdefault(label, []).append(self._record_ids[index])
            self._pending = None
            self.queries_answered += 1
            if self.event_log is not None:
                self.event_log.append("feedback", index=index, label=label)
            return {"index": index, "label": label, "accepted": True}

    def metrics(self) -> dict:
        with self._lock:
            scored = [
                (p, t) for p, t in zip(self._predictions, self._truths) if t is not None
            ]
            running_f1 = None
            if scored:
                preds, truths = zip(*scored)
                running_f1 = mean_f1(list(preds), list(truths), train_labels=self.train_labels)
            return {
                "records_seen": len(self._predictions),
                "distinct_predicted": count_distinct(self._predictions) if self._predictions else 0,
                "queries": {
                    "issued": self.queries_issued,
                    "answered": self.queries_answered,
                    "skipped": self.queries_skipped,
                },
                "mean_f1": running_f1,
                "enp": enp(self.ensemble) if self.ensemble.particles else None,
            }

    def model_doc(self) -> dict:
        from .persist import ensemble_to_json

        with self._lock:
            doc = ensemble_to_json(self.ensemble)
            doc["settings"] = {
                "tau": self.settings.tau,
                "budget": self.settings.budget,
                "mode": self.settings.mode,
                "query_timeout_s": self.settings.query_timeout_s,
            }
            return doc

    def snapshot(self, path) -> dict:
        with self._lock:
            save_snapshot(self.ensemble, path)
            if self.event_log is not None:
                self.event_log.append("snapshot", path=str(path))
            return {"path": str(path)}


def create_app(service: StreamService, static_dir=None):
    """FastAPI wiring. Routes are registered before any static mount so the
    API always wins; the console is served from / when a build is present."""
    from fastapi import Body, FastAPI
    from fastapi.responses import JSONResponse

    app = FastAPI(title="namestream", docs_url=None, redoc_url=None)

    @app.exception_handler(DataError)
    async def _data_error(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ConfigError)
    async def _config_error(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(StaleQueryError)
    async def _stale(request, exc):
        return JSONResponse(
            status_code=409, content={"error": str(exc), "reason": "stale-query"}
        )

    @app.exception_handler(QueryPendingError)
    async def _pending(request, exc):
        return JSONResponse(
            status_code=409, content={"error": str(exc), "reason": "query-pending"}
        )

    @app.post("/records")
    async def post_record(payload: dict = Body(...)):
        return service.process(payload)

    @app.get("/queries")
    async def get_queries():
        return {"pending": service.pending_query()}

    @app.post("/labels")
    async def post_label(payload: dict = Body(...)):
        if not isinstance(payload, dict) or "index" not in payload or "label" not in payload:
            raise DataError("label body needs index and label fields")
        return service.submit_label(payload["index"], payload["label"])

    @app.get("/metrics")
    async def get_metrics():
        return service.metrics()

    @app.get("/model")
    async def get_model():
        return service.model_doc()

    @app.post("/snapshot")
    async def post_snapshot(payload: dict = Body(default={})):
        path = payload.get("path", "namestream-snapshot.json")
        if not isinstance(path, str) or not path:
            raise DataError("snapshot path must be a non-empty string")
        return service.snapshot(path)

    if static_dir is not None:
        import os

        if os.path.isdir(static_dir):
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    return app
