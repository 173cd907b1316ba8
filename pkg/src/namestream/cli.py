"""Command-line surface.

Subcommands: prepare (featurize a record file into a reusable directory),
stream (run either engine over a prepared stream), serve (HTTP service),
sweep (parameter grids to CSV), demo (write the bundled example corpus),
feed (post a prepared stream to a running service), snapshot (inspect one).

Defaults can be overridden by a JSON file named in NAMESTREAM_CONFIG;
explicit flags always win. Exit codes: 0 success, 2 configuration or usage,
3 bad data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .active import ActiveConfig, apply_feedback, decide_random, should_query
from .dpgmm import ModelState, estimate_hyperparams
from .errors import ConfigError, DataError, NamestreamError
from .evaluation import (
    ALIGNMENT_RULE,
    ExperimentConfig,
    HARD_SYNTHETIC,
    PreparedData,
    SyntheticConfig,
    count_distinct,
    mean_f1,
    sweep,
    sweep_records,
)
from .gibbs import gibbs_step
from .nnmf import load_basis, nnls_project, nnmf_fit, save_basis
from .particle import STREAM_QUERY, pf_init, pf_step
from .persist import load_snapshot, save_snapshot, start_event_log
from .records import (
    FeatureVocabulary,
    build_vocabulary,
    featurize_matrix,
    parse_records,
    temporal_split,
)

PREPARED_FORMAT = "namestream-prepared"
PREPARED_VERSION = 1


def _env_defaults() -> dict:
    path = os.environ.get("NAMESTREAM_CONFIG")
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"NAMESTREAM_CONFIG points at missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"NAMESTREAM_CONFIG file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("NAMESTREAM_CONFIG file must hold a JSON object")
    return obj


def _resolve(args: argparse.Namespace, name: str, fallback):
    """CLI flag if given, else NAMESTREAM_CONFIG value, else the built-in."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    env = _env_defaults()
    if name in env:
        return env[name]
    return fallback


# ---------------------------------------------------------------------------
# prepare


def _require_file(path) -> None:
    if not os.path.isfile(path):
        raise ConfigError(f"dataset path does not exist: {path}")


def cmd_prepare(args) -> int:
    _require_file(args.records)
    t0 = int(_resolve(args, "t0", 3))
    h = int(_resolve(args, "h", 10))
    iters = int(_resolve(args, "nnmf_iters", 500))
    tol = float(_resolve(args, "nnmf_tol", 1e-9))
    seed = int(_resolve(args, "seed", 0))

    with open(args.records, "r", encoding="utf-8") as fh:
        records = parse_records(fh)
    split = temporal_split(records, t0)
    if not split.train:
        raise DataError("temporal split produced an empty training partition")
    if any(r.true_label is None for r in split.train):
        raise DataError("all training records must carry true_label")

    vocab = build_vocabulary(split.train)
    X = featurize_matrix(split.train, vocab)
    result = nnmf_fit(X, h, max_iters=iters, tol=tol, seed=seed)
    stream_dense = featurize_matrix(split.test, vocab)
    stream_latents = [nnls_project(row, result.basis).tolist() for row in stream_dense]
    truths = [r.true_label for r in split.test]

    os.makedirs(args.out, exist_ok=True)
    vocab.save(os.path.join(args.out, "vocab.jsonl"))
    save_basis(result.basis, os.path.join(args.out, "basis.json"))
    _dump_json(
        os.path.join(args.out, "train.json"),
        {
            "format": PREPARED_FORMAT,
            "version": PREPARED_VERSION,
            "kind": "train",
            "h": h,
            "ids": [r.id for r in split.train],
            "labels": [r.true_label for r in split.train],
            "latents": result.coefficients.tolist(),
        },
    )
    _dump_json(
        os.path.join(args.out, "stream.json"),
        {
            "format": PREPARED_FORMAT,
            "version": PREPARED_VERSION,
            "kind": "stream",
            "h": h,
            "ids": [r.id for r in split.test],
            "latents": stream_latents,
            "truths": truths if all(t is not None for t in truths) else None,
        },
    )
    _dump_json(
        os.path.join(args.out, "meta.json"),
        {
            "format": PREPARED_FORMAT,
            "version": PREPARED_VERSION,
            "kind": "meta",
            "t0": t0,
            "boundary_year": split.boundary_year,
            "h": h,
            "n_train": len(split.train),
            "n_stream": len(split.test),
            "nnmf_iters": iters,
            "nnmf_tol": tol,
            "seed": seed,
        },
    )
    print(
        f"prepared {len(split.train)} training and {len(split.test)} stream "
        f"records into {args.out} (h={h}, boundary year {split.boundary_year})"
    )
    return 0


def _dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def _load_prepared_json(path, kind: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"prepared dataset file missing: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt prepared file {path}: {exc}") from exc
    if (
        not isinstance(obj, dict)
        or obj.get("format") != PREPARED_FORMAT
        or obj.get("version") != PREPARED_VERSION
        or obj.get("kind") != kind
    ):
        raise DataError(f"{path} is not a {PREPARED_FORMAT} {kind} file")
    return obj


def load_prepared(directory) -> tuple[PreparedData, FeatureVocabulary, np.ndarray, dict]:
    if not os.path.isdir(directory):
        raise ConfigError(f"dataset path does not exist: {directory}")
    train = _load_prepared_json(os.path.join(directory, "train.json"), "train")
    stream = _load_prepared_json(os.path.join(directory, "stream.json"), "stream")
    meta = _load_prepared_json(os.path.join(directory, "meta.json"), "meta")
    vocab = FeatureVocabulary.load(os.path.join(directory, "vocab.jsonl"))
    basis = load_basis(os.path.join(directory, "basis.json"))
    try:
        h = int(train["h"])
        data = PreparedData(
            train_x=np.array(train["latents"], dtype=float).reshape(-1, h),
            train_y=tuple(str(y) for y in train["labels"]),
            stream_x=np.array(stream["latents"], dtype=float).reshape(-1, h),
            stream_y=(
                tuple(str(t) for t in stream["truths"])
                if stream.get("truths") is not None
                else None
            ),
            train_ids=tuple(str(i) for i in train["ids"]),
            stream_ids=tuple(str(i) for i in stream["ids"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed prepared dataset in {directory}: {exc}") from exc
    return data, vocab, basis, meta


# ---------------------------------------------------------------------------
# stream


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        alpha=float(_resolve(args, "alpha", 100.0)),
        kappa=float(_resolve(args, "kappa", 100.0)),
        m_offset=float(_resolve(args, "m_offset", 100.0)),
        M=int(_resolve(args, "particles", 100)),
        enp_threshold=(
            float(args.enp_threshold) if getattr(args, "enp_threshold", None) is not None else None
        ),
        tau=float(_resolve(args, "tau", 1.0)),
        feedback=str(_resolve(args, "feedback", "off")),
        p_random=float(_resolve(args, "p_random", 0.1)),
        map_mode=bool(getattr(args, "map_mode", False)),
        base_seed=int(_resolve(args, "seed", 0)),
    )


def cmd_stream(args) -> int:
    data, _, _, _ = load_prepared(args.prepared)
    config = _experiment_config(args)
    engine = args.engine
    seed = config.base_seed
    hyper = estimate_hyperparams(
        data.train_x,
        list(data.train_y),
        alpha=config.alpha,
        kappa=config.kappa,
        m_offset=config.m_offset,
    )
    truths = list(data.stream_y) if data.stream_y is not None else None
    if config.feedback != "off" and truths is None:
        raise ConfigError("label feedback needs true labels in the prepared stream")

    snapshot_at = getattr(args, "snapshot_at", None)
    snapshot_path = getattr(args, "snapshot", None)
    if (snapshot_at is None) != (snapshot_path is None):
        raise ConfigError("--snapshot-at and --snapshot must be given together")

    train_model = ModelState.from_training(data.train_x, list(data.train_y), hyper)
    start = 0
    model = None
    ensemble = None
    if getattr(args, "resume", None):
        restored = load_snapshot(args.resume)
        if engine == "gibbs":
            if not isinstance(restored, ModelState):
                raise ConfigError("gibbs resume needs a model snapshot")
            model = restored
            start = model.n_online_seen
        else:
            if isinstance(restored, ModelState):
                raise ConfigError("particle-filter resume needs an ensemble snapshot")
            ensemble = restored
            start = ensemble.position
    elif engine == "gibbs":
        model = train_model
    elif engine == "pf":
        ensemble = pf_init(
            config.M,
            hyper,
            train_model.classes,
            enp_threshold=config.enp_threshold,
            rng_seed=seed,
        )
    else:
        raise ConfigError(f"unknown engine {engine!r}")

    if engine == "gibbs" and config.feedback != "off":
        raise ConfigError("label feedback is a particle-filter feature")

    event_log = None
    if getattr(args, "events", None):
        event_log = start_event_log(
            args.events,
            engine=engine,
            seed=seed,
            hyper=hyper,
            train_stats=train_model.classes,
            M=config.M if engine == "pf" else None,
            enp_threshold=(ensemble.enp_threshold if ensemble is not None else None),
        )

    active = ActiveConfig(tau=config.tau, mode="oracle") if config.feedback == "oracle" else None
    predictions: list[str] = []
    queries = 0
    try:
        for offset in range(start, len(data.stream_ids)):
            record_id = data.stream_ids[offset]
            x = data.stream_x[offset]
            if engine == "gibbs":
                rng = np.random.default_rng([seed, offset])
                label = gibbs_step(model, x, rng, map_mode=config.map_mode)
                dist = None
                resampled = False
            else:
                result = pf_step(ensemble, x)
                label = result.label
                dist = result.dist
                resampled = result.resampled
            if event_log is not None:
                fields = {"index": offset, "id": record_id, "x": [float(v) for v in x], "prediction": label}
                if dist is not None:
                    fields["posterior"] = {k: float(v) for k, v in dist.items()}
                event_log.append("record", **fields)
                if resampled:
                    event_log.append("resample", index=offset)
            if engine == "pf" and truths is not None and config.feedback == "oracle":
                if should_query(dist, active, queries):
                    apply_feedback(ensemble, offset, truths[offset])
                    label = truths[offset]
                    queries += 1
                    if event_log is not None:
                        event_log.append("feedback", index=offset, label=label)
            elif engine == "pf" and truths is not None and config.feedback == "random":
                rng = np.random.default_rng([seed, STREAM_QUERY, 0, offset])
                if decide_random(config.p_random, rng):
                    apply_feedback(ensemble, offset, truths[offset])
                    label = truths[offset]
                    queries += 1
                    if event_log is not None:
                        event_log.append("feedback", index=offset, label=label)
            predictions.append(label)
            print(f"{offset}\t{record_id}\t{label}")
            if snapshot_at is not None and offset + 1 == int(snapshot_at):
                save_snapshot(model if engine == "gibbs" else ensemble, snapshot_path)
                if event_log is not None:
                    event_log.append("snapshot", path=str(snapshot_path))
                print(f"# snapshot written to {snapshot_path} after {offset + 1} records")
    finally:
        if event_log is not None:
            event_log.close()

    summary = {
        "engine": engine,
        "records": len(predictions),
        "start": start,
        "distinct": count_distinct(predictions) if predictions else 0,
        "queries": queries,
    }
    if truths is not None and predictions:
        scored = truths[start:]
        summary["mean_f1"] = mean_f1(predictions, scored, train_labels=set(data.train_y))
        print(f"# alignment: {ALIGNMENT_RULE}")
    print("# " + json.dumps(summary))
    if getattr(args, "report", None):
        _dump_json(args.report, {**summary, "predictions": predictions})
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    from .particle import Ensemble
    from .service import ServiceSettings, StreamService, create_app

    data, vocab, basis, _ = load_prepared(args.prepared)
    config = _experiment_config(args)
    hyper = estimate_hyperparams(
        data.train_x,
        list(data.train_y),
        alpha=config.alpha,
        kappa=config.kappa,
        m_offset=config.m_offset,
    )
    if getattr(args, "resume", None):
        restored = load_snapshot(args.resume)
        if not isinstance(restored, Ensemble):
            raise ConfigError("serve resume needs an ensemble snapshot")
        ensemble = restored
    else:
        train_model = ModelState.from_training(data.train_x, list(data.train_y), hyper)
        ensemble = pf_init(
            config.M,
            hyper,
            train_model.classes,
            enp_threshold=config.enp_threshold,
            rng_seed=config.base_seed,
        )
    timeout = _resolve(args, "timeout", 300.0)
    settings = ServiceSettings(
        tau=float(_resolve(args, "tau", 0.35)),
        budget=(int(args.budget) if getattr(args, "budget", None) is not None else None),
        mode=str(_resolve(args, "mode", "interactive")),
        query_timeout_s=(float(timeout) if timeout is not None else None),
    )
    event_log = None
    if getattr(args, "events", None):
        event_log = start_event_log(
            args.events,
            engine="pf",
            seed=config.base_seed,
            hyper=hyper,
            train_stats={label: s for label, s in _train_stats(data, hyper).items()},
            M=ensemble.M,
            enp_threshold=ensemble.enp_threshold,
        )
    service = StreamService(
        ensemble,
        settings=settings,
        vocab=vocab,
        basis=basis,
        train_labels=tuple(sorted(set(data.train_y))),
        event_log=event_log,
    )
    static_dir = getattr(args, "static", None)
    if static_dir is None:
        bundled = os.path.join(os.path.dirname(__file__), "static")
        static_dir = bundled if os.path.isdir(bundled) else None
    app = create_app(service, static_dir=static_dir)

    import uvicorn

    host = str(_resolve(args, "host", "127.0.0.1"))
    port = int(_resolve(args, "port", 8321))
    print(f"serving on http://{host}:{port} (mode={settings.mode}, tau={settings.tau})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _train_stats(data: PreparedData, hyper):
    return ModelState.from_training(data.train_x, list(data.train_y), hyper).classes


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    config = _experiment_config(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must name at least one value")
    runs = int(args.runs)
    engine = args.engine

    if args.param == "T0":
        _require_file(args.dataset)
        with open(args.dataset, "r", encoding="utf-8") as fh:
            records = parse_records(fh)
        result = sweep_records(
            records,
            [int(v) for v in values],
            h=int(_resolve(args, "h", 10)),
            engine=engine,
            config=config,
            runs=runs,
        )
    elif args.dataset == "synthetic" or args.dataset == "synthetic-hard":
        base = HARD_SYNTHETIC if args.dataset == "synthetic-hard" else SyntheticConfig()
        result = sweep(base, args.param, values, engine, config, runs)
    else:
        data, _, _, _ = load_prepared(args.dataset)
        result = sweep(data, args.param, values, engine, config, runs)

    result.to_csv(args.out)
    print(f"# alignment: {ALIGNMENT_RULE}")
    for value, report in zip(result.values, result.reports):
        print(
            f"{args.param}={value:g}: mean-F1 {report.f1_mean:.4f} "
            f"({report.f1_std:.4f}), distinct {report.distinct_mean:.2f}"
        )
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# demo, feed, snapshot inspection


def cmd_demo(args) -> int:
    from .demo import write_demo_jsonl

    records = write_demo_jsonl(args.out, seed=int(_resolve(args, "seed", 0)))
    years = sorted({r.year for r in records})
    print(f"wrote {len(records)} records to {args.out} (years {years[0]}..{years[-1]})")
    return 0


def cmd_feed(args) -> int:
    import urllib.error
    import urllib.request

    stream = _load_prepared_json(os.path.join(args.prepared, "stream.json"), "stream")
    url = args.url.rstrip("/")
    truths = stream.get("truths")

    def post(path, body):
        req = urllib.request.Request(
            f"{url}{path}",
            data=json.dumps(body).encode("utf-8"),
            headers={"content-type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError:
            raise
        except urllib.error.URLError as exc:
            raise DataError(f"cannot reach service at {url}: {exc.reason}") from exc

    answered = 0
    for i, (record_id, latent) in enumerate(zip(stream["ids"], stream["latents"])):
        body = {"id": record_id, "latent": latent}
        if truths is not None:
            body["true_label"] = truths[i]
        try:
            response = post("/records", body)
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", errors="replace")
            raise DataError(f"service refused record {record_id}: {exc.code} {detail}") from exc
        print(f"{response['index']}\t{record_id}\t{response['prediction']}")
        if response.get("query") is not None:
            if args.answer == "oracle" and truths is not None:
                label = truths[i]
            elif args.answer == "top":
                label = response["query"]["candidates"][0]["label"]
            else:
                raise ConfigError(
                    "service issued a query; rerun with --answer oracle or top"
                )
            try:
                post("/labels", {"index": response["index"], "label": label})
            except urllib.error.HTTPError as exc:
                detail = exc.read().decode("utf-8", errors="replace")
                raise DataError(
                    f"service rejected label for index {response['index']}: "
                    f"{exc.code} {detail}"
                ) from exc
            answered += 1
            print(f"# answered query at index {response['index']} with {label}")
    print(f"# fed {len(stream['ids'])} records, answered {answered} queries")
    return 0


def cmd_snapshot(args) -> int:
    from .dpgmm import ModelState as _Model

    restored = load_snapshot(args.path)
    if isinstance(restored, _Model):
        print(
            f"model snapshot: {len(restored.classes)} classes, "
            f"{restored.n_train} training records, "
            f"{restored.n_online_seen} stream records seen"
        )
        for label, stats in restored.classes.items():
            print(f"  {label}\t{stats.n}")
    else:
        print(
            f"ensemble snapshot: {restored.M} particles at position "
            f"{restored.position}, resample threshold {restored.enp_threshold:g}"
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="namestream",
        description=(
            "streaming name disambiguation with open-set class discovery"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="featurize a JSONL record file into a dataset directory")
    p.add_argument("records")
    p.add_argument("--out", required=True)
    p.add_argument("--t0", type=int, default=None, help="test window length in years")
    p.add_argument("--h", type=int, default=None, help="latent dimensionality")
    p.add_argument("--nnmf-iters", dest="nnmf_iters", type=int, default=None)
    p.add_argument("--nnmf-tol", dest="nnmf_tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stream", help="run an engine over a prepared stream")
    p.add_argument("prepared")
    p.add_argument("--engine", choices=("gibbs", "pf"), default="pf")
    _engine_flags(p)
    p.add_argument("--events", default=None, help="write a JSONL event log")
    p.add_argument("--report", default=None, help="write a JSON run report")
    p.add_argument("--snapshot-at", dest="snapshot_at", type=int, default=None)
    p.add_argument("--snapshot", default=None, help="snapshot path for --snapshot-at")
    p.add_argument("--resume", default=None, help="resume from a snapshot")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("serve", help="serve a prepared dataset over HTTP")
    p.add_argument("prepared")
    _engine_flags(p)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--timeout", type=float, default=None, help="query timeout in seconds")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--mode", choices=("off", "interactive"), default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--static", default=None, help="directory of console assets to serve at /")
    p.add_argument("--events", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("sweep", help="run a parameter sweep and write CSV")
    p.add_argument("dataset", help="prepared dir, records file (T0), or synthetic|synthetic-hard")
    p.add_argument("--param", required=True, choices=("h", "alpha", "M", "tau", "T0"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--engine", choices=("gibbs", "pf"), default="pf")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=int, default=None)
    _engine_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("demo", help="write the bundled demo corpus as JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("feed", help="post a prepared stream to a running service")
    p.add_argument("prepared")
    p.add_argument("--url", default="http://127.0.0.1:8321")
    p.add_argument("--answer", choices=("oracle", "top", "none"), default="oracle")
    p.set_defaults(func=cmd_feed)

    p = sub.add_parser("snapshot", help="describe a snapshot file")
    p.add_argument("path")
    p.set_defaults(func=cmd_snapshot)

    return parser


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--m-offset", dest="m_offset", type=float, default=None)
    p.add_argument("--particles", "-M", dest="particles", type=int, default=None)
    p.add_argument("--enp-threshold", dest="enp_threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--map", dest="map_mode", action="store_true")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--feedback", choices=("off", "oracle", "random"), default=None)
    p.add_argument("--p-random", dest="p_random", type=float, default=None)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except NamestreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
