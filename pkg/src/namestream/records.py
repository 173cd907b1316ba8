"""Bibliographic record ingestion, binary featurization, and temporal splitting.

A dataset is a JSONL file with one record per line. Records carry an ambiguous
name reference plus its citation context (coauthors, title, venue, year) and an
optional ground-truth person id. Training records define a fixed binary feature
vocabulary: one feature per distinct coauthor name, title word, and venue
string. Test-time tokens outside the vocabulary are dropped, because the latent
basis learned downstream is frozen after training.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

FEATURE_KINDS = ("coauthor", "title", "venue")

_LETTER_RUNS = re.compile(r"[a-z]+")


def _load_stopwords() -> frozenset[str]:
    text = resources.files("namestream.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in (line.strip() for line in text.splitlines()) if w)


STOPWORDS = _load_stopwords()


@dataclass(frozen=True)
class RawRecord:
    """One bibliographic citation attributed to an ambiguous name."""

    id: str
    name_ref: str
    year: int
    coauthors: frozenset[str]
    title: str
    venue: str
    true_label: str | None = None

    def __post_init__(self):
        if not self.id:
            raise DataError("record id must be non-empty")
        if not self.name_ref:
            raise DataError(f"record {self.id!r}: name_ref must be non-empty")
        if not isinstance(self.year, int) or isinstance(self.year, bool) or self.year <= 0:
            raise DataError(f"record {self.id!r}: year must be a positive integer")


def normalize_name(name: str) -> str:
    """Lowercase and collapse internal whitespace; names stay whole tokens."""
    return " ".join(name.split()).lower()


def normalize_venue(venue: str) -> str:
    return " ".join(venue.split()).lower()


def title_tokens(title: str) -> list[str]:
    """Tokenize a title into lowercase words.

    Maximal runs of ASCII letters are the tokens, so digits and punctuation act
    as separators and never appear in features. Stopwords are removed.
    """
    return [t for t in _LETTER_RUNS.findall(title.lower()) if t not in STOPWORDS]


_REQUIRED_FIELDS = ("id", "name_ref", "year", "coauthors", "title", "venue")


def parse_records(lines: Iterable[str]) -> list[RawRecord]:
    """Parse one JSON object per line into RawRecords, preserving input order.

    Raises DataError naming the offending line for malformed JSON, missing
    fields, bad field types, or duplicate ids. Blank lines are skipped.
    """
    records: list[RawRecord] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DataError(f"line {lineno}: expected a JSON object")
        missing = [f for f in _REQUIRED_FIELDS if f not in obj]
        if missing:
            raise DataError(f"line {lineno}: missing field(s) {', '.join(missing)}")
        coauthors = obj["coauthors"]
        if not isinstance(coauthors, (list, tuple)) or not all(
            isinstance(c, str) for c in coauthors
        ):
            raise DataError(f"line {lineno}: coauthors must be a list of strings")
        try:
            record = RawRecord(
                id=str(obj["id"]),
                name_ref=obj["name_ref"],
                year=obj["year"],
                coauthors=frozenset(coauthors),
                title=obj["title"],
                venue=obj["venue"],
                true_label=obj.get("true_label"),
            )
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
        if record.id in seen_ids:
            raise DataError(f"line {lineno}: duplicate record id {record.id!r}")
        seen_ids.add(record.id)
        records.append(record)
    return records


@dataclass(frozen=True)
class FeatureVocabulary:
    """Ordered binary feature space built from training records only.

    Features are ordered by kind (coauthors, then title words, then venues)
    and lexicographically within each kind, so the layout is a pure function
    of the training set.
    """

    tokens: tuple[tuple[str, str], ...]
    index: dict[tuple[str, str], int] = field(repr=False)

    @property
    def dimension(self) -> int:
        return len(self.tokens)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for pos, (kind, token) in enumerate(self.tokens):
                fh.write(json.dumps({"kind": kind, "token": token, "index": pos}) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureVocabulary":
        tokens: list[tuple[str, str]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    kind, token, pos = obj["kind"], obj["token"], obj["index"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataError(f"vocabulary line {lineno}: malformed entry") from exc
                if kind not in FEATURE_KINDS:
                    raise DataError(f"vocabulary line {lineno}: unknown kind {kind!r}")
                if pos != len(tokens):
                    raise DataError(f"vocabulary line {lineno}: positions must be contiguous")
                tokens.append((kind, token))
        return cls.from_tokens(tokens)

    @classmethod
    def from_tokens(cls, tokens: Sequence[tuple[str, str]]) -> "FeatureVocabulary":
        tokens = tuple(tokens)
        index = {pair: pos for pos, pair in enumerate(tokens)}
        if len(index) != len(tokens):
            raise DataError("vocabulary contains duplicate (kind, token) pairs")
        return cls(tokens=tokens, index=index)


def _record_tokens(record: RawRecord) -> set[tuple[str, str]]:
    tokens = {("coauthor", normalize_name(c)) for c in record.coauthors}
    tokens.update(("title", w) for w in title_tokens(record.title))
    tokens.add(("venue", normalize_venue(record.venue)))
    return tokens


def build_vocabulary(train: Sequence[RawRecord]) -> FeatureVocabulary:
    """Collect the distinct normalized tokens of the training records."""
    if not train:
        raise DataError("cannot build a vocabulary from zero records")
    by_kind: dict[str, set[str]] = {kind: set() for kind in FEATURE_KINDS}
    for record in train:
        for kind, token in _record_tokens(record):
            by_kind[kind].add(token)
    ordered = [
        (kind, token) for kind in FEATURE_KINDS for token in sorted(by_kind[kind])
    ]
    return FeatureVocabulary.from_tokens(ordered)


@dataclass(frozen=True)
class BinaryFeatureVector:
    """Sorted set-bit positions in a d-dimensional binary feature space."""

    dimension: int
    positions: tuple[int, ...]

    def __post_init__(self):
        if any(p < 0 or p >= self.dimension for p in self.positions):
            raise DataError("feature position out of range")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension)
        if self.positions:
            dense[list(self.positions)] = 1.0
        return dense


def featurize(record: RawRecord, vocab: FeatureVocabulary) -> BinaryFeatureVector:
    """Set one bit per vocabulary token present in the record.

    Tokens absent from the vocabulary (possible for test records) are dropped.
    """
    positions = sorted(
        vocab.index[pair] for pair in _record_tokens(record) if pair in vocab.index
    )
    return BinaryFeatureVector(dimension=vocab.dimension, positions=tuple(positions))


def featurize_matrix(records: Sequence[RawRecord], vocab: FeatureVocabulary) -> np.ndarray:
    """Dense n x d matrix of featurized records, one row per record."""
    X = np.zeros((len(records), vocab.dimension))
    for i, record in enumerate(records):
        for p in featurize(record, vocab).positions:
            X[i, p] = 1.0
    return X


@dataclass(frozen=True)
class StreamSplit:
    """Temporal split: the most recent T0 calendar years form the test stream."""

    train: tuple[RawRecord, ...]
    test: tuple[RawRecord, ...]
    boundary_year: int


def temporal_split(records: Sequence[RawRecord], T0: int) -> StreamSplit:
    """Send records from the last T0 years to the test stream, the rest to train.

    Both partitions are ordered by ascending year with input order breaking
    ties. An empty partition is legal but signalled with a warning.
    """
    if T0 < 1:
        raise ConfigError(f"T0 must be >= 1, got {T0}")
    if not records:
        raise DataError("cannot split zero records")
    ymax = max(r.year for r in records)
    boundary = ymax - T0
    train = sorted((r for r in records if r.year <= boundary), key=lambda r: r.year)
    test = sorted((r for r in records if r.year > boundary), key=lambda r: r.year)
    if not train:
        warnings.warn("temporal split left the training partition empty", stacklevel=2)
    if not test:
        warnings.warn("temporal split left the test partition empty", stacklevel=2)
    return StreamSplit(train=tuple(train), test=tuple(test), boundary_year=boundary)
