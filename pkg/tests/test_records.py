"""Record parsing, featurization, and temporal splitting."""

import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from namestream import (
    ConfigError,
    DataError,
    FeatureVocabulary,
    RawRecord,
    build_vocabulary,
    featurize,
    featurize_matrix,
    parse_records,
    temporal_split,
    title_tokens,
)

# Hand-built corpus with the expected vocabulary worked out on paper: three
# coauthors, five title words after stopword removal, two venues. Feature
# order is coauthors, then title words, then venues, lexicographic within
# each kind.
_CORPUS = [
    RawRecord(
        id="r1",
        name_ref="j. smith",
        year=2001,
        coauthors=frozenset({"B. Yu", "a. lee"}),
        title="The Theory of Query Optimization",
        venue="VLDB",
        true_label="p1",
    ),
    RawRecord(
        id="r2",
        name_ref="j. smith",
        year=2002,
        coauthors=frozenset({"A. Lee"}),
        title="Query   Plans, 2nd edition!",
        venue="vldb",
        true_label="p1",
    ),
    RawRecord(
        id="r3",
        name_ref="j. smith",
        year=2003,
        coauthors=frozenset({"c. díaz"}),
        title="Image segmentation",
        venue="CVPR",
        true_label="p2",
    ),
]

_EXPECTED_TOKENS = (
    ("coauthor", "a. lee"),
    ("coauthor", "b. yu"),
    ("coauthor", "c. díaz"),
    ("title", "edition"),
    ("title", "image"),
    ("title", "nd"),
    ("title", "optimization"),
    ("title", "plans"),
    ("title", "query"),
    ("title", "segmentation"),
    ("title", "theory"),
    ("venue", "cvpr"),
    ("venue", "vldb"),
)


def _jsonl(objs):
    return [json.dumps(o) for o in objs]


def _valid_obj(**overrides):
    obj = {
        "id": "x1",
        "name_ref": "j. smith",
        "year": 2000,
        "coauthors": ["a. lee"],
        "title": "a title",
        "venue": "venue",
    }
    obj.update(overrides)
    return obj


# ---------------------------------------------------------------------------
# tokenization


def test_title_tokens_split_on_nonletters_and_drop_stopwords():
    assert title_tokens("The Theory of Query Optimization") == [
        "theory",
        "query",
        "optimization",
    ]
    assert title_tokens("Query   Plans, 2nd edition!") == ["query", "plans", "nd", "edition"]
    assert title_tokens("self-supervised x2y") == ["self", "supervised", "x", "y"]
    assert title_tokens("") == []
    assert title_tokens("THE OF AND") == []


# ---------------------------------------------------------------------------
# parsing


def test_parse_records_roundtrip_order_and_fields():
    lines = _jsonl(
        [
            _valid_obj(id="a", year=1999),
            _valid_obj(id="b", year=2001, true_label="p9"),
        ]
    )
    lines.insert(1, "   ")  # blank lines are skipped
    records = parse_records(lines)
    assert [r.id for r in records] == ["a", "b"]
    assert records[0].true_label is None
    assert records[1].true_label == "p9"
    assert records[1].coauthors == frozenset({"a. lee"})


def test_parse_records_invalid_json_names_line():
    with pytest.raises(DataError, match="line 2"):
        parse_records([json.dumps(_valid_obj()), "{not json"])


def test_parse_records_missing_field():
    obj = _valid_obj()
    del obj["venue"]
    with pytest.raises(DataError, match="venue"):
        parse_records([json.dumps(obj)])


def test_parse_records_rejects_non_object_line():
    with pytest.raises(DataError, match="line 1"):
        parse_records(["[1, 2]"])


def test_parse_records_rejects_bad_year():
    with pytest.raises(DataError, match="year"):
        parse_records([json.dumps(_valid_obj(year="2001"))])
    with pytest.raises(DataError, match="year"):
        parse_records([json.dumps(_valid_obj(year=0))])
    with pytest.raises(DataError, match="year"):
        parse_records([json.dumps(_valid_obj(year=True))])


def test_parse_records_rejects_bad_coauthors():
    with pytest.raises(DataError, match="coauthors"):
        parse_records([json.dumps(_valid_obj(coauthors="a. lee"))])
    with pytest.raises(DataError, match="coauthors"):
        parse_records([json.dumps(_valid_obj(coauthors=[1]))])


def test_parse_records_rejects_duplicate_id():
    lines = _jsonl([_valid_obj(id="dup"), _valid_obj(id="dup")])
    with pytest.raises(DataError, match="duplicate"):
        parse_records(lines)


def test_raw_record_validation():
    with pytest.raises(DataError):
        RawRecord(id="", name_ref="n", year=2000, coauthors=frozenset(), title="t", venue="v")
    with pytest.raises(DataError):
        RawRecord(id="i", name_ref="", year=2000, coauthors=frozenset(), title="t", venue="v")


# ---------------------------------------------------------------------------
# vocabulary


def test_build_vocabulary_matches_hand_expected_order():
    vocab = build_vocabulary(_CORPUS)
    assert vocab.tokens == _EXPECTED_TOKENS
    assert vocab.dimension == len(_EXPECTED_TOKENS)
    assert vocab.index[("venue", "vldb")] == len(_EXPECTED_TOKENS) - 1


def test_build_vocabulary_rejects_empty():
    with pytest.raises(DataError):
        build_vocabulary([])


def test_vocabulary_save_load_roundtrip(tmp_path):
    vocab = build_vocabulary(_CORPUS)
    path = tmp_path / "vocab.jsonl"
    vocab.save(path)
    assert FeatureVocabulary.load(path).tokens == vocab.tokens


def test_vocabulary_load_rejects_gap(tmp_path):
    path = tmp_path / "vocab.jsonl"
    path.write_text(
        json.dumps({"kind": "venue", "token": "a", "index": 0})
        + "\n"
        + json.dumps({"kind": "venue", "token": "b", "index": 2})
        + "\n"
    )
    with pytest.raises(DataError, match="contiguous"):
        FeatureVocabulary.load(path)


def test_vocabulary_load_rejects_unknown_kind(tmp_path):
    path = tmp_path / "vocab.jsonl"
    path.write_text(json.dumps({"kind": "abstract", "token": "a", "index": 0}) + "\n")
    with pytest.raises(DataError, match="kind"):
        FeatureVocabulary.load(path)


# ---------------------------------------------------------------------------
# featurization


def test_featurize_sets_expected_bits():
    vocab = build_vocabulary(_CORPUS)
    vec = featurize(_CORPUS[0], vocab)
    expected = {
        ("coauthor", "a. lee"),
        ("coauthor", "b. yu"),
        ("title", "theory"),
        ("title", "query"),
        ("title", "optimization"),
        ("venue", "vldb"),
    }
    assert set(vec.positions) == {vocab.index[p] for p in expected}
    assert list(vec.positions) == sorted(vec.positions)
    dense = vec.to_dense()
    assert dense.shape == (vocab.dimension,)
    assert dense.sum() == len(expected)


def test_featurize_drops_out_of_vocabulary_tokens():
    vocab = build_vocabulary(_CORPUS[:2])  # no r3 tokens
    vec = featurize(_CORPUS[2], vocab)
    assert vec.positions == ()
    assert vec.to_dense().sum() == 0


def test_featurize_normalizes_case_and_whitespace():
    vocab = build_vocabulary(_CORPUS)
    shouty = RawRecord(
        id="r9",
        name_ref="J.  SMITH",
        year=2004,
        coauthors=frozenset({"A.   LEE"}),
        title="QUERY",
        venue="  Vldb ",
    )
    vec = featurize(shouty, vocab)
    assert set(vec.positions) == {
        vocab.index[("coauthor", "a. lee")],
        vocab.index[("title", "query")],
        vocab.index[("venue", "vldb")],
    }


def test_featurize_matrix_rows_match_featurize():
    vocab = build_vocabulary(_CORPUS)
    X = featurize_matrix(_CORPUS, vocab)
    assert X.shape == (3, vocab.dimension)
    for i, record in enumerate(_CORPUS):
        assert np.array_equal(X[i], featurize(record, vocab).to_dense())


# ---------------------------------------------------------------------------
# temporal split


def _year_record(i, year):
    return RawRecord(
        id=f"y{i}",
        name_ref="n",
        year=year,
        coauthors=frozenset(),
        title="t",
        venue="v",
    )


def test_temporal_split_hand_case():
    records = [_year_record(i, y) for i, y in enumerate([2003, 2000, 2002, 2001])]
    split = temporal_split(records, 2)
    assert split.boundary_year == 2001
    assert [r.year for r in split.train] == [2000, 2001]
    assert [r.year for r in split.test] == [2002, 2003]


def test_temporal_split_is_stable_within_year():
    records = [_year_record(i, 2000) for i in range(3)] + [_year_record(9, 2010)]
    split = temporal_split(records, 3)
    assert [r.id for r in split.train] == ["y0", "y1", "y2"]


def test_temporal_split_rejects_bad_t0():
    with pytest.raises(ConfigError):
        temporal_split([_year_record(0, 2000)], 0)


def test_temporal_split_warns_on_empty_partition():
    records = [_year_record(0, 2000), _year_record(1, 2001)]
    with pytest.warns(UserWarning, match="training"):
        split = temporal_split(records, 5)
    assert not split.train
    assert len(split.test) == 2


@given(
    years=st.lists(st.integers(min_value=1900, max_value=2030), min_size=1, max_size=40),
    t0=st.integers(min_value=1, max_value=20),
)
def test_temporal_split_partitions_exactly(years, t0):
    records = [_year_record(i, y) for i, y in enumerate(years)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        split = temporal_split(records, t0)
    assert len(split.train) + len(split.test) == len(records)
    assert {r.id for r in split.train} | {r.id for r in split.test} == {r.id for r in records}
    assert all(r.year <= split.boundary_year for r in split.train)
    assert all(r.year > split.boundary_year for r in split.test)
    assert max(years) - split.boundary_year == t0


@given(
    st.lists(
        st.tuples(
            st.sets(st.text(alphabet="abc ", min_size=1, max_size=6), max_size=3),
            st.text(alphabet="abcdef -", max_size=20),
        ),
        min_size=1,
        max_size=8,
    )
)
def test_featurize_positions_always_valid(specs):
    records = []
    for i, (coauthors, title) in enumerate(specs):
        coauthors = {c for c in coauthors if c.strip()}
        records.append(
            RawRecord(
                id=f"h{i}",
                name_ref="n",
                year=2000,
                coauthors=frozenset(coauthors),
                title=title,
                venue="v",
            )
        )
    vocab = build_vocabulary(records)
    for record in records:
        vec = featurize(record, vocab)
        assert list(vec.positions) == sorted(set(vec.positions))
        assert all(0 <= p < vocab.dimension for p in vec.positions)
        # every training record's own tokens are all in vocabulary
        assert vec.to_dense().sum() == len(vec.positions)
