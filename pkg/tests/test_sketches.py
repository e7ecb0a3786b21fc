from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroscan.errors import BadMagic, DuplicateBlob, EmptySketch, TruncatedFile
from zeroscan.sketches import (
    RANK_EPSILON,
    THETA_RELATIVE_ERROR,
    BlobType,
    KllSketch,
    SketchSidecar,
    ThetaSketch,
    hash_value,
    kll_merge_all,
    load_kll,
    load_theta,
    sidecar_read,
    sidecar_read_blob,
    sidecar_write,
    theta_union,
)
from zeroscan.sketches.hashing import hash_float64_array, hash_int64_array, hash_string_array

ints = st.integers(-(1 << 63), (1 << 63) - 1)


# -- hashing ----------------------------------------------------------------


@given(st.lists(ints, max_size=50))
def test_vectorized_int_hash_matches_scalar(values):
    got = hash_int64_array(np.array(values, dtype=np.int64)).tolist()
    assert got == [hash_value(v) for v in values]


@given(st.lists(st.floats(allow_nan=False), max_size=50))
def test_vectorized_float_hash_matches_scalar(values):
    got = hash_float64_array(np.array(values, dtype=np.float64)).tolist()
    assert got == [hash_value(float(v)) for v in values]


@given(st.lists(st.text(st.characters(blacklist_categories=("Cs",)), max_size=20), max_size=30))
def test_vectorized_string_hash_matches_scalar(values):
    assert hash_string_array(values).tolist() == [hash_value(v) for v in values]


def test_hash_depends_on_seed():
    assert hash_value("a", seed=1) != hash_value("a", seed=2)


# -- theta ------------------------------------------------------------------


def test_theta_is_exact_below_k():
    s = ThetaSketch()
    for v in [1, 2, 2, 3, 3, 3]:
        s.update(v)
    assert s.exact and s.estimate() == 3.0


def test_theta_estimate_within_bound_above_k():
    s = ThetaSketch()
    s.update_hashes(hash_int64_array(np.arange(200_000, dtype=np.int64)))
    assert not s.exact
    assert abs(s.estimate() - 200_000) / 200_000 < THETA_RELATIVE_ERROR


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.integers(0, 20_000), max_size=800), min_size=1, max_size=8), st.integers(16, 512))
def test_theta_union_equals_single_pass(parts, k):
    single = ThetaSketch(k)
    per_part = []
    for part in parts:
        single.update_hashes(hash_int64_array(np.array(part, dtype=np.int64)))
        p = ThetaSketch(k)
        p.update_hashes(hash_int64_array(np.array(part, dtype=np.int64)))
        per_part.append(p)
    union = theta_union(per_part)
    assert union == single
    assert union.to_bytes() == single.to_bytes()
    assert theta_union(list(reversed(per_part))).to_bytes() == single.to_bytes()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 5000), max_size=2000), st.integers(8, 256))
def test_theta_bulk_update_matches_scalar(values, k):
    a, b = ThetaSketch(k), ThetaSketch(k)
    for v in values:
        a.update(v)
    b.update_hashes(hash_int64_array(np.array(values, dtype=np.int64)))
    assert a == b


@given(st.lists(st.integers(0, 10_000), max_size=500))
def test_theta_serialization_round_trip(values):
    s = ThetaSketch(64)
    for v in values:
        s.update(v)
    assert ThetaSketch.from_bytes(s.to_bytes()) == s


def test_theta_rejects_truncated_payload():
    s = ThetaSketch()
    s.update(1)
    with pytest.raises(TruncatedFile):
        ThetaSketch.from_bytes(s.to_bytes()[:-1])


# -- kll --------------------------------------------------------------------


def _max_rank_error(sketch: KllSketch, data: np.ndarray) -> float:
    ordered = np.sort(data)
    n = len(ordered)
    worst = 0.0
    for q in np.linspace(0.01, 0.99, 99):
        v = sketch.quantile(q)
        lo = np.searchsorted(ordered, v, "left") / n
        hi = np.searchsorted(ordered, v, "right") / n
        worst = max(worst, 0.0 if lo <= q <= hi else min(abs(q - lo), abs(q - hi)))
    return worst


@pytest.mark.parametrize("dist", ["uniform", "normal", "lognormal"])
def test_kll_rank_error_within_epsilon(dist):
    rng = np.random.default_rng(11)
    data = getattr(rng, dist)(size=200_000)
    s = KllSketch().update_many(data)
    assert _max_rank_error(s, data) <= RANK_EPSILON


def test_kll_merged_rank_error_within_epsilon():
    rng = np.random.default_rng(5)
    chunks = [rng.normal(i, 3, 5000) for i in range(40)]
    merged = kll_merge_all([KllSketch().update_many(c) for c in chunks])
    data = np.concatenate(chunks)
    assert merged.n == data.size
    assert _max_rank_error(merged, data) <= RANK_EPSILON


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e9, 1e9), min_size=1, max_size=3000))
def test_kll_endpoints_and_monotone(values):
    s = KllSketch(16).update_many(values)
    assert s.quantile(0.0) == min(values)
    assert s.quantile(1.0) == max(values)
    qs = [s.quantile(q) for q in np.linspace(0, 1, 21)]
    assert qs == sorted(qs)
    assert s.n == len(values)


@given(st.lists(st.floats(-1e6, 1e6), max_size=2000))
def test_kll_is_deterministic_and_round_trips(values):
    a = KllSketch(16).update_many(values)
    b = KllSketch(16).update_many(values)
    assert a.to_bytes() == b.to_bytes()
    assert KllSketch.from_bytes(a.to_bytes()) == a


def test_kll_rejects_non_finite():
    with pytest.raises(ValueError):
        KllSketch().update(math.nan)


def test_kll_empty_quantile_raises():
    with pytest.raises(EmptySketch):
        KllSketch().quantile(0.5)


def test_kll_blob_size_is_a_few_kilobytes():
    s = KllSketch().update_many(np.random.default_rng(0).random(1_000_000))
    assert 2_000 <= len(s.to_bytes()) <= 10_000


# -- sidecar ----------------------------------------------------------------


def _sidecar() -> SketchSidecar:
    t = ThetaSketch()
    for v in range(100):
        t.update(v)
    k = KllSketch().update_many(range(100))
    sc = SketchSidecar()
    sc.add_theta(1, t)
    sc.add_kll(1, k)
    sc.add_theta(3, ThetaSketch())
    return sc


def test_sidecar_round_trip(tmp_path):
    path = tmp_path / "a.zsb"
    sc = _sidecar()
    sidecar_write(path, sc)
    back = sidecar_read(path)
    assert back == sc
    assert load_theta(path, 1) == sc.theta(1)
    assert load_kll(path, 1) == sc.kll(1)
    assert load_kll(path, 3) is None


def test_sidecar_single_blob_read(tmp_path):
    path = tmp_path / "a.zsb"
    sidecar_write(path, _sidecar())
    _, payload = sidecar_read_blob(path, BlobType.KLL, 1)
    assert KllSketch.from_bytes(payload).n == 100
    assert sidecar_read_blob(path, BlobType.KLL, 9)[1] is None


def test_sidecar_errors(tmp_path):
    data = _sidecar().to_bytes()
    with pytest.raises(BadMagic):
        SketchSidecar.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(TruncatedFile):
        SketchSidecar.from_bytes(data[:-3])
    with pytest.raises(DuplicateBlob):
        _sidecar().add_theta(1, ThetaSketch())
