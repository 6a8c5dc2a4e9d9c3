"""Property-based checks complementing the example-based suites."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from retsym import (
    FeatureMode,
    FeatureVector,
    GradePair,
    LesionClass,
    LesionMask,
    SizeThresholds,
    evaluate,
    extract_regions,
    parse,
    render,
)

from oracles import bucket_word, flood_fill_sizes

grade_pairs = st.builds(
    GradePair, dr=st.integers(0, 4), dme=st.integers(0, 2)
)

safe_ids = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-",
    min_size=1,
    max_size=20,
)


def _vector(mode, counts):
    return FeatureVector(mode, tuple(counts))


@given(
    image_id=safe_ids,
    mode=st.sampled_from(list(FeatureMode)),
    counts=st.lists(st.integers(0, 10_000), min_size=12, max_size=12),
    grade=grade_pairs,
)
def test_parse_inverts_render(image_id, mode, counts, grade):
    fv = _vector(mode, counts[: mode.length])
    got_id, _, got_fv = parse(render(image_id, fv, grade).rendered)
    assert got_id == image_id
    assert got_fv == fv


@given(
    cuts=st.lists(st.integers(0, 20_000), min_size=4, max_size=4, unique=True),
    size=st.integers(1, 25_000),
)
def test_bucket_of_agrees_with_if_chain(cuts, size):
    t0, t1, t2, t3 = sorted(cuts)
    thresholds = SizeThresholds(t0, t1, t2, t3)
    words = {0: "small", 1: "medium", 2: "large", None: None}
    assert words[thresholds.bucket_of(size)] == bucket_word(size, t0, t1, t2, t3)


@given(
    pairs=st.lists(st.tuples(grade_pairs, grade_pairs), min_size=1, max_size=30),
)
def test_joint_accuracy_dominated_by_marginals(pairs):
    reference = [r for r, _ in pairs]
    predicted = [p for _, p in pairs]
    report = evaluate(reference, predicted)
    assert report.joint_accuracy <= report.dr_accuracy
    assert report.joint_accuracy <= report.dme_accuracy


@settings(deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    height=st.integers(1, 24),
    width=st.integers(1, 24),
    density=st.floats(0.0, 1.0),
)
def test_extraction_partitions_foreground(seed, height, width, density):
    pixels = np.random.default_rng(seed).random((height, width)) < density
    region_set = extract_regions(LesionMask(pixels, LesionClass.MA))
    assert sum(region_set.sizes()) == int(pixels.sum())
    assert sorted(region_set.sizes()) == sorted(flood_fill_sizes(pixels))
