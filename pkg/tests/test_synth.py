import numpy as np
import pytest

from retsym import (
    GradePair,
    LabelRule,
    LesionClass,
    PackingError,
    SynthSpec,
    extended_features,
    extract_regions,
    generate,
    label_rule,
    load_manifest,
    load_mask,
    plan_dataset,
    read_ground_truth,
    simple_features,
)
from retsym.symbolic import LESION_ORDER
from retsym.synth import GROUND_TRUTH_COLUMNS, rasterize


def _buckets(ma=(0, 0, 0), he=(0, 0, 0), se=(0, 0, 0), ex=(0, 0, 0)):
    return np.array([ma, he, se, ex])


# ---------------------------------------------------------------------------
# Labeling rules


@pytest.mark.parametrize(
    "counts,expected",
    [
        (_buckets(), GradePair(0, 0)),
        (_buckets(ma=(5, 0, 0)), GradePair(1, 0)),
        (_buckets(ma=(2, 0, 0), he=(1, 0, 0)), GradePair(2, 0)),
        (_buckets(he=(21, 0, 0)), GradePair(3, 0)),
        (_buckets(he=(20, 0, 0)), GradePair(2, 0)),  # boundary: needs strictly > 20
        (_buckets(he=(0, 0, 3)), GradePair(4, 0)),  # 3 large HEs outrank the >20 rule
        (_buckets(he=(0, 0, 2)), GradePair(2, 0)),
        (_buckets(he=(30, 0, 2)), GradePair(3, 0)),
        (_buckets(he=(30, 0, 3)), GradePair(4, 0)),
        (_buckets(se=(1, 0, 0)), GradePair(2, 0)),
        (_buckets(ex=(4, 0, 0)), GradePair(2, 1)),
        (_buckets(ex=(4, 1, 0)), GradePair(2, 2)),
        (_buckets(ex=(0, 0, 1)), GradePair(2, 2)),
        (_buckets(ma=(1, 0, 0), ex=(1, 0, 0)), GradePair(2, 1)),
    ],
)
def test_size_aware_rule(counts, expected):
    assert label_rule(counts, LabelRule.SIZE_AWARE) == expected


@pytest.mark.parametrize(
    "counts,expected",
    [
        (_buckets(), GradePair(0, 0)),
        (_buckets(ma=(9, 0, 0)), GradePair(1, 0)),
        (_buckets(he=(41, 0, 0)), GradePair(4, 0)),
        (_buckets(he=(40, 0, 0)), GradePair(3, 0)),
        (_buckets(he=(21, 0, 0)), GradePair(3, 0)),
        (_buckets(he=(20, 0, 0)), GradePair(2, 0)),
        (_buckets(he=(0, 0, 3)), GradePair(2, 0)),  # sizes carry no weight here
        (_buckets(ex=(11, 0, 0)), GradePair(2, 2)),
        (_buckets(ex=(10, 0, 0)), GradePair(2, 1)),
        (_buckets(ex=(0, 9, 1)), GradePair(2, 1)),
    ],
)
def test_count_only_rule(counts, expected):
    assert label_rule(counts, LabelRule.COUNT_ONLY) == expected


def test_label_rule_default_is_size_aware():
    assert label_rule(_buckets(he=(0, 0, 3))) == GradePair(4, 0)


def test_label_rule_validation():
    with pytest.raises(ValueError):
        label_rule(np.zeros((3, 4), dtype=int))
    with pytest.raises(ValueError):
        label_rule(_buckets(ma=(-1, 0, 0)))


def test_equal_totals_can_disagree():
    """The size-aware label is not a function of per-class totals."""
    a = _buckets(he=(18, 0, 3))  # 21 HEs, three large -> PDR
    b = _buckets(he=(21, 0, 0))  # 21 HEs, all small -> severe
    assert a.sum() == b.sum()
    assert label_rule(a) == GradePair(4, 0)
    assert label_rule(b) == GradePair(3, 0)

    c = _buckets(ma=(1, 0, 0), ex=(5, 0, 0))
    d = _buckets(ma=(1, 0, 0), ex=(4, 1, 0))
    assert c.sum() == d.sum()
    assert label_rule(c).dme == 1
    assert label_rule(d).dme == 2


# ---------------------------------------------------------------------------
# Spec validation


def test_spec_validation():
    SynthSpec(n_images=1, width=64, height=64)
    with pytest.raises(ValueError):
        SynthSpec(n_images=-1)
    with pytest.raises(ValueError):
        SynthSpec(n_images=1, width=0)
    with pytest.raises(ValueError, match="small"):
        SynthSpec(n_images=1, small_size=(5, 80))  # 5 is below tau0+1
    with pytest.raises(ValueError, match="medium"):
        SynthSpec(n_images=1, medium_size=(400, 900))
    with pytest.raises(ValueError, match="large"):
        SynthSpec(n_images=1, large_size=(1001, 20000))
    with pytest.raises(ValueError, match="noise"):
        SynthSpec(n_images=1, noise_size=(1, 11))
    with pytest.raises(ValueError, match="noise_count"):
        SynthSpec(n_images=1, noise_count=(2, 1))
    with pytest.raises(ValueError, match="active_dr"):
        SynthSpec(n_images=1, active_dr_grades=(0, 7))
    with pytest.raises(ValueError, match="active_dme"):
        SynthSpec(n_images=1, active_dme_grades=())


def test_size_range_accessor():
    spec = SynthSpec(n_images=1)
    assert spec.size_range(0) == spec.small_size
    assert spec.size_range(1) == spec.medium_size
    assert spec.size_range(2) == spec.large_size


# ---------------------------------------------------------------------------
# Planning


def test_plan_dataset_deterministic():
    spec = SynthSpec(n_images=12, width=256, height=256, seed=3)
    a = plan_dataset(spec)
    b = plan_dataset(spec)
    assert a == b


def test_plans_respect_rule_and_buckets():
    spec = SynthSpec(n_images=40, width=256, height=256, seed=7)
    plans = plan_dataset(spec)
    assert [p.image_id for p in plans] == [f"img_{i:04d}" for i in range(40)]
    for plan in plans:
        assert label_rule(plan.bucket_counts, spec.rule) == plan.label
        for row, cls in enumerate(LESION_ORDER):
            sizes = plan.planted_sizes(cls)
            by_bucket = [0, 0, 0]
            for size in sizes:
                bucket = spec.thresholds.bucket_of(size)
                if bucket is None:
                    assert spec.noise_size[0] <= size <= spec.noise_size[1]
                else:
                    low, high = spec.size_range(bucket)
                    assert low <= size <= high
                    by_bucket[bucket] += 1
            assert by_bucket == plan.bucket_counts[row].tolist()


def test_shapes_stay_on_canvas_without_touching():
    spec = SynthSpec(n_images=10, width=200, height=200, seed=13)
    for plan in plan_dataset(spec):
        for cls in LESION_ORDER:
            for s in plan.shapes[cls]:
                assert 0 <= s.row and s.row + s.height <= spec.height
                assert 0 <= s.col and s.col + s.width <= spec.width
            boxes = [(s.row, s.col, s.row + s.height, s.col + s.width) for s in plan.shapes[cls]]
            for i, a in enumerate(boxes):
                for b in boxes[i + 1 :]:
                    # a one-pixel separating band keeps 8-connectivity from
                    # fusing planted regions
                    apart = (
                        a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]
                    )
                    assert apart, f"{a} and {b} touch"


def test_rasterized_sizes_match_plan():
    spec = SynthSpec(n_images=6, width=256, height=256, seed=21)
    for plan in plan_dataset(spec):
        for cls in LESION_ORDER:
            mask = rasterize(plan, spec, cls)
            extracted = sorted(extract_regions(mask).sizes())
            assert extracted == sorted(plan.planted_sizes(cls))


def test_packing_failure_names_image_and_class():
    spec = SynthSpec(
        n_images=5, width=40, height=40, seed=0,
        active_dr_grades=(3,), active_dme_grades=(0,),
    )
    with pytest.raises(PackingError, match=r"img_0000.*HE"):
        plan_dataset(spec)


def test_simple_vector_does_not_determine_label():
    # noise specks and size-aware grading make identical per-class region
    # counts compatible with different labels
    plans = plan_dataset(SynthSpec(n_images=400, width=256, height=256, seed=11))
    seen: dict[tuple, GradePair] = {}
    collisions = 0
    for plan in plans:
        key = tuple(len(plan.shapes[cls]) for cls in LESION_ORDER)
        if key in seen and seen[key] != plan.label:
            collisions += 1
        seen.setdefault(key, plan.label)
    assert collisions >= 1


def test_active_grades_restrict_sampling():
    spec = SynthSpec(
        n_images=30, width=256, height=256, seed=2,
        active_dr_grades=(0, 1), active_dme_grades=(0,),
    )
    for plan in plan_dataset(spec):
        assert plan.label.dr in (0, 1)
        assert plan.label.dme == 0


# ---------------------------------------------------------------------------
# Full generation


def test_generated_tree_layout(small_synth_dir):
    out_dir, manifest = small_synth_dir
    assert manifest == out_dir / "manifest.csv"
    assert (out_dir / "ground_truth.csv").is_file()
    masks = sorted((out_dir / "masks").glob("*.pgm"))
    assert len(masks) == 30 * 4
    assert masks[0].name == "img_0000_EX.pgm"


def test_planted_equals_extracted(small_synth_dir):
    out_dir, manifest = small_synth_dir
    records = load_manifest(manifest)
    truth = {t[0]: t for t in read_ground_truth(out_dir / "ground_truth.csv")}
    assert set(truth) == {r.image_id for r in records}
    for record in records:
        region_sets = [
            extract_regions(load_mask(record.mask_paths[cls], cls)) for cls in LESION_ORDER
        ]
        _, counts, label = truth[record.image_id]
        assert extended_features(region_sets).values == tuple(counts.ravel())
        assert (record.dr_grade, record.dme_grade) == (label.dr, label.dme)
        # simple counts additionally see the sub-threshold specks
        simple = simple_features(region_sets).values
        assert all(s >= c for s, c in zip(simple, counts.sum(axis=1)))


def test_generate_is_byte_identical(tmp_path):
    spec = SynthSpec(n_images=5, width=256, height=256, seed=9)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    generate(spec, dir_a)
    generate(spec, dir_b)
    files_a = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(dir_b) for p in dir_b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (dir_a / rel).read_bytes() == (dir_b / rel).read_bytes(), rel


def test_generate_cleans_up_after_failure(tmp_path):
    spec = SynthSpec(
        n_images=4, width=40, height=40, seed=0,
        active_dr_grades=(3,), active_dme_grades=(0,),
    )
    out = tmp_path / "broken"
    with pytest.raises(PackingError):
        generate(spec, out)
    assert [p for p in out.rglob("*") if p.is_file()] == []


def test_ground_truth_round_trip(tmp_path):
    spec = SynthSpec(n_images=4, width=128, height=128, seed=14)
    generate(spec, tmp_path)
    rows = read_ground_truth(tmp_path / "ground_truth.csv")
    plans = plan_dataset(spec)
    assert [r[0] for r in rows] == [p.image_id for p in plans]
    for (image_id, counts, label), plan in zip(rows, plans):
        assert np.array_equal(counts, plan.bucket_counts)
        assert label == plan.label


def test_ground_truth_header():
    assert GROUND_TRUTH_COLUMNS[:4] == ("image_id", "ma_small", "ma_medium", "ma_large")
    assert GROUND_TRUTH_COLUMNS[-2:] == ("dr_grade", "dme_grade")


def test_read_ground_truth_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope\n")
    with pytest.raises(ValueError, match="sidecar"):
        read_ground_truth(path)
    path.write_text(",".join(GROUND_TRUTH_COLUMNS) + "\nimg,1,2\n")
    with pytest.raises(ValueError, match="malformed"):
        read_ground_truth(path)


def test_count_only_datasets_have_count_labels(tmp_path):
    spec = SynthSpec(
        n_images=12, width=256, height=256, seed=4, rule=LabelRule.COUNT_ONLY,
    )
    for plan in plan_dataset(spec):
        assert label_rule(plan.bucket_counts, LabelRule.COUNT_ONLY) == plan.label
