import numpy as np
import pytest

from retsym import (
    EvalReport,
    FeatureMode,
    GradePair,
    LabelRule,
    SynthSpec,
    TrainConfig,
    ablation,
    evaluate,
    extract_dataset,
    features_for_mode,
    format_report,
    generate,
    joint_accuracy,
    write_report_csv,
)
from retsym.evaluation import REPORT_COLUMNS


def _pairs(rng, n):
    return [GradePair(int(rng.integers(0, 5)), int(rng.integers(0, 3))) for _ in range(n)]


def test_joint_accuracy_counts_exact_pairs():
    ref = [GradePair(0, 0), GradePair(1, 1), GradePair(2, 2), GradePair(3, 0)]
    pred = [GradePair(0, 0), GradePair(1, 2), GradePair(2, 2), GradePair(4, 0)]
    # pair 1 misses on DME, pair 3 on DR
    assert joint_accuracy(ref, pred) == 0.5


def test_joint_accuracy_validation():
    with pytest.raises(ValueError):
        joint_accuracy([], [])
    with pytest.raises(ValueError):
        joint_accuracy([GradePair(0, 0)], [GradePair(0, 0), GradePair(0, 0)])


def test_self_evaluation_is_perfect():
    rng = np.random.default_rng(0)
    pairs = _pairs(rng, 100)
    report = evaluate(pairs, pairs)
    assert report.joint_accuracy == 1.0
    assert report.dr_accuracy == 1.0 and report.dme_accuracy == 1.0
    assert report.dr_confusion.trace() == 100
    assert report.dme_confusion.trace() == 100


def test_joint_bounded_by_marginals():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        report = evaluate(_pairs(rng, n), _pairs(rng, n))
        assert report.joint_accuracy <= min(report.dr_accuracy, report.dme_accuracy)
        assert 0.0 <= report.joint_accuracy <= 1.0


def test_confusion_matrices_partition_samples():
    rng = np.random.default_rng(2)
    ref, pred = _pairs(rng, 64), _pairs(rng, 64)
    report = evaluate(ref, pred)
    assert report.dr_confusion.sum() == 64
    assert report.dme_confusion.sum() == 64
    assert report.dr_confusion[3, 1] == sum(
        1 for r, p in zip(ref, pred) if r.dr == 3 and p.dr == 1
    )
    assert report.dr_accuracy == report.dr_confusion.trace() / 64
    assert report.dme_accuracy == report.dme_confusion.trace() / 64


def test_report_equality_ignores_array_identity():
    rng = np.random.default_rng(3)
    ref, pred = _pairs(rng, 10), _pairs(rng, 10)
    assert evaluate(ref, pred) == evaluate(ref, pred)
    assert evaluate(ref, pred) != evaluate(pred, ref) or ref == pred


def test_format_report_mentions_everything():
    rng = np.random.default_rng(4)
    report = evaluate(_pairs(rng, 20), _pairs(rng, 20))
    text = format_report(report, title="held-out")
    assert text.startswith("held-out\n")
    assert f"joint accuracy: {report.joint_accuracy:.4f}" in text
    assert "DR confusion" in text and "DME confusion" in text
    # 5x5 + 3x3 rows
    assert len(text.splitlines()) == 1 + 4 + 1 + 5 + 1 + 3


def test_write_report_csv(tmp_path):
    rng = np.random.default_rng(5)
    ref, pred = _pairs(rng, 30), _pairs(rng, 30)
    report = evaluate(ref, pred)
    path = tmp_path / "report.csv"
    write_report_csv(path, [("simple", report), ("extended", report)])
    lines = path.read_text().splitlines()
    assert lines[0] == "arm,n,joint_accuracy,dr_accuracy,dme_accuracy"
    assert lines[0] == ",".join(REPORT_COLUMNS)
    cells = lines[1].split(",")
    assert cells[0] == "simple" and cells[1] == "30"
    # float repr round-trips exactly
    assert float(cells[2]) == report.joint_accuracy
    with pytest.raises(ValueError, match="comma"):
        write_report_csv(path, [("a,b", report)])


def test_extract_dataset_and_features(small_synth_dir):
    _, manifest = small_synth_dir
    images = extract_dataset(manifest)
    assert len(images) == 30
    assert all(img.label is not None for img in images)
    assert all(len(img.region_sets) == 4 for img in images)
    simple = features_for_mode(images, FeatureMode.SIMPLE)
    extended = features_for_mode(images, FeatureMode.EXTENDED)
    assert all(fv.mode is FeatureMode.SIMPLE for fv in simple)
    assert all(fv.mode is FeatureMode.EXTENDED for fv in extended)
    # simple sees sub-threshold specks that extended discards
    for s, e in zip(simple, extended):
        assert sum(s.values) >= sum(e.values)


def test_ablation_shares_split_and_reports_gap(small_synth_dir):
    _, manifest = small_synth_dir
    config = TrainConfig(max_epochs=3)
    result = ablation(manifest, config, hidden_dims=(16, 8))
    assert result.n_train + result.n_test == 30
    assert result.n_test == 6
    assert result.simple.n_samples == result.extended.n_samples == 6
    assert result.gap == pytest.approx(
        result.extended.joint_accuracy - result.simple.joint_accuracy
    )
    # deterministic end to end
    again = ablation(manifest, config, hidden_dims=(16, 8))
    assert again.simple == result.simple and again.extended == result.extended


def test_ablation_validation(tmp_path, small_synth_dir):
    _, manifest = small_synth_dir
    with pytest.raises(ValueError, match="test_fraction"):
        ablation(manifest, TrainConfig(), test_fraction=1.0)

    spec = SynthSpec(n_images=3, width=256, height=256, seed=1)
    small_manifest = generate(spec, tmp_path / "tiny")
    with pytest.raises(ValueError, match="at least 5"):
        ablation(small_manifest, TrainConfig(), hidden_dims=(8,))


def test_count_only_control_closes_the_gap(tmp_path):
    """When labels depend on counts alone, the two feature modes should tie.

    The control dataset turns off the two asymmetries that favor extended
    features: sub-threshold noise specks (which pollute only the simple
    counts) and size-sensitive labels.  Grades are restricted to the
    presence-style decisions both modes learn reliably, so the comparison
    measures representation, not optimizer luck.
    """
    spec = SynthSpec(
        n_images=800,
        width=256,
        height=256,
        seed=0,
        rule=LabelRule.COUNT_ONLY,
        noise_count=(0, 0),
        active_dr_grades=(0, 1, 2),
        active_dme_grades=(0, 1),
    )
    manifest = generate(spec, tmp_path / "control")
    result = ablation(manifest, TrainConfig(max_epochs=100))
    assert abs(result.gap) <= 0.05, (
        f"control gap {result.gap:+.4f} (simple {result.simple.joint_accuracy:.4f}, "
        f"extended {result.extended.joint_accuracy:.4f})"
    )


def test_ablation_rejects_unlabeled(tmp_path, small_synth_dir):
    out_dir, manifest = small_synth_dir
    stripped = tmp_path / "unlabeled.csv"
    lines = manifest.read_text().splitlines()
    header, first, rest = lines[0], lines[1], lines[2:]
    cells = first.split(",")
    cells[-2] = cells[-1] = ""
    # absolute mask paths keep the copied manifest valid from tmp_path
    rewritten = []
    for line in [",".join(cells), *rest]:
        parts = line.split(",")
        parts[1:5] = [str(out_dir / p) for p in parts[1:5]]
        rewritten.append(",".join(parts))
    stripped.write_text("\n".join([header, *rewritten]) + "\n")
    with pytest.raises(ValueError, match="grades for every image"):
        ablation(stripped, TrainConfig(), hidden_dims=(8,))
