"""
Does size quantization earn its keep?  A paired feature ablation
================================================================

Train two graders on one shared train/test split — one on simple 4-value
count vectors, one on extended 12-value size-bucketed vectors — and compare
held-out joint accuracy (both heads right at once).

Two dataset designs bound the answer from both sides:

  * size-aware labels: grades genuinely depend on region sizes, so the
    simple arm is blind to part of the signal and should lose clearly;
  * count-only labels with noise generation turned off: nothing in the
    labels depends on size, so the two arms should tie (a control for the
    harness itself).
"""

import tempfile

from retsym import LabelRule, SynthSpec, TrainConfig, ablation, generate

config = TrainConfig(max_epochs=60)

with tempfile.TemporaryDirectory() as td:
    manifest = generate(SynthSpec(n_images=400, width=256, height=256, seed=9), f"{td}/sized")
    result = ablation(manifest, config)
    print(f"size-aware labels ({result.n_train} train / {result.n_test} test):")
    print(f"  simple   joint accuracy {result.simple.joint_accuracy:.4f}")
    print(f"  extended joint accuracy {result.extended.joint_accuracy:.4f}")
    print(f"  gap (extended - simple) {result.gap:+.4f}")

with tempfile.TemporaryDirectory() as td:
    control_spec = SynthSpec(
        n_images=400,
        width=256,
        height=256,
        seed=9,
        rule=LabelRule.COUNT_ONLY,
        noise_count=(0, 0),          # specks would pollute only the simple arm
        active_dr_grades=(0, 1, 2),  # presence-style decisions train reliably
        active_dme_grades=(0, 1),
    )
    manifest = generate(control_spec, f"{td}/control")
    control = ablation(manifest, config)
    print(f"\ncount-only control ({control.n_train} train / {control.n_test} test):")
    print(f"  simple   joint accuracy {control.simple.joint_accuracy:.4f}")
    print(f"  extended joint accuracy {control.extended.joint_accuracy:.4f}")
    print(f"  gap (extended - simple) {control.gap:+.4f}")

print("\nreading: a large positive gap on size-aware labels plus a near-zero")
print("gap on the control says the advantage comes from the representation,")
print("not from some quirk of the training harness.")
