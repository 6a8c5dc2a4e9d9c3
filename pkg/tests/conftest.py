from __future__ import annotations

import numpy as np
import pytest

from retsym import LesionClass, LesionMask, SynthSpec, generate


def mask_from_ascii(art: str, lesion_class: LesionClass = LesionClass.MA) -> LesionMask:
    """Build a mask from rows of '#' (foreground) and '.' (background)."""
    rows = [line.strip() for line in art.strip().splitlines()]
    width = max(len(r) for r in rows)
    grid = np.zeros((len(rows), width), dtype=bool)
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                grid[r, c] = True
            elif ch != ".":
                raise ValueError(f"unexpected character {ch!r} in mask art")
    return LesionMask(pixels=grid, lesion_class=lesion_class)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One summary line per acceptance criterion, independent of capture."""
    lines = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid or getattr(report, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1]
            parts = name.split("_")  # test_a3_extracted_features_... -> A3 ...
            label = f"{parts[1].upper()} {' '.join(parts[2:])}"
            verdict = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
            lines.append((label, f"{label}: {verdict} ({report.duration:.1f}s)"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """A 30-image labeled dataset shared by tests that just need real files."""
    out = tmp_path_factory.mktemp("synth_small")
    spec = SynthSpec(n_images=30, width=160, height=160, seed=5)
    manifest = generate(spec, out)
    return out, manifest
