"""Human-readable symbolic feature vectors built from lesion regions.

Two representations: the simple 4-vector of raw per-class region counts, and
the extended 12-vector of per-class small/medium/large counts after size
quantization.  Size buckets follow half-open interval rules on pixel count s:
small when t0 < s <= t1, medium when t1 < s <= t2, large when t2 < s <= t3;
anything at or below t0, or above t3, is discarded as segmentation noise.
Only the extended representation filters; the simple counts keep every
region, single-pixel specks included.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .mask_io import DME_GRADE_RANGE, DR_GRADE_RANGE, LesionClass
from .regions import Region, RegionSet

SIZE_WORDS = ("small", "medium", "large")

LESION_ORDER = (LesionClass.MA, LesionClass.HE, LesionClass.SE, LesionClass.EX)


class FeatureMode(enum.Enum):
    SIMPLE = "simple"
    EXTENDED = "extended"

    @property
    def length(self) -> int:
        return 4 if self is FeatureMode.SIMPLE else 12


@dataclass(frozen=True)
class SizeThresholds:
    """Strictly increasing pixel-count cut points for size quantization."""

    tau0: int = 10
    tau1: int = 500
    tau2: int = 1000
    tau3: int = 10000

    def __post_init__(self) -> None:
        if not (self.tau0 < self.tau1 < self.tau2 < self.tau3):
            raise ValueError(f"thresholds must be strictly increasing, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.tau0, self.tau1, self.tau2, self.tau3)

    def bucket_of(self, size: int) -> Optional[int]:
        """Bucket index 0/1/2 for small/medium/large, None for discarded."""
        if self.tau0 < size <= self.tau1:
            return 0
        if self.tau1 < size <= self.tau2:
            return 1
        if self.tau2 < size <= self.tau3:
            return 2
        return None


DEFAULT_THRESHOLDS = SizeThresholds()


@dataclass(frozen=True)
class SizeBuckets:
    """Partition of one region set into small/medium/large/discarded."""

    small: tuple[Region, ...]
    medium: tuple[Region, ...]
    large: tuple[Region, ...]
    discarded: tuple[Region, ...]

    def counts(self) -> tuple[int, int, int]:
        return (len(self.small), len(self.medium), len(self.large))


@dataclass(frozen=True)
class FeatureVector:
    """Region counts in a fixed order: MA, HE, SE, EX (x small/medium/large
    when extended)."""

    mode: FeatureMode
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        values = tuple(int(v) for v in self.values)
        if len(values) != self.mode.length:
            raise ValueError(
                f"{self.mode.value} feature vector needs {self.mode.length} entries, "
                f"got {len(values)}"
            )
        if any(v < 0 for v in values):
            raise ValueError(f"feature counts must be >= 0, got {values}")
        object.__setattr__(self, "values", values)


def bucket_regions(region_set: RegionSet, thresholds: SizeThresholds) -> SizeBuckets:
    """Assign each region to small/medium/large/discarded by its pixel count."""
    groups: tuple[list[Region], ...] = ([], [], [], [])
    for region in region_set.regions:
        bucket = thresholds.bucket_of(region.size)
        groups[3 if bucket is None else bucket].append(region)
    return SizeBuckets(*(tuple(g) for g in groups))


def _by_class(region_sets: Iterable[RegionSet]) -> dict[LesionClass, RegionSet]:
    by_class: dict[LesionClass, RegionSet] = {}
    for rs in region_sets:
        if rs.lesion_class in by_class:
            raise ValueError(f"duplicate region set for lesion class {rs.lesion_class.name}")
        by_class[rs.lesion_class] = rs
    missing = [cls.name for cls in LESION_ORDER if cls not in by_class]
    if missing:
        raise ValueError(f"missing region set(s) for lesion class(es) {', '.join(missing)}")
    return by_class


def simple_features(region_sets: Iterable[RegionSet]) -> FeatureVector:
    """Raw region counts per class, unfiltered: [n_MA, n_HE, n_SE, n_EX]."""
    by_class = _by_class(region_sets)
    return FeatureVector(
        mode=FeatureMode.SIMPLE,
        values=tuple(len(by_class[cls].regions) for cls in LESION_ORDER),
    )


def extended_features(
    region_sets: Iterable[RegionSet], thresholds: SizeThresholds = DEFAULT_THRESHOLDS
) -> FeatureVector:
    """Size-bucketed counts per class; discarded regions contribute nothing."""
    by_class = _by_class(region_sets)
    values: list[int] = []
    for cls in LESION_ORDER:
        values.extend(bucket_regions(by_class[cls], thresholds).counts())
    return FeatureVector(mode=FeatureMode.EXTENDED, values=tuple(values))


# ---------------------------------------------------------------------------
# Features CSV: image_id, f1..fK, dr_grade, dme_grade (grades may be empty)


class FeaturesCsvError(ValueError):
    """Raised for malformed features CSV files."""


FeatureRow = tuple[str, FeatureVector, Optional[int], Optional[int]]


def features_header(mode: FeatureMode) -> list[str]:
    return ["image_id"] + [f"f{i}" for i in range(1, mode.length + 1)] + ["dr_grade", "dme_grade"]


def write_features_csv(path: str | Path, mode: FeatureMode, rows: Sequence[FeatureRow]) -> None:
    path = Path(path)
    with path.open("w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(features_header(mode))
        for image_id, vector, dr, dme in rows:
            if vector.mode is not mode:
                raise FeaturesCsvError(
                    f"row {image_id!r} has {vector.mode.value} features in a {mode.value} file"
                )
            writer.writerow(
                [image_id, *vector.values, "" if dr is None else dr, "" if dme is None else dme]
            )


def read_features_csv(path: str | Path) -> tuple[FeatureMode, list[FeatureRow]]:
    """Read a features CSV, inferring the mode from the column count."""
    path = Path(path)
    if not path.is_file():
        raise FeaturesCsvError(f"{path}: features file does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeaturesCsvError(f"{path}: empty file") from None
        for mode in FeatureMode:
            if header == features_header(mode):
                break
        else:
            raise FeaturesCsvError(f"{path}: unrecognized header {header!r}")
        rows: list[FeatureRow] = []
        seen: set[str] = set()
        for line, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise FeaturesCsvError(
                    f"{path}: line {line}: expected {len(header)} cells, got {len(cells)}"
                )
            image_id = cells[0]
            if image_id in seen:
                raise FeaturesCsvError(f"{path}: line {line}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            try:
                values = tuple(int(c) for c in cells[1 : 1 + mode.length])
                vector = FeatureVector(mode=mode, values=values)
            except ValueError as exc:
                raise FeaturesCsvError(f"{path}: line {line}: {exc}") from None
            dr_cell, dme_cell = cells[-2].strip(), cells[-1].strip()
            if (dr_cell == "") != (dme_cell == ""):
                raise FeaturesCsvError(
                    f"{path}: line {line}: grades must be present together or absent together"
                )
            dr = dme = None
            if dr_cell:
                try:
                    dr, dme = int(dr_cell), int(dme_cell)
                except ValueError:
                    raise FeaturesCsvError(f"{path}: line {line}: non-integer grade") from None
                if dr not in DR_GRADE_RANGE or dme not in DME_GRADE_RANGE:
                    raise FeaturesCsvError(
                        f"{path}: line {line}: grade pair ({dr}, {dme}) out of range"
                    )
            rows.append((image_id, vector, dr, dme))
    return mode, rows
