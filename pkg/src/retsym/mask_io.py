"""Binary lesion-mask I/O and the dataset manifest.

Masks are single-channel PGM rasters (P2 ASCII or P5 binary, maxval <= 255).
A pixel is lesion foreground iff its sample value exceeds 127.  The manifest
is a CSV binding four per-class mask files and an optional (DR, DME) label
pair to each image id.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

BINARIZE_THRESHOLD = 127  # sample value must exceed this to count as lesion

MANIFEST_COLUMNS = (
    "image_id",
    "ma_mask",
    "he_mask",
    "se_mask",
    "ex_mask",
    "dr_grade",
    "dme_grade",
)

DR_GRADE_RANGE = range(0, 5)
DME_GRADE_RANGE = range(0, 3)


class LesionClass(enum.Enum):
    """The four lesion classes, in their fixed pipeline order."""

    MA = 1  # microaneurysms
    HE = 2  # hemorrhages
    SE = 3  # soft exudates
    EX = 4  # hard exudates

    @property
    def index(self) -> int:
        return self.value

    @property
    def manifest_column(self) -> str:
        return self.name.lower() + "_mask"


class MaskFormatError(ValueError):
    """Raised for unreadable or malformed PGM mask files."""


class ManifestError(ValueError):
    """Raised for structurally invalid manifest CSV files."""


@dataclass(frozen=True)
class LesionMask:
    """A binary raster for one lesion class of one image.

    ``pixels`` is a C-contiguous 2-D bool array of shape (height, width);
    True marks lesion foreground.
    """

    pixels: np.ndarray
    lesion_class: LesionClass

    def __post_init__(self) -> None:
        px = np.ascontiguousarray(self.pixels, dtype=bool)
        if px.ndim != 2:
            raise ValueError(f"mask pixels must be 2-D, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def foreground_count(self) -> int:
        return int(self.pixels.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LesionMask):
            return NotImplemented
        return (
            self.lesion_class is other.lesion_class
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )


@dataclass(frozen=True)
class ManifestRecord:
    """One manifest row: an image id, its four mask paths, optional labels."""

    image_id: str
    mask_paths: dict[LesionClass, Path] = field(compare=False)
    dr_grade: Optional[int] = None
    dme_grade: Optional[int] = None

    @property
    def labeled(self) -> bool:
        return self.dr_grade is not None


# ---------------------------------------------------------------------------
# PGM reading


class _PgmScanner:
    """Tracks a byte offset while pulling header/sample tokens from raw PGM."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.pos = 0

    def error(self, message: str, offset: int | None = None) -> MaskFormatError:
        at = self.pos if offset is None else offset
        return MaskFormatError(f"{self.path}: {message} (byte offset {at})")

    def skip_space_and_comments(self) -> None:
        data = self.data
        n = len(data)
        while self.pos < n:
            c = data[self.pos]
            if c in b" \t\r\n\x0b\x0c":
                self.pos += 1
            elif c == ord("#"):
                nl = data.find(b"\n", self.pos)
                self.pos = n if nl == -1 else nl + 1
            else:
                return

    def next_token(self, what: str) -> tuple[bytes, int]:
        self.skip_space_and_comments()
        if self.pos >= len(self.data):
            raise self.error(f"unexpected end of file while reading {what}")
        start = self.pos
        data = self.data
        n = len(data)
        while self.pos < n and data[self.pos] not in b" \t\r\n\x0b\x0c#":
            self.pos += 1
        return data[start : self.pos], start

    def next_uint(self, what: str) -> int:
        token, start = self.next_token(what)
        if not token.isdigit():
            raise self.error(f"expected unsigned integer for {what}, got {token!r}", start)
        return int(token)


def _read_pgm(path: Path) -> np.ndarray:
    """Read a PGM file (P2 or P5, maxval <= 255) into a uint8 (H, W) array."""
    data = path.read_bytes()
    scanner = _PgmScanner(data, path)

    magic, magic_off = scanner.next_token("magic number")
    if magic not in (b"P2", b"P5"):
        raise scanner.error(f"not a P2/P5 PGM file, magic {magic!r}", magic_off)

    width = scanner.next_uint("width")
    height = scanner.next_uint("height")
    if width == 0 or height == 0:
        raise scanner.error(f"zero dimension: width={width} height={height}")
    maxval = scanner.next_uint("maxval")
    if maxval == 0:
        raise scanner.error("maxval must be at least 1")
    if maxval > 255:
        raise scanner.error(f"maxval {maxval} exceeds 255 (wide samples unsupported)")

    count = width * height
    if magic == b"P5":
        # Exactly one whitespace byte separates the header from the payload.
        if scanner.pos >= len(data) or data[scanner.pos] not in b" \t\r\n\x0b\x0c":
            raise scanner.error("missing whitespace after maxval")
        scanner.pos += 1
        payload = data[scanner.pos :]
        if len(payload) < count:
            raise scanner.error(
                f"truncated payload: expected {count} bytes, found {len(payload)}",
                len(data),
            )
        if len(payload) > count:
            raise scanner.error(
                f"unexpected trailing data: expected {count} payload bytes, found {len(payload)}",
                scanner.pos + count,
            )
        flat = np.frombuffer(payload, dtype=np.uint8)
    else:
        samples = np.empty(count, dtype=np.uint8)
        for k in range(count):
            offset = scanner.pos
            value = scanner.next_uint("sample value")
            if value > maxval:
                raise scanner.error(f"sample value {value} exceeds maxval {maxval}", offset)
            samples[k] = value
        scanner.skip_space_and_comments()
        if scanner.pos < len(data):
            raise scanner.error("unexpected trailing data after samples")
        flat = samples

    over = flat > maxval
    if over.any():
        bad = int(np.flatnonzero(over)[0])
        raise scanner.error(
            f"sample value {int(flat[bad])} exceeds maxval {maxval}",
            len(data) - count + bad,
        )
    return flat.reshape(height, width)


def load_mask(path: str | Path, lesion_class: LesionClass) -> LesionMask:
    """Load one PGM mask; sample values above 127 become foreground."""
    path = Path(path)
    if not path.is_file():
        raise MaskFormatError(f"{path}: mask file does not exist")
    samples = _read_pgm(path)
    return LesionMask(pixels=samples > BINARIZE_THRESHOLD, lesion_class=lesion_class)


def save_mask(mask: LesionMask, path: str | Path, ascii_format: bool = False) -> None:
    """Write a mask as PGM with maxval 255: foreground 255, background 0.

    Binary P5 by default; ``ascii_format`` selects P2.  Either way the file
    round-trips bit-exactly through :func:`load_mask`.
    """
    path = Path(path)
    values = np.where(mask.pixels, np.uint8(255), np.uint8(0))
    header = f"{'P2' if ascii_format else 'P5'}\n{mask.width} {mask.height}\n255\n"
    if ascii_format:
        body = "\n".join(" ".join(str(v) for v in row) for row in values.tolist())
        path.write_bytes(header.encode("ascii") + body.encode("ascii") + b"\n")
    else:
        path.write_bytes(header.encode("ascii") + values.tobytes())


# ---------------------------------------------------------------------------
# Manifest


def _parse_grade(cell: str, valid: range, column: str, line: int, path: Path) -> Optional[int]:
    text = cell.strip()
    if not text:
        return None
    try:
        grade = int(text)
    except ValueError:
        raise ManifestError(f"{path}: line {line}: {column} {text!r} is not an integer") from None
    if grade not in valid:
        raise ManifestError(
            f"{path}: line {line}: {column} {grade} outside {valid.start}..{valid.stop - 1}"
        )
    return grade


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    """Parse a manifest CSV into records, preserving row order.

    Mask paths are resolved relative to the manifest's directory.  Grade
    cells may be empty, but only together; a row with exactly one grade is
    rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"{path}: manifest file does not exist")
    base = path.parent
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"{path}: missing column(s) {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            image_id = (row["image_id"] or "").strip()
            if not image_id:
                raise ManifestError(f"{path}: line {line}: empty image_id")
            if image_id in seen:
                raise ManifestError(f"{path}: line {line}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            mask_paths: dict[LesionClass, Path] = {}
            for cls in LesionClass:
                cell = (row[cls.manifest_column] or "").strip()
                if not cell:
                    raise ManifestError(
                        f"{path}: line {line}: empty {cls.manifest_column} for {image_id!r}"
                    )
                p = Path(cell)
                mask_paths[cls] = p if p.is_absolute() else base / p
            dr = _parse_grade(row["dr_grade"] or "", DR_GRADE_RANGE, "dr_grade", line, path)
            dme = _parse_grade(row["dme_grade"] or "", DME_GRADE_RANGE, "dme_grade", line, path)
            if (dr is None) != (dme is None):
                raise ManifestError(
                    f"{path}: line {line}: dr_grade and dme_grade must be "
                    f"present together or absent together"
                )
            records.append(ManifestRecord(image_id, mask_paths, dr, dme))
    return records


def write_manifest(path: str | Path, rows: list[dict[str, str]]) -> None:
    """Write manifest rows (already stringified, keyed by column) with LF endings."""
    path = Path(path)
    with path.open("w", newline="\n", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
