"""Annotation aggregation and inter-rater statistics."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DegenerateError, ParseError

RATING_SCALE = (1, 5)


@dataclass(frozen=True)
class AnnotationMatrix:
    """Ratings of one video, raters along axis 0 and segments along axis 1."""

    video_id: str
    ratings: np.ndarray
    rater_ids: tuple[str, ...] = ()

    def __post_init__(self):
        r = np.asarray(self.ratings)
        if r.ndim != 2 or r.shape[0] < 2 or r.shape[1] < 2:
            raise ContractError(f"video {self.video_id!r}: need at least 2 raters x 2 segments, got {r.shape}")
        if not np.all(np.isin(r, np.arange(RATING_SCALE[0], RATING_SCALE[1] + 1))):
            raise ContractError(f"video {self.video_id!r}: ratings must be integers 1..5")
        object.__setattr__(self, "ratings", r.astype(np.int64))
        if not self.rater_ids:
            object.__setattr__(self, "rater_ids", tuple(str(i) for i in range(r.shape[0])))

    @property
    def n_raters(self) -> int:
        return self.ratings.shape[0]

    @property
    def n_segments(self) -> int:
        return self.ratings.shape[1]


def rescale_annotations(matrix) -> np.ndarray:
    """Map the 1..5 scale onto [0, 2]."""
    m = np.asarray(matrix.ratings if isinstance(matrix, AnnotationMatrix) else matrix, dtype=np.float64)
    if m.size and (m.min() < RATING_SCALE[0] or m.max() > RATING_SCALE[1]):
        raise ContractError("ratings outside [1, 5]")
    return (m - 1.0) / 2.0


def aggregate_annotations(matrix) -> np.ndarray:
    """Per-segment mean over raters."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ContractError("expected a raters x segments matrix")
    return m.mean(axis=0)


def cronbach_alpha(matrix) -> float:
    """Internal consistency of raters (rows) over segments (columns)."""
    m = np.asarray(matrix.ratings if isinstance(matrix, AnnotationMatrix) else matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ContractError("cronbach_alpha needs at least 2 raters and 2 segments")
    k = m.shape[0]
    total_var = np.var(m.sum(axis=0), ddof=1)
    if total_var == 0.0:
        raise DegenerateError("variance of per-segment sums is zero")
    return float(k / (k - 1) * (1.0 - np.var(m, axis=1, ddof=1).sum() / total_var))


def kendall_tau_b(a: Sequence[float], b: Sequence[float]) -> float:
    """Tie-corrected Kendall rank correlation by pair enumeration."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size < 2:
        raise ContractError("kendall_tau_b needs two equal-length vectors of length >= 2")
    i, j = np.triu_indices(a.size, 1)
    sa = np.sign(a[i] - a[j])
    sb = np.sign(b[i] - b[j])
    n0 = i.size
    untied_a = np.count_nonzero(sa)
    untied_b = np.count_nonzero(sb)
    if untied_a == 0 or untied_b == 0:
        raise DegenerateError("kendall_tau_b undefined: one input is constant")
    s = float(np.sum(sa * sb))
    return s / np.sqrt(float(untied_a) * float(untied_b)) if n0 else 0.0


# -- IO ------------------------------------------------------------------------

ANNOTATION_COLUMNS = ("video_id", "segment_index", "annotator_id", "rating")


def read_annotations_csv(path) -> dict[str, AnnotationMatrix]:
    """Parse a long-format annotation CSV; every rater must rate every segment."""
    text = Path(path).read_text()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != ANNOTATION_COLUMNS:
        raise ParseError(f"expected header {','.join(ANNOTATION_COLUMNS)}", offset=0)
    cells: dict[str, dict[tuple[str, int], int]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            seg = int(row["segment_index"])
            rating = int(row["rating"])
        except (TypeError, ValueError):
            raise ParseError(f"line {lineno}: malformed row", offset=lineno) from None
        key = (row["annotator_id"], seg)
        per_video = cells.setdefault(row["video_id"], {})
        if key in per_video:
            raise ParseError(f"line {lineno}: duplicate rating", offset=lineno)
        per_video[key] = rating
    out = {}
    for vid, entries in cells.items():
        raters = sorted({r for r, _ in entries}, key=_natural_key)
        segs = sorted({s for _, s in entries})
        if segs != list(range(len(segs))):
            raise ContractError(f"video {vid!r}: segment indices must be 0..n-1 without gaps")
        m = np.zeros((len(raters), len(segs)), dtype=np.int64)
        for ri, r in enumerate(raters):
            for s in segs:
                if (r, s) not in entries:
                    raise ContractError(f"video {vid!r}: annotator {r!r} missing segment {s}")
                m[ri, s] = entries[(r, s)]
        out[vid] = AnnotationMatrix(vid, m, tuple(raters))
    return out


def write_annotations_csv(path, matrices: Sequence[AnnotationMatrix]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANNOTATION_COLUMNS)
    for m in matrices:
        for s in range(m.n_segments):
            for ri, r in enumerate(m.rater_ids):
                w.writerow([m.video_id, s, r, int(m.ratings[ri, s])])
    Path(path).write_text(buf.getvalue())


def _natural_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def histogram(values: Sequence[float], bins: int = 10) -> list[tuple[float, float, int]]:
    """Equal-width bins over the observed range."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ContractError("histogram needs at least one value")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def histogram_csv(values: Sequence[float], bins: int = 10) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_left", "bin_right", "count"])
    for left, right, count in histogram(values, bins):
        w.writerow([repr(left), repr(right), count])
    return buf.getvalue()
