"""Labelled 5 s segments, label CSVs, and the in-memory segment dataset."""

from __future__ import annotations

import csv
import io
import warnings
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError, ParseError
from ..model import MODALITIES, canonical_order
from .bundle import FeatureBundle

FRAMES_PER_SEGMENT = 150
LABEL_COLUMNS = ("video_id", "segment_index", "score")


@dataclass(frozen=True)
class SegmentRecord:
    video_id: str
    segment_index: int
    label: float

    def __post_init__(self):
        if not 0.0 <= self.label <= 2.0:
            raise ContractError(f"video {self.video_id!r} segment {self.segment_index}: label {self.label} outside [0, 2]")
        if self.segment_index < 0:
            raise ContractError(f"video {self.video_id!r}: negative segment index")

    @property
    def frame_range(self) -> tuple[int, int]:
        return FRAMES_PER_SEGMENT * self.segment_index, FRAMES_PER_SEGMENT * (self.segment_index + 1)


# -- label CSV -----------------------------------------------------------------

def write_labels_csv(path, records: Iterable[SegmentRecord]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LABEL_COLUMNS)
    for r in records:
        w.writerow([r.video_id, r.segment_index, repr(float(r.label))])
    Path(path).write_text(buf.getvalue())


def read_labels_csv(path) -> dict[str, list[SegmentRecord]]:
    """Records grouped by video, each group sorted by segment index."""
    reader = csv.DictReader(io.StringIO(Path(path).read_text()))
    if reader.fieldnames is None or tuple(reader.fieldnames) != LABEL_COLUMNS:
        raise ParseError(f"expected header {','.join(LABEL_COLUMNS)}", offset=0)
    out: dict[str, list[SegmentRecord]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            rec = SegmentRecord(row["video_id"], int(row["segment_index"]), float(row["score"]))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ContractError):
                raise
            raise ParseError(f"line {lineno}: malformed row", offset=lineno) from None
        out.setdefault(rec.video_id, []).append(rec)
    for vid, recs in out.items():
        recs.sort(key=lambda r: r.segment_index)
        idx = [r.segment_index for r in recs]
        if len(set(idx)) != len(idx):
            raise ContractError(f"video {vid!r}: duplicate segment labels")
    return out


# -- slicing -------------------------------------------------------------------

def slice_segments(bundle: FeatureBundle, records: Sequence[SegmentRecord]
                   ) -> tuple[list[SegmentRecord], dict[str, np.ndarray]]:
    """Cut one 150-frame window per labelled segment.

    Returns the records (in the given order) and per-modality arrays of shape
    (n_segments, 150 * samples_per_frame, dim).
    """
    if float(bundle.fps) != 30.0:
        raise ContractError(f"bundle {bundle.video_id!r} must be resampled to 30 fps first")
    n_full, rest = divmod(bundle.n_frames, FRAMES_PER_SEGMENT)
    if rest:
        warnings.warn(f"bundle {bundle.video_id!r}: dropping {rest} trailing frames", RuntimeWarning, stacklevel=2)
    for r in records:
        if r.video_id != bundle.video_id:
            raise ContractError(f"label for video {r.video_id!r} applied to bundle {bundle.video_id!r}")
        if r.segment_index >= n_full:
            raise ContractError(f"video {bundle.video_id!r}: segment {r.segment_index} beyond "
                                f"{n_full} complete segments")
    out = {}
    for m, a in bundle.features.items():
        spf = MODALITIES[m].samples_per_frame
        per = FRAMES_PER_SEGMENT * spf
        windows = a[: n_full * per].reshape(n_full, per, a.shape[1])
        out[m] = windows[[r.segment_index for r in records]]
    return list(records), out


# -- dataset -------------------------------------------------------------------

class SegmentDataset:
    """All labelled segments of a set of videos, features kept as float32.

    Batches are promoted to float64 on access.
    """

    def __init__(self, records: Sequence[SegmentRecord], features: Mapping[str, np.ndarray]):
        self.records = list(records)
        self.features = {m: features[m] for m in canonical_order(features)}
        n = len(self.records)
        for m, a in self.features.items():
            if a.shape[0] != n:
                raise ContractError(f"{m}: {a.shape[0]} feature rows for {n} segments")
        self.labels = np.array([r.label for r in self.records], dtype=np.float64)
        self.video_ids = np.array([r.video_id for r in self.records])
        self.segment_index = np.array([r.segment_index for r in self.records], dtype=np.int64)

    @classmethod
    def from_bundles(cls, bundles: Sequence[FeatureBundle], labels: Mapping[str, Sequence[SegmentRecord]],
                     modalities: Sequence[str] | None = None) -> SegmentDataset:
        records, parts = [], {}
        for b in bundles:
            if b.video_id not in labels:
                raise ContractError(f"no labels for video {b.video_id!r}")
            recs, feats = slice_segments(b, labels[b.video_id])
            records.extend(recs)
            for m in modalities or feats:
                if m not in feats:
                    raise ContractError(f"bundle {b.video_id!r} lacks modality {m!r}")
                parts.setdefault(m, []).append(feats[m])
        return cls(records, {m: np.concatenate(v) for m, v in parts.items()})

    def __len__(self) -> int:
        return len(self.records)

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(self.features)

    def dims(self) -> dict[str, int]:
        return {m: int(a.shape[2]) for m, a in self.features.items()}

    def videos(self) -> list[str]:
        """Video ids in first-appearance order."""
        return list(dict.fromkeys(self.video_ids.tolist()))

    def indices_for(self, video_ids: Iterable[str]) -> np.ndarray:
        return np.flatnonzero(np.isin(self.video_ids, list(video_ids)))

    def subset(self, video_ids: Iterable[str]) -> SegmentDataset:
        idx = self.indices_for(video_ids)
        return SegmentDataset([self.records[i] for i in idx], {m: a[idx] for m, a in self.features.items()})

    def with_labels(self, labels: Sequence[float]) -> SegmentDataset:
        recs = [SegmentRecord(r.video_id, r.segment_index, float(y)) for r, y in zip(self.records, labels)]
        return SegmentDataset(recs, self.features)

    def batch(self, idx, modalities: Sequence[str] | None = None) -> dict[str, np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        return {m: self.features[m][idx].astype(np.float64) for m in (modalities or self.features)}
