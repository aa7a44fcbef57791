"""Dataset directories: bundles, labels, optional annotations, and a JSON manifest.

::

    <root>/manifest.json
    <root>/labels.csv
    <root>/annotations.csv      (optional)
    <root>/bundles/<video_id>.hlfb
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from ..agreement import (
    AnnotationMatrix,
    aggregate_annotations,
    read_annotations_csv,
    rescale_annotations,
    write_annotations_csv,
)
from ..errors import ContractError, ParseError
from .bundle import read_bundle, write_bundle
from .resample import resample_to_30fps
from .segments import SegmentDataset, SegmentRecord, read_labels_csv, write_labels_csv
from .synth import SynthConfig, iter_synthetic

MANIFEST = "manifest.json"
DATASET_FORMAT = "avhighlight-dataset"
DATASET_VERSION = 1
LABEL_SOURCES = ("labels", "annotations")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_manifest(root, video_ids: Sequence[str], has_annotations: bool, extra: Mapping | None = None,
                   splits: Mapping | None = None) -> dict:
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "videos": [{"video_id": v, "bundle": f"bundles/{v}.hlfb"} for v in video_ids],
        "labels": "labels.csv",
        "annotations": "annotations.csv" if has_annotations else None,
        "splits": dict(splits or {}),
    }
    manifest.update(extra or {})
    Path(root, MANIFEST).write_text(_dump(manifest))
    return manifest


def read_manifest(root) -> dict:
    path = Path(root, MANIFEST)
    if not path.is_file():
        raise ContractError(f"{root}: no {MANIFEST}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.pos) from None
    if manifest.get("format") != DATASET_FORMAT:
        raise ContractError(f"{path}: not a dataset manifest")
    return manifest


def write_synthetic(root, config: SynthConfig) -> dict:
    """Generate and write one video at a time; returns the manifest."""
    root = Path(root)
    (root / "bundles").mkdir(parents=True, exist_ok=True)
    ids, records, annotations = [], [], []
    for video in iter_synthetic(config):
        write_bundle(root / "bundles" / f"{video.bundle.video_id}.hlfb", video.bundle)
        ids.append(video.bundle.video_id)
        records.extend(video.records)
        if video.annotations is not None:
            annotations.append(video.annotations)
    write_labels_csv(root / "labels.csv", records)
    if annotations:
        write_annotations_csv(root / "annotations.csv", annotations)
    return write_manifest(root, ids, bool(annotations), {"synth_config": config.to_dict()})


def annotation_labels(matrices: Mapping[str, AnnotationMatrix]) -> dict[str, list[SegmentRecord]]:
    """Rescaled rater means as segment labels."""
    out = {}
    for vid, m in matrices.items():
        y = aggregate_annotations(rescale_annotations(m))
        out[vid] = [SegmentRecord(vid, s, float(v)) for s, v in enumerate(y)]
    return out


def load_dataset(root, modalities: Sequence[str] | None = None, label_source: str = "labels",
                 resample_mode: str = "nearest") -> SegmentDataset:
    """Read every bundle listed in the manifest and slice labelled segments."""
    if label_source not in LABEL_SOURCES:
        raise ContractError(f"unknown label source {label_source!r}")
    root = Path(root)
    manifest = read_manifest(root)
    if label_source == "labels":
        labels = read_labels_csv(root / manifest["labels"])
    else:
        if not manifest.get("annotations"):
            raise ContractError(f"{root}: dataset has no annotations")
        labels = annotation_labels(read_annotations_csv(root / manifest["annotations"]))
    bundles = []
    for entry in manifest["videos"]:
        b = read_bundle(root / entry["bundle"])
        if b.video_id != entry["video_id"]:
            raise ContractError(f"{entry['bundle']}: holds video {b.video_id!r}, manifest says {entry['video_id']!r}")
        if float(b.fps) != 30.0:
            b = resample_to_30fps(b, resample_mode)
        if modalities is not None:
            b.features = {m: b.features[m] for m in modalities if m in b.features}
        bundles.append(b)
    return SegmentDataset.from_bundles(bundles, labels, modalities)


def dataset_fingerprint(ds: SegmentDataset) -> str:
    """Content hash of labels and features, for run manifests."""
    h = hashlib.sha256()
    h.update(np.asarray(ds.labels, dtype="<f8").tobytes())
    for m, a in ds.features.items():
        h.update(m.encode())
        h.update(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return h.hexdigest()
