"""Feature bundles, labels, MFCCs, resampling, segment slicing, synthetic data."""

from .bundle import FeatureBundle, bundle_bytes, parse_bundle, read_bundle, write_bundle
from .dataset import (
    annotation_labels,
    load_dataset,
    read_manifest,
    write_manifest,
    write_synthetic,
)
from .mfcc import extract_mfcc, fit_to_frames, read_wav
from .resample import resample_to_30fps
from .segments import (
    SegmentDataset,
    SegmentRecord,
    read_labels_csv,
    slice_segments,
    write_labels_csv,
)
from .synth import (
    SynthConfig,
    generate_synthetic,
    iter_synthetic,
    oracle_probe,
    signal_direction,
    synth_video,
)

__all__ = [
    "FeatureBundle",
    "SegmentDataset",
    "SegmentRecord",
    "SynthConfig",
    "annotation_labels",
    "bundle_bytes",
    "extract_mfcc",
    "fit_to_frames",
    "generate_synthetic",
    "iter_synthetic",
    "load_dataset",
    "oracle_probe",
    "parse_bundle",
    "read_bundle",
    "read_labels_csv",
    "read_manifest",
    "read_wav",
    "resample_to_30fps",
    "signal_direction",
    "slice_segments",
    "synth_video",
    "write_bundle",
    "write_labels_csv",
    "write_manifest",
    "write_synthetic",
]
