"""Synthetic stand-in for the summarization and highlight datasets.

Each segment gets a latent ``z ~ N(0, 1)``. On the signal modality every
frame is ``snr * z * u + noise`` with a fixed direction ``u`` in {-1, +1}^d,
so the oracle probe ``u . mean(x) / (snr * d)`` recovers ``z`` up to noise
shrinking with frame count. The label is ``2 * sigmoid(z)`` plus optional
label noise, clipped to [0, 2]. Every other modality is label-independent.
"""

from __future__ import annotations

import json
from collections.abc import Iterator, Mapping
from dataclasses import asdict, dataclass, field

import numpy as np

from ..agreement import AnnotationMatrix
from ..errors import ContractError
from ..model import MODALITIES, MODALITY_ORDER, canonical_order
from ..seeding import rng_for
from .bundle import FeatureBundle
from .segments import FRAMES_PER_SEGMENT, SegmentRecord

MIN_SEGMENTS = 20


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 40
    segments_per_video: int = 20
    seed: int = 0
    signal_modality: str | None = "googlenet"
    snr: float = 1.0
    label_noise: float = 0.0
    signal_seed: int | None = None
    n_raters: int = 0
    rater_noise: float = 0.5
    modalities: tuple[str, ...] = MODALITY_ORDER
    dims: Mapping[str, int] = field(default_factory=dict)
    fps: float = 30.0
    video_prefix: str = "vid"

    def __post_init__(self):
        object.__setattr__(self, "modalities", canonical_order(self.modalities))
        object.__setattr__(self, "dims", dict(self.dims))
        if self.n_videos < 1:
            raise ContractError("n_videos must be at least 1")
        if self.segments_per_video < MIN_SEGMENTS:
            raise ContractError(f"segments_per_video must be at least {MIN_SEGMENTS}")
        if self.signal_modality is not None and self.signal_modality not in self.modalities:
            raise ContractError(f"signal modality {self.signal_modality!r} is not generated")
        if self.snr < 0 or self.label_noise < 0 or self.rater_noise < 0:
            raise ContractError("snr and noise levels must be non-negative")
        if self.n_raters == 1 or self.n_raters < 0:
            raise ContractError("n_raters must be 0 or at least 2")
        if self.fps not in (29.97, 30.0):
            raise ContractError("fps must be 29.97 or 30")
        for m, d in self.dims.items():
            if m not in MODALITIES or m == "cams" and d != 196 or d < 1:
                raise ContractError(f"bad dimension override {m}={d}")

    def dim(self, m: str) -> int:
        return int(self.dims.get(m, MODALITIES[m].dim))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = list(self.modalities)
        d["dims"] = dict(sorted(self.dims.items()))
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> SynthConfig:
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ContractError(f"unknown synth config keys {sorted(unknown)}")
        d = dict(d)
        if "modalities" in d:
            d["modalities"] = tuple(d["modalities"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class SyntheticVideo:
    bundle: FeatureBundle
    records: list[SegmentRecord]
    latent: np.ndarray
    annotations: AnnotationMatrix | None = None


def signal_direction(config: SynthConfig) -> np.ndarray:
    """The planted +-1 direction; shared by configs with the same signal seed."""
    m = config.signal_modality
    seed = config.seed if config.signal_seed is None else config.signal_seed
    rng = rng_for(seed, "synth-direction", m)
    return np.where(rng.random(config.dim(m)) < 0.5, -1.0, 1.0)


def oracle_probe(config: SynthConfig, segment_features: np.ndarray) -> np.ndarray:
    """Latent estimate for (n, frames, d) signal-modality segments."""
    u = signal_direction(config)
    return segment_features.astype(np.float64).mean(axis=1) @ u / (max(config.snr, 1e-300) * u.size)


def _n_frames(config: SynthConfig) -> int:
    frames = config.segments_per_video * FRAMES_PER_SEGMENT
    return frames if config.fps == 30.0 else int(round(frames * 29.97 / 30.0))


def _frame_segment(config: SynthConfig, n_frames: int) -> np.ndarray:
    """Segment index of each stored frame (nearest mapping at 29.97 fps)."""
    t = np.arange(n_frames) * (30.0 / config.fps)
    return np.minimum(np.floor(t / FRAMES_PER_SEGMENT + 1e-9).astype(np.int64), config.segments_per_video - 1)


def synth_video(config: SynthConfig, index: int) -> SyntheticVideo:
    vid = f"{config.video_prefix}{index:04d}"
    rng = rng_for(config.seed, "synth-video", index)
    n_seg = config.segments_per_video
    z = rng.standard_normal(n_seg)
    labels = 2.0 / (1.0 + np.exp(-z))
    if config.label_noise > 0:
        labels = labels + config.label_noise * rng.standard_normal(n_seg)
    labels = np.clip(labels, 0.0, 2.0)
    n_frames = _n_frames(config)
    seg_of_frame = _frame_segment(config, n_frames)
    features = {}
    for m in config.modalities:
        spf = MODALITIES[m].samples_per_frame
        mrng = rng_for(config.seed, "synth-noise", index, m)
        rows = n_frames * spf
        x = mrng.standard_normal((rows, config.dim(m)), dtype=np.float32)
        if m == config.signal_modality and config.snr > 0:
            u = signal_direction(config).astype(np.float32)
            zf = z[np.repeat(seg_of_frame, spf)].astype(np.float32)
            x += np.float32(config.snr) * zf[:, None] * u[None, :]
        if m == "faces":
            x = np.maximum(x, 0.0)
        features[m] = x
    records = [SegmentRecord(vid, s, float(labels[s])) for s in range(n_seg)]
    ann = None
    if config.n_raters:
        arng = rng_for(config.seed, "synth-raters", index)
        raw = 1.0 + 2.0 * labels[None, :] + config.rater_noise * arng.standard_normal((config.n_raters, n_seg))
        ann = AnnotationMatrix(vid, np.clip(np.rint(raw), 1, 5).astype(np.int64))
    return SyntheticVideo(FeatureBundle(vid, config.fps, features), records, z, ann)


def iter_synthetic(config: SynthConfig) -> Iterator[SyntheticVideo]:
    for i in range(config.n_videos):
        yield synth_video(config, i)


def generate_synthetic(config: SynthConfig) -> list[SyntheticVideo]:
    return list(iter_synthetic(config))
