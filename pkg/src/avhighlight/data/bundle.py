"""HLFB feature bundles: per-video, per-modality frame features.

Layout, little-endian throughout::

    b"HLFB"  u32 version  f64 fps  u32 id_len  id(utf-8)  u32 n_records
    n_records x [u32 name_len  name  u32 rows  u32 cols  f32[rows*cols]]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, ParseError
from ..model import MODALITIES, MODALITY_ORDER

HLFB_MAGIC = b"HLFB"
HLFB_VERSION = 1
FPS_TAGS = (29.97, 30.0)


@dataclass
class FeatureBundle:
    video_id: str
    fps: float
    features: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.features = {m: np.ascontiguousarray(a, dtype=np.float32)
                         for m, a in sorted(self.features.items(), key=lambda kv: _modality_rank(kv[0]))}
        self.validate()

    def validate(self) -> None:
        if float(self.fps) not in FPS_TAGS:
            raise ContractError(f"bundle {self.video_id!r}: frame rate tag must be 29.97 or 30, got {self.fps}")
        counts = set()
        for m, a in self.features.items():
            if m not in MODALITIES:
                raise ContractError(f"bundle {self.video_id!r}: unknown modality {m!r}")
            if a.ndim != 2:
                raise ContractError(f"bundle {self.video_id!r}: {m} must be 2-D, got {a.shape}")
            spf = MODALITIES[m].samples_per_frame
            if a.shape[0] % spf:
                raise ContractError(f"bundle {self.video_id!r}: {m} rows not a multiple of {spf}")
            counts.add(a.shape[0] // spf)
        if len(counts) > 1:
            raise ContractError(f"bundle {self.video_id!r}: modalities disagree on frame count {sorted(counts)}")
        if "faces" in self.features and np.any(self.features["faces"] < 0):
            raise ContractError(f"bundle {self.video_id!r}: face areas must be non-negative")

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(self.features)

    @property
    def n_frames(self) -> int:
        for m, a in self.features.items():
            return a.shape[0] // MODALITIES[m].samples_per_frame
        return 0

    def equals(self, other: FeatureBundle) -> bool:
        return (self.video_id == other.video_id and float(self.fps) == float(other.fps)
                and self.modalities == other.modalities
                and all(np.array_equal(self.features[m], other.features[m]) for m in self.features))


def _modality_rank(name: str):
    return (MODALITY_ORDER.index(name), name) if name in MODALITY_ORDER else (len(MODALITY_ORDER), name)


def bundle_bytes(bundle: FeatureBundle) -> bytes:
    vid = bundle.video_id.encode("utf-8")
    out = [HLFB_MAGIC, struct.pack("<IdI", HLFB_VERSION, float(bundle.fps), len(vid)), vid,
           struct.pack("<I", len(bundle.features))]
    for m, a in bundle.features.items():
        raw = m.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw + struct.pack("<II", *a.shape))
        out.append(a.astype("<f4", copy=False).tobytes())
    return b"".join(out)


def parse_bundle(data: bytes) -> FeatureBundle:
    if len(data) < 4 or data[:4] != HLFB_MAGIC:
        raise ParseError("bad magic, expected b'HLFB'", 0)
    pos = 4
    try:
        version, fps, id_len = struct.unpack_from("<IdI", data, pos)
    except struct.error:
        raise ParseError("truncated header", pos, "header") from None
    if version != HLFB_VERSION:
        raise ParseError(f"unsupported HLFB version {version}", pos, "header")
    pos += 16
    try:
        if pos + id_len > len(data):
            raise struct.error
        video_id = data[pos:pos + id_len].decode("utf-8")
        pos += id_len
        (n_records,) = struct.unpack_from("<I", data, pos)
        pos += 4
    except (struct.error, UnicodeDecodeError):
        raise ParseError("truncated header", pos, "header") from None
    features = {}
    for i in range(n_records):
        start, name = pos, f"#{i}"
        try:
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + nlen > len(data):
                raise struct.error
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            count = rows * cols
            if pos + 4 * count > len(data):
                raise struct.error
            features[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(rows, cols).copy()
            pos += 4 * count
        except (struct.error, UnicodeDecodeError):
            raise ParseError("truncated or corrupt modality record", start, name) from None
    if pos != len(data):
        raise ParseError("trailing bytes after last record", pos)
    try:
        return FeatureBundle(video_id, fps, features)
    except ContractError as exc:
        raise ParseError(str(exc), 0) from None


def write_bundle(path, bundle: FeatureBundle) -> None:
    bundle.validate()
    Path(path).write_bytes(bundle_bytes(bundle))


def read_bundle(path) -> FeatureBundle:
    return parse_bundle(Path(path).read_bytes())
