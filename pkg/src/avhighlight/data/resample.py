"""29.97 -> 30 fps frame alignment."""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import ContractError
from ..model import EMBEDDING_MODALITIES, MODALITIES
from .bundle import FeatureBundle

SOURCE_FPS = 29.97
TARGET_FPS = 30.0
RESAMPLE_MODES = ("nearest", "linear")


def output_length(n_in: int) -> int:
    return int(round(n_in * TARGET_FPS / SOURCE_FPS))


def nearest_index_map(n_in: int, n_out: int) -> np.ndarray:
    """Output position j reads input round(j * 29.97 / 30), clamped to the last input."""
    j = np.arange(n_out, dtype=np.float64)
    return np.minimum(np.rint(j * SOURCE_FPS / TARGET_FPS).astype(np.int64), n_in - 1)


def _linear(a: np.ndarray, n_out: int) -> np.ndarray:
    pos = np.minimum(np.arange(n_out) * SOURCE_FPS / TARGET_FPS, a.shape[0] - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, a.shape[0] - 1)
    w = (pos - lo)[:, None].astype(np.float64)
    return (a[lo] * (1.0 - w) + a[hi] * w).astype(a.dtype)


def resample_to_30fps(bundle: FeatureBundle, mode: str = "nearest") -> FeatureBundle:
    """Duplicate frames so a 29.97 fps bundle lines up with 30 fps labels.

    ``mode="linear"`` interpolates the embedding modalities only; CAMs, face
    areas and MFCCs always use nearest-frame duplication.
    """
    if mode not in RESAMPLE_MODES:
        raise ContractError(f"unknown resample mode {mode!r}")
    if float(bundle.fps) == TARGET_FPS:
        warnings.warn(f"bundle {bundle.video_id!r} is already at 30 fps; unchanged", RuntimeWarning, stacklevel=2)
        return bundle
    n_in = bundle.n_frames
    n_out = output_length(n_in)
    out = {}
    for m, a in bundle.features.items():
        spf = MODALITIES[m].samples_per_frame
        if mode == "linear" and m in EMBEDDING_MODALITIES:
            out[m] = _linear(a, n_out)
        else:
            out[m] = a[nearest_index_map(n_in * spf, n_out * spf)]
    return FeatureBundle(bundle.video_id, TARGET_FPS, out)
