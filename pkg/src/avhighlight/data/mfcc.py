"""MFCC extraction aligned to video frames (4 coefficient frames per video frame)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.fft import dct, rfft
from scipy.io import wavfile
from scipy.signal.windows import hann

from ..errors import ContractError

SAMPLE_RATE = 16_000
WINDOW = 400                                      # 25 ms
STEP = int(round(SAMPLE_RATE * 0.25 / 29.97))     # 133 samples
N_FFT = 512
N_MELS = 26
N_COEFFS = 13
LOG_FLOOR = 1e-10
SAMPLES_PER_FRAME = 4


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=4)
def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters evaluated at the FFT bin frequencies, (n_mels, n_fft//2+1)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - lo) / (mid - lo)
    fall = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rise, fall))
    fb.setflags(write=False)
    return fb


def n_frames_for(n_samples: int) -> int:
    return 0 if n_samples < WINDOW else 1 + (n_samples - WINDOW) // STEP


def extract_mfcc(samples, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """(n_frames, 13) MFCCs. Frames start every 133 samples; no padding, so a
    partial window at the end is dropped."""
    if sample_rate != SAMPLE_RATE:
        raise ContractError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate}")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("expected mono audio")
    if x.size < WINDOW:
        raise ContractError(f"need at least {WINDOW} samples, got {x.size}")
    frames = np.lib.stride_tricks.sliding_window_view(x, WINDOW)[::STEP]
    spec = np.abs(rfft(frames * hann(WINDOW, sym=False), n=N_FFT, axis=1)) ** 2 / N_FFT
    energies = spec @ mel_filterbank().T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, :N_COEFFS]


def fit_to_frames(mfcc: np.ndarray, n_frames: int) -> np.ndarray:
    """Trim or edge-pad MFCC rows to exactly ``4 * n_frames``."""
    want = SAMPLES_PER_FRAME * n_frames
    m = np.asarray(mfcc)
    if m.shape[0] == 0:
        raise ContractError("no MFCC frames to fit")
    if m.shape[0] >= want:
        return m[:want]
    return np.concatenate([m, np.repeat(m[-1:], want - m.shape[0], axis=0)])


def read_wav(path) -> tuple[int, np.ndarray]:
    """Mono 16-bit PCM or float32 WAV as float64 samples in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ContractError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return rate, data.astype(np.float64) / 32768.0
    if data.dtype == np.float32:
        return rate, data.astype(np.float64)
    raise ContractError(f"{path}: unsupported sample type {data.dtype}")
