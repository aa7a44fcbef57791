"""Parameter storage, the Adam optimizer and the HLPS checkpoint format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, ParseError

HLPS_MAGIC = b"HLPS"
HLPS_VERSION = 1
_M_PREFIX = "adam.m."
_V_PREFIX = "adam.v."
_T_NAME = "adam.t"


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ContractError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ContractError("epsilon must be positive")
        if self.learning_rate < 0.0:
            raise ContractError("learning_rate must be non-negative")


@dataclass
class ParamStore:
    """Named float64 parameters plus Adam moments and step counter."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def add(self, name: str, value) -> None:
        if name.startswith("adam."):
            raise ContractError(f"parameter names may not start with 'adam.': {name!r}")
        if name in self.params:
            raise ContractError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=np.float64)
        self.params[name] = arr
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    @property
    def size(self) -> int:
        """Total number of trainable scalars."""
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> ParamStore:
        return ParamStore(
            {k: p.copy() for k, p in self.params.items()},
            {k: p.copy() for k, p in self.m.items()},
            {k: p.copy() for k, p in self.v.items()},
            self.t,
        )

    def reset_optimizer(self) -> None:
        for k, p in self.params.items():
            self.m[k] = np.zeros_like(p)
            self.v[k] = np.zeros_like(p)
        self.t = 0

    def equals(self, other: ParamStore) -> bool:
        if self.params.keys() != other.params.keys() or self.t != other.t:
            return False
        return all(
            np.array_equal(self.params[k], other.params[k])
            and np.array_equal(self.m[k], other.m[k])
            and np.array_equal(self.v[k], other.v[k])
            for k in self.params
        )


def adam_step(params: ParamStore, grads: dict[str, np.ndarray], config: AdamConfig = AdamConfig()) -> ParamStore:
    """One bias-corrected Adam update, applied in place. Returns ``params``."""
    missing = [k for k in params.params if k not in grads]
    if missing:
        raise ContractError(f"missing gradients for {missing}")
    params.t += 1
    t = params.t
    b1, b2 = config.beta1, config.beta2
    for name, p in params.params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
        m = params.m[name]
        v = params.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        # eps is added to the bias-corrected sqrt(v_hat), not to sqrt(v)
        p -= config.learning_rate * (m / (1.0 - b1**t)) / (np.sqrt(v / (1.0 - b2**t)) + config.epsilon)
    return params


def _records(store: ParamStore, with_optimizer: bool):
    for name, p in store.params.items():
        yield name, p
    if with_optimizer:
        for name, p in store.m.items():
            yield _M_PREFIX + name, p
        for name, p in store.v.items():
            yield _V_PREFIX + name, p
        yield _T_NAME, np.array(float(store.t))


def checkpoint_bytes(store: ParamStore, with_optimizer: bool = True) -> bytes:
    out = [HLPS_MAGIC, struct.pack("<I", HLPS_VERSION)]
    for name, arr in _records(store, with_optimizer):
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(store: ParamStore, path, with_optimizer: bool = True) -> None:
    Path(path).write_bytes(checkpoint_bytes(store, with_optimizer))


def parse_checkpoint(data: bytes) -> ParamStore:
    if len(data) < 8 or data[:4] != HLPS_MAGIC:
        raise ParseError("bad magic, expected b'HLPS'", 0)
    (version,) = struct.unpack_from("<I", data, 4)
    if version != HLPS_VERSION:
        raise ParseError(f"unsupported HLPS version {version}", 4)
    pos = 8
    tensors: dict[str, np.ndarray] = {}
    while pos < len(data):
        start = pos
        name = None
        try:
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + nlen > len(data):
                raise struct.error
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * count > len(data):
                raise struct.error
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(dims)
            pos += 8 * count
        except (struct.error, UnicodeDecodeError):
            raise ParseError("truncated or corrupt parameter record", start, name) from None
        tensors[name] = arr
    store = ParamStore()
    for name, arr in tensors.items():
        if not name.startswith("adam."):
            store.params[name] = arr
    for name, arr in store.params.items():
        store.m[name] = tensors.get(_M_PREFIX + name, np.zeros_like(arr))
        store.v[name] = tensors.get(_V_PREFIX + name, np.zeros_like(arr))
    if _T_NAME in tensors:
        store.t = int(tensors[_T_NAME])
    return store


def load_checkpoint(path) -> ParamStore:
    return parse_checkpoint(Path(path).read_bytes())
