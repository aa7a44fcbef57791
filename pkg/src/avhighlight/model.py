"""Modular multimodal fusion model for 5 s segment scoring.

Per-modality preprocessors map each stream to a per-frame embedding; the
embeddings are concatenated in a fixed canonical order, run through a
bidirectional LSTM, and the final forward/backward states feed a small
dense head that emits one unbounded score per segment.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, ParamStore, forward
from .errors import ContractError

MODALITY_ORDER = ("googlenet", "places365", "affect_arousal", "affect_valence", "cams", "faces", "mfcc")
EMBEDDING_MODALITIES = ("googlenet", "places365", "affect_arousal", "affect_valence")


@dataclass(frozen=True)
class ModalityConfig:
    name: str
    dim: int
    samples_per_frame: int = 1


MODALITIES = {
    "googlenet": ModalityConfig("googlenet", 1024),
    "places365": ModalityConfig("places365", 2048),
    "affect_arousal": ModalityConfig("affect_arousal", 128),
    "affect_valence": ModalityConfig("affect_valence", 128),
    "cams": ModalityConfig("cams", 196),
    "faces": ModalityConfig("faces", 1),
    "mfcc": ModalityConfig("mfcc", 13, samples_per_frame=4),
}


@dataclass(frozen=True)
class ModelSpec:
    modalities: tuple[str, ...] = MODALITY_ORDER
    dims: Mapping[str, int] = field(default_factory=dict)
    embed_dim: int = 64
    cam_filters: int = 64
    cam_map: tuple[int, int] = (14, 14)
    mfcc_filters: tuple[int, int] = (64, 128)
    mfcc_kernel: int = 3
    lstm_units: int = 20
    head_units: int = 20
    dropout: float = 0.5
    lstm_input_dropout: float = 0.5
    lstm_recurrent_dropout: float = 0.5
    frames_per_segment: int = 150

    def __post_init__(self):
        object.__setattr__(self, "modalities", canonical_order(self.modalities))
        object.__setattr__(self, "dims", dict(self.dims))
        object.__setattr__(self, "cam_map", tuple(self.cam_map))
        object.__setattr__(self, "mfcc_filters", tuple(self.mfcc_filters))
        self.validate()

    def validate(self) -> None:
        if not self.modalities:
            raise ContractError("model needs at least one modality")
        unknown = set(self.dims) - set(MODALITIES)
        if unknown:
            raise ContractError(f"dims given for unknown modalities {sorted(unknown)}")
        ints = dict(embed_dim=self.embed_dim, cam_filters=self.cam_filters, mfcc_kernel=self.mfcc_kernel,
                    lstm_units=self.lstm_units, head_units=self.head_units,
                    frames_per_segment=self.frames_per_segment)
        ints.update({f"mfcc_filters[{i}]": f for i, f in enumerate(self.mfcc_filters)})
        for key, val in ints.items():
            if int(val) != val or val < 1:
                raise ContractError(f"{key} must be a positive integer, got {val!r}")
        if len(self.mfcc_filters) != 2:
            raise ContractError("mfcc branch has exactly two conv layers")
        for key in ("dropout", "lstm_input_dropout", "lstm_recurrent_dropout"):
            if not 0.0 <= getattr(self, key) < 1.0:
                raise ContractError(f"{key} must lie in [0, 1)")
        if "cams" in self.dims and self.dims["cams"] != self.cam_map[0] * self.cam_map[1]:
            raise ContractError("cams dim must equal the CAM map area")
        for name, d in self.dims.items():
            if d < 1:
                raise ContractError(f"dim for {name} must be positive")

    def dim(self, name: str) -> int:
        if name == "cams":
            return self.cam_map[0] * self.cam_map[1]
        return int(self.dims.get(name, MODALITIES[name].dim))

    def input_shape(self, name: str) -> tuple[int, int]:
        return (self.frames_per_segment * MODALITIES[name].samples_per_frame, self.dim(name))

    def concat_width(self) -> int:
        n_embed = sum(m in EMBEDDING_MODALITIES or m == "cams" for m in self.modalities)
        width = self.embed_dim * n_embed
        if "faces" in self.modalities:
            width += self.dim("faces")
        if "mfcc" in self.modalities:
            width += self.mfcc_filters[1]
        return width

    def replace(self, **changes) -> ModelSpec:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["modalities"] = list(self.modalities)
        d["cam_map"] = list(self.cam_map)
        d["mfcc_filters"] = list(self.mfcc_filters)
        d["dims"] = {k: self.dims[k] for k in sorted(self.dims)}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> ModelSpec:
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ContractError(f"unknown ModelSpec keys {sorted(extra)}")
        kw = dict(d)
        if "modalities" in kw:
            kw["modalities"] = tuple(kw["modalities"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> ModelSpec:
        return cls.from_dict(json.loads(text))


def canonical_order(modalities) -> tuple[str, ...]:
    mods = list(modalities)
    unknown = [m for m in mods if m not in MODALITIES]
    if unknown:
        raise ContractError(f"unknown modalities {unknown}; supported: {list(MODALITY_ORDER)}")
    if len(set(mods)) != len(mods):
        raise ContractError(f"duplicate modalities in {mods}")
    return tuple(m for m in MODALITY_ORDER if m in mods)


@dataclass(frozen=True)
class SegmentScore:
    video_id: str
    segment_index: int
    score: float


@dataclass
class Model:
    spec: ModelSpec
    graph: Graph
    params: ParamStore

    @property
    def param_count(self) -> int:
        return self.params.size


# -- parameter counting -------------------------------------------------------

def _lstm_count(width: int, units: int) -> int:
    return 2 * 4 * ((width + units + 1) * units)


def _head_count(spec: ModelSpec) -> int:
    return 2 * spec.lstm_units * spec.head_units + spec.head_units + spec.head_units + 1


def count_params(spec: ModelSpec, scope: str = "total") -> int:
    """Trainable scalars, computed without allocating tensors.

    ``scope="post_concat"`` counts only the biLSTM and the head.
    """
    post = _lstm_count(spec.concat_width(), spec.lstm_units) + _head_count(spec)
    if scope == "post_concat":
        return post
    if scope != "total":
        raise ContractError(f"unknown scope {scope!r}")
    E = spec.embed_dim
    total = post
    for m in spec.modalities:
        if m in EMBEDDING_MODALITIES:
            total += spec.dim(m) * E + E
        elif m == "cams":
            F = spec.cam_filters
            total += spec.dim("cams") * F + F + F * E + E
        elif m == "mfcc":
            K = spec.mfcc_kernel
            f1, f2 = spec.mfcc_filters
            total += K * spec.dim("mfcc") * f1 + f1 + K * f1 * f2 + f2
    return total


def solve_hidden_units(template: ModelSpec, target_params: int, scope: str = "total", max_units: int = 4096) -> int:
    """LSTM/head width whose parameter count is closest to ``target_params``.

    Integer search over the monotone count; ties go to the smaller width and
    targets below the one-unit count clamp to 1.
    """
    def count(u: int) -> int:
        return count_params(template.replace(lstm_units=u, head_units=u), scope)

    lo, hi = 1, max_units
    if count(lo) >= target_params:
        return 1
    if count(hi) < target_params:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) >= target_params:
            hi = mid
        else:
            lo = mid
    return lo if abs(count(lo) - target_params) <= abs(count(hi) - target_params) else hi


# -- graph construction -------------------------------------------------------

def _glorot(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def build_graph(spec: ModelSpec) -> Graph:
    """Scoring graph: one input per active modality, output ``score`` (B, 1)."""
    g = Graph()
    parts = []
    for m in spec.modalities:
        x = g.input(m, (None,) + spec.input_shape(m))
        if m in EMBEDDING_MODALITIES:
            h = g.add("dense", x, params=(f"{m}.dense.W", f"{m}.dense.b"))
            h = g.add("relu", h)
            parts.append(g.add("dropout", h, rate=spec.dropout))
        elif m == "cams":
            h = g.add("filterbank2d", x, params=("cams.filters.W", "cams.filters.b"))
            h = g.add("relu", h)
            h = g.add("dense", h, params=("cams.dense.W", "cams.dense.b"))
            h = g.add("relu", h)
            parts.append(g.add("dropout", h, rate=spec.dropout))
        elif m == "faces":
            parts.append(x)
        elif m == "mfcc":
            h = x
            for i in (1, 2):
                h = g.add("conv1d", h, params=(f"mfcc.conv{i}.W", f"mfcc.conv{i}.b"))
                h = g.add("relu", h)
                h = g.add("maxpool1d", h)
            parts.append(h)
    fused = g.add("concat", *parts) if len(parts) > 1 else parts[0]
    lstm = g.add("bilstm", fused,
                 params=("lstm.fwd.W", "lstm.fwd.U", "lstm.fwd.b", "lstm.bwd.W", "lstm.bwd.U", "lstm.bwd.b"),
                 input_dropout=spec.lstm_input_dropout, recurrent_dropout=spec.lstm_recurrent_dropout)
    h = g.add("dense", lstm, params=("head.dense.W", "head.dense.b"))
    h = g.add("relu", h)
    h = g.add("dropout", h, rate=spec.dropout)
    score = g.add("dense", h, params=("head.out.W", "head.out.b"))
    g.set_output("score", score)
    return g


def with_loss(graph: Graph, kind: str, ccc_variant: str = "lin_concordance", margin: float = 1.0,
              eps: float | None = None) -> Graph:
    """Copy of a scoring graph with a scalar ``loss`` output appended."""
    from . import losses

    g = Graph()
    g.nodes = list(graph.nodes)
    g.input_ids = dict(graph.input_ids)
    g.outputs = dict(graph.outputs)
    score = graph.outputs["score"]
    if kind == "ccc":
        labels = g.input("labels", (None,))
        loss = g.add("ccc_loss", score, labels, variant=ccc_variant,
                     eps=losses.TRAIN_EPS if eps is None else eps)
    elif kind == "ranking":
        hi = g.input("pair_high", (None,))
        lo = g.input("pair_low", (None,))
        loss = g.add("margin_ranking_loss", score, hi, lo, margin=margin)
    else:
        raise ContractError(f"unknown loss kind {kind!r}")
    g.set_output("loss", loss)
    return g


def init_params(spec: ModelSpec, seed: int = 0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    E = spec.embed_dim
    for m in spec.modalities:
        if m in EMBEDDING_MODALITIES:
            d = spec.dim(m)
            store.add(f"{m}.dense.W", _glorot(rng, d, E, (d, E)))
            store.add(f"{m}.dense.b", np.zeros(E))
        elif m == "cams":
            h, w = spec.cam_map
            F = spec.cam_filters
            store.add("cams.filters.W", _glorot(rng, h * w, F, (h, w, F)))
            store.add("cams.filters.b", np.zeros(F))
            store.add("cams.dense.W", _glorot(rng, F, E, (F, E)))
            store.add("cams.dense.b", np.zeros(E))
        elif m == "mfcc":
            K = spec.mfcc_kernel
            c_in = spec.dim("mfcc")
            for i, f in enumerate(spec.mfcc_filters, start=1):
                store.add(f"mfcc.conv{i}.W", _glorot(rng, K * c_in, K * f, (K, c_in, f)))
                store.add(f"mfcc.conv{i}.b", np.zeros(f))
                c_in = f
    H = spec.lstm_units
    D = spec.concat_width()
    s = 1.0 / np.sqrt(H)
    for direction in ("fwd", "bwd"):
        store.add(f"lstm.{direction}.W", rng.uniform(-s, s, size=(D, 4 * H)))
        store.add(f"lstm.{direction}.U", rng.uniform(-s, s, size=(H, 4 * H)))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget gate
        store.add(f"lstm.{direction}.b", b)
    U = spec.head_units
    store.add("head.dense.W", _glorot(rng, 2 * H, U, (2 * H, U)))
    store.add("head.dense.b", np.zeros(U))
    store.add("head.out.W", _glorot(rng, U, 1, (U, 1)))
    store.add("head.out.b", np.zeros(1))
    return store


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    model = Model(spec, build_graph(spec), init_params(spec, seed))
    assert model.params.size == count_params(spec)
    return model


def build_full_model(spec: ModelSpec | None = None, seed: int = 0) -> Model:
    return build_model(spec or ModelSpec(), seed)


SINGLE_FEATURE_UNITS = {"mfcc": 13, "faces": 4}


def single_feature_spec(modality: str, spec: ModelSpec | None = None) -> ModelSpec:
    if modality not in MODALITIES:
        raise ContractError(f"unknown modality {modality!r}")
    units = SINGLE_FEATURE_UNITS.get(modality, 20)
    return (spec or ModelSpec()).replace(modalities=(modality,), lstm_units=units, head_units=units)


def build_single_feature_model(modality: str, spec: ModelSpec | None = None, seed: int = 0) -> Model:
    return build_model(single_feature_spec(modality, spec), seed)


def ablation_spec(excluded: str, target_params: int = 65_000, spec: ModelSpec | None = None,
                  scope: str = "post_concat") -> ModelSpec:
    """All modalities except ``excluded``, with widths solved for the budget."""
    if excluded not in MODALITIES:
        raise ContractError(f"unknown modality {excluded!r}")
    base = spec or ModelSpec()
    template = base.replace(modalities=tuple(m for m in base.modalities if m != excluded))
    smallest = count_params(template.replace(lstm_units=1, head_units=1), scope)
    if target_params < smallest:
        raise ContractError(f"target of {target_params} parameters is below the minimum {smallest}")
    units = solve_hidden_units(template, target_params, scope)
    return template.replace(lstm_units=units, head_units=units)


def build_ablation_model(excluded: str, target_params: int = 65_000, spec: ModelSpec | None = None,
                         seed: int = 0, scope: str = "post_concat") -> Model:
    return build_model(ablation_spec(excluded, target_params, spec, scope), seed)


# -- scoring ------------------------------------------------------------------

def score_batch(graph: Graph, params: ParamStore, batch: Mapping[str, np.ndarray]) -> np.ndarray:
    """Scores for a batch of segments, dropout off. Returns shape (B,)."""
    missing = [m for m in graph.input_ids if m not in batch and m not in ("labels", "pair_high", "pair_low")]
    if missing:
        raise ContractError(f"segment is missing modalities {missing}")
    feeds = {m: batch[m] for m in graph.input_ids if m in batch}
    return forward(graph, params, feeds, training=False)["score"].reshape(-1)


def score_segment(graph: Graph, params: ParamStore, features: Mapping[str, np.ndarray], video_id: str = "",
                  segment_index: int = 0) -> SegmentScore:
    batch = {m: np.asarray(v, dtype=np.float64)[None] for m, v in features.items()}
    return SegmentScore(video_id, segment_index, float(score_batch(graph, params, batch)[0]))
