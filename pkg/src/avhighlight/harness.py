"""Experiment protocols: cross-validated training, feature studies, fine-tuning, reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import multiprocessing
import warnings
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .agreement import (
    aggregate_annotations,
    cronbach_alpha,
    histogram,
    kendall_tau_b,
    rescale_annotations,
)
from .autodiff import (
    AdamConfig,
    ParamStore,
    adam_step,
    backward,
    forward,
    run,
    save_checkpoint,
)
from .autodiff.params import HLPS_VERSION
from .data.bundle import HLFB_VERSION
from .data.segments import SegmentDataset
from .errors import ContractError, DegenerateError, NumericalError
from .losses import CCC_VARIANTS, PAIR_POLICIES, build_pair_set
from .metrics import (
    NDCG_VARIANTS,
    EvalReport,
    RankedVideo,
    chance_baseline,
    mean_over_videos,
)
from .model import (
    ModelSpec,
    ablation_spec,
    build_graph,
    canonical_order,
    count_params,
    init_params,
    single_feature_spec,
    with_loss,
)
from .seeding import derive_seed, rng_for

LOSS_KINDS = ("ccc", "ranking")
LOSS_DEFAULTS = {"ccc": (300, 20), "ranking": (64, 10)}
SELECTION_METRIC = "ndcg_standard"
TABLE_METRICS = ("ndcg_paper_literal", "ndcg_standard", "precision")


class CalibrationWarning(UserWarning):
    """Literal NDCG reported for a model whose scores are not on the label scale."""


@dataclass(frozen=True)
class ExperimentConfig:
    loss: str = "ccc"
    batch_size: int | None = None
    epochs: int | None = None
    folds: int = 5
    ks: tuple[int, ...] = (5, 10)
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)
    ccc_variant: str = "lin_concordance"
    pair_policy: str = "within_batch"
    max_pairs: int | None = None
    pair_seed: int | None = None
    margin: float = 1.0
    ndcg_variant: str = "paper_literal"
    selection_k: int = 5
    chance_trials: int = 10_000
    eval_batch: int = 256
    ablation_budget: int = 65_000
    finetune_folds: int = 6
    finetune_videos: int = 30
    finetune_batch: int = 64
    finetune_epochs: int = 40
    finetune_lr: float = 1e-4

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ContractError(f"unknown loss {self.loss!r}")
        batch, epochs = LOSS_DEFAULTS[self.loss]
        if self.batch_size is None:
            object.__setattr__(self, "batch_size", batch)
        if self.epochs is None:
            object.__setattr__(self, "epochs", epochs)
        if isinstance(self.adam, Mapping):
            object.__setattr__(self, "adam", AdamConfig(**self.adam))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        if self.batch_size < 1 or self.epochs < 0 or self.folds < 2 or not self.ks or min(self.ks) < 1:
            raise ContractError("batch_size >= 1, epochs >= 0, folds >= 2 and positive ks required")
        if self.ccc_variant not in CCC_VARIANTS:
            raise ContractError(f"unknown ccc variant {self.ccc_variant!r}")
        if self.pair_policy not in PAIR_POLICIES:
            raise ContractError(f"unknown pair policy {self.pair_policy!r}")
        if self.ndcg_variant not in NDCG_VARIANTS:
            raise ContractError(f"unknown NDCG variant {self.ndcg_variant!r}")

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def for_loss(self, loss: str) -> ExperimentConfig:
        """Same settings with the batch size and epoch defaults of another loss."""
        return self.replace(loss=loss, batch_size=None, epochs=None)

    def finetune_config(self) -> ExperimentConfig:
        return self.replace(batch_size=self.finetune_batch, epochs=self.finetune_epochs,
                            adam=dataclasses.replace(self.adam, learning_rate=self.finetune_lr))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ks"] = list(self.ks)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ExperimentConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractError(f"unknown config keys {sorted(unknown)}")
        return cls(**dict(d))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


# -- folds ---------------------------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def __len__(self) -> int:
        return len(self.folds)

    def __getitem__(self, i: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return self.folds[i]

    def to_dict(self) -> dict:
        return {str(i): {"train": list(tr), "validation": list(va)} for i, (tr, va) in enumerate(self.folds)}


def kfold_split(video_ids: Sequence[str], k: int, seed: int) -> FoldAssignment:
    """Shuffle videos by seed and cut into k near-equal validation parts."""
    ids = list(dict.fromkeys(video_ids))
    if not 2 <= k <= len(ids):
        raise ContractError(f"cannot split {len(ids)} videos into {k} folds")
    order = rng_for(seed, "kfold").permutation(len(ids))
    parts = np.array_split(order, k)
    folds = []
    for part in parts:
        val = set(part.tolist())
        folds.append((tuple(ids[i] for i in range(len(ids)) if i not in val),
                      tuple(ids[i] for i in sorted(val))))
    return FoldAssignment(tuple(folds))


# -- training ------------------------------------------------------------------

@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    checkpoint: str | None = None
    metric_name: str = f"{SELECTION_METRIC}@5"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", self.metric_name, "best"])
        for e, (loss, metric) in enumerate(zip(self.train_loss, self.val_metric)):
            w.writerow([e, repr(loss), repr(metric), int(e == self.best_epoch)])
        return buf.getvalue()


@dataclass
class TrainResult:
    spec: ModelSpec
    params: ParamStore
    history: TrainingHistory


def _scores(graph, params: ParamStore, dataset: SegmentDataset, modalities, batch: int) -> np.ndarray:
    out = np.empty(len(dataset))
    for start in range(0, len(dataset), batch):
        idx = np.arange(start, min(start + batch, len(dataset)))
        out[idx] = forward(graph, params, dataset.batch(idx, modalities), training=False)["score"].reshape(-1)
    return out


def ranked_videos(dataset: SegmentDataset, scores: np.ndarray) -> list[RankedVideo]:
    out = []
    for vid in dataset.videos():
        idx = np.flatnonzero(dataset.video_ids == vid)
        idx = idx[np.argsort(dataset.segment_index[idx], kind="stable")]
        out.append(RankedVideo(vid, dataset.labels[idx], scores[idx]))
    return out


def score_videos(params: ParamStore, spec: ModelSpec, dataset: SegmentDataset, batch: int = 256) -> list[RankedVideo]:
    """Score every segment with dropout off and group by video."""
    return ranked_videos(dataset, _scores(build_graph(spec), params, dataset, spec.modalities, batch))


def evaluate(params: ParamStore, spec: ModelSpec, dataset: SegmentDataset, ks: Sequence[int] = (5, 10),
             variant: str = "paper_literal", batch: int = 256) -> EvalReport:
    return mean_over_videos(score_videos(params, spec, dataset, batch), ks, variant)


def _check_dims(spec: ModelSpec, dataset: SegmentDataset) -> None:
    for m in spec.modalities:
        if m not in dataset.features:
            raise ContractError(f"dataset lacks modality {m!r}")
        want = spec.input_shape(m)
        got = dataset.features[m].shape[1:]
        if tuple(got) != want:
            raise ContractError(f"{m}: dataset segments are {tuple(got)}, model expects {want}")


def _batch_feeds(config: ExperimentConfig, dataset: SegmentDataset, idx: np.ndarray, modalities, seed: int):
    feeds = dataset.batch(idx, modalities)
    if config.loss == "ccc":
        if idx.size < 2:
            return None
        feeds["labels"] = dataset.labels[idx]
        return feeds
    pairs = build_pair_set(dataset.labels[idx], config.pair_policy, config.max_pairs, seed,
                           groups=dataset.video_ids[idx])
    if len(pairs) == 0:
        return None
    feeds["pair_high"] = pairs.high
    feeds["pair_low"] = pairs.low
    return feeds


def train(spec: ModelSpec, dataset: SegmentDataset, config: ExperimentConfig,
          validation: SegmentDataset | None = None, init: ParamStore | None = None, seed: int | None = None,
          checkpoint: str | Path | None = None) -> TrainResult:
    """Mini-batch Adam on shuffled segments, keeping the best validation epoch.

    Without a validation set the last epoch is kept. ``init`` is copied and
    its optimizer state reset.
    """
    if len(dataset) == 0:
        raise ContractError("empty training set")
    _check_dims(spec, dataset)
    seed = config.seed if seed is None else seed
    if config.loss == "ranking" and len(build_pair_set(dataset.labels)) == 0:
        raise ContractError("ranking loss needs at least one strictly ordered pair")
    graph = with_loss(build_graph(spec), config.loss, config.ccc_variant, config.margin)
    scoring = build_graph(spec)
    if init is None:
        params = init_params(spec, derive_seed(seed, "init"))
    else:
        params = init.copy()
        params.reset_optimizer()
    history = TrainingHistory(metric_name=f"{SELECTION_METRIC}@{config.selection_k}")
    best = params.copy()
    best_metric = -np.inf
    n = len(dataset)
    pair_root = seed if config.pair_seed is None else config.pair_seed
    for epoch in range(config.epochs):
        order = rng_for(seed, "shuffle", epoch).permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            feeds = _batch_feeds(config, dataset, idx, spec.modalities, derive_seed(pair_root, "pairs", epoch, b))
            if feeds is None:
                continue
            try:
                trace = run(graph, params, feeds, training=True, rng_seed=derive_seed(seed, "dropout", epoch, b))
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch} batch {b}: {exc}") from None
            adam_step(params, backward(graph, params, trace, "loss"), config.adam)
            losses.append(float(trace["loss"]))
        epoch_loss = float(np.mean(losses)) if losses else float("nan")
        if losses and not np.isfinite(epoch_loss):
            raise NumericalError(f"epoch {epoch}: non-finite training loss")
        history.train_loss.append(epoch_loss)
        if validation is not None:
            videos = ranked_videos(validation, _scores(scoring, params, validation, spec.modalities,
                                                       config.eval_batch))
            metric = mean_over_videos(videos, (config.selection_k,), "standard").mean(
                SELECTION_METRIC, config.selection_k)
        else:
            metric = float("nan")
        history.val_metric.append(metric)
        if validation is None or metric > best_metric:
            best_metric = metric
            best = params.copy()
            history.best_epoch = epoch
    if checkpoint is not None:
        save_checkpoint(best, checkpoint)
        history.checkpoint = str(checkpoint)
    return TrainResult(spec, best, history)


# -- parallel fold jobs --------------------------------------------------------

_SHARED: dict[str, Any] = {}


def _call_shared(task):
    fn, args = task
    return fn(_SHARED["dataset"], *args)


def _map_jobs(fn: Callable, dataset: SegmentDataset, tasks: Sequence[tuple], jobs: int = 1) -> list:
    """``fn(dataset, *task)`` for every task; results in task order regardless of ``jobs``.

    Workers are forked so the dataset is shared rather than pickled.
    """
    if jobs <= 1 or len(tasks) <= 1 or "fork" not in multiprocessing.get_all_start_methods():
        return [fn(dataset, *t) for t in tasks]
    _SHARED["dataset"] = dataset
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), mp_context=ctx) as pool:
            return list(pool.map(_call_shared, [(fn, t) for t in tasks]))
    finally:
        _SHARED.clear()


# -- cross-validation ----------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    validation: tuple[str, ...]
    history: TrainingHistory
    videos: list[RankedVideo]
    report: EvalReport


@dataclass
class CVResult:
    spec: ModelSpec
    folds: list[FoldResult]
    report: EvalReport

    @property
    def param_count(self) -> int:
        return count_params(self.spec)


def _fold_job(dataset: SegmentDataset, spec: ModelSpec, config: ExperimentConfig, fold: int,
              train_ids: tuple, val_ids: tuple, seed: int, init: ParamStore | None) -> FoldResult:
    tr, va = dataset.subset(train_ids), dataset.subset(val_ids)
    result = train(spec, tr, config, validation=va, init=init, seed=seed)
    videos = score_videos(result.params, spec, va, config.eval_batch)
    return FoldResult(fold, tuple(val_ids), result.history, videos,
                      mean_over_videos(videos, config.ks, config.ndcg_variant))


def cross_validate(spec: ModelSpec, dataset: SegmentDataset, config: ExperimentConfig,
                   folds: FoldAssignment | None = None, purpose: str = "cv", init: ParamStore | None = None,
                   jobs: int = 1) -> CVResult:
    """Train one model per fold; the pooled report covers every validation video once."""
    folds = folds or kfold_split(dataset.videos(), config.folds, derive_seed(config.seed, "folds"))
    tasks = [(spec, config, i, tr, va, derive_seed(config.seed, purpose, i), init)
             for i, (tr, va) in enumerate(folds.folds)]
    results = _map_jobs(_fold_job, dataset, tasks, jobs)
    videos = [v for r in results for v in r.videos]
    return CVResult(spec, results, mean_over_videos(videos, config.ks, config.ndcg_variant))


# -- study tables --------------------------------------------------------------

@dataclass
class StudyTable:
    """Mean metrics per model column, Table-style: one row per (metric, k)."""

    name: str
    columns: list[str]
    ks: tuple[int, ...]
    values: dict[str, dict[tuple[str, int], float]] = field(default_factory=dict)
    param_counts: dict[str, int] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def rows(self) -> list[tuple[str, int]]:
        return [(m, k) for m in TABLE_METRICS for k in self.ks]

    def value(self, column: str, metric: str, k: int) -> float:
        return self.values[column][(metric, k)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "k"] + self.columns)
        for metric, k in self.rows():
            w.writerow([metric, k] + [repr(self.values[c][(metric, k)]) if (metric, k) in self.values[c] else ""
                                      for c in self.columns])
        w.writerow(["params", ""] + [self.param_counts.get(c, "") for c in self.columns])
        return buf.getvalue()


def _report_values(report: EvalReport) -> dict[tuple[str, int], float]:
    return {(m, k): report.mean(m, k) for m in TABLE_METRICS for k in report.ks}


def chance_column(dataset: SegmentDataset, config: ExperimentConfig) -> dict[tuple[str, int], float]:
    labels = [v.labels for v in ranked_videos(dataset, np.zeros(len(dataset)))]
    seed = derive_seed(config.seed, "chance")
    out = {}
    for k in config.ks:
        lit = chance_baseline(labels, k, config.chance_trials, seed, "paper_literal")
        std = chance_baseline(labels, k, config.chance_trials, seed, "standard")
        out[("ndcg_paper_literal", k)] = lit.ndcg
        out[("ndcg_standard", k)] = std.ndcg
        out[("precision", k)] = std.precision
    return out


def _template(dataset: SegmentDataset, template: ModelSpec | None) -> ModelSpec:
    if template is not None:
        return template
    dims = {m: d for m, d in dataset.dims().items() if m != "cams"}
    return ModelSpec(modalities=dataset.modalities, dims=dims)


def _add_column(table: StudyTable, name: str, cv: CVResult) -> None:
    table.columns.append(name)
    table.values[name] = _report_values(cv.report)
    table.param_counts[name] = cv.param_count
    table.results[name] = cv


def run_single_feature_study(dataset: SegmentDataset, config: ExperimentConfig, template: ModelSpec | None = None,
                             modalities: Sequence[str] | None = None, jobs: int = 1) -> StudyTable:
    """One cross-validated model per modality, plus a chance column."""
    base = _template(dataset, template)
    folds = kfold_split(dataset.videos(), config.folds, derive_seed(config.seed, "folds"))
    table = StudyTable("single_feature", [], config.ks)
    for m in canonical_order(modalities or dataset.modalities):
        _add_column(table, m, cross_validate(single_feature_spec(m, base), dataset, config, folds, f"single/{m}",
                                             jobs=jobs))
    table.columns.append("chance")
    table.values["chance"] = chance_column(dataset, config)
    _calibration_note(table, config)
    return table


def run_ablation_study(dataset: SegmentDataset, config: ExperimentConfig, template: ModelSpec | None = None,
                       exclusions: Sequence[str] | None = None, ranking: Sequence[str] = (),
                       include_all: bool = True, jobs: int = 1) -> StudyTable:
    """Leave-one-out models at the parameter budget, the all-features model,
    and optional ranking-loss columns (``"all"`` or modality names)."""
    base = _template(dataset, template)
    folds = kfold_split(dataset.videos(), config.folds, derive_seed(config.seed, "folds"))
    table = StudyTable("ablation", [], config.ks)
    for m in canonical_order(exclusions if exclusions is not None else base.modalities):
        spec = ablation_spec(m, config.ablation_budget, base)
        _add_column(table, f"no_{m}", cross_validate(spec, dataset, config, folds, f"ablation/{m}", jobs=jobs))
    if include_all:
        _add_column(table, f"all_{config.loss}", cross_validate(base, dataset, config, folds, "ablation/all",
                                                                jobs=jobs))
    if ranking:
        rl = config.for_loss("ranking")
        for name in ranking:
            spec = base if name == "all" else ablation_spec(name, config.ablation_budget, base)
            _add_column(table, "all_ranking" if name == "all" else f"ranking_no_{name}",
                        cross_validate(spec, dataset, rl, folds, f"ablation/ranking/{name}", jobs=jobs))
        _calibration_note(table, rl)
    _calibration_note(table, config)
    return table


def _calibration_note(table: StudyTable, config: ExperimentConfig) -> None:
    if config.loss == "ranking" and config.ndcg_variant == "paper_literal":
        note = "ranking-loss scores are uncalibrated; paper_literal NDCG for those columns is not on the label scale"
        if note not in table.notes:
            table.notes.append(note)
            warnings.warn(note, CalibrationWarning, stacklevel=3)


# -- pretraining and fine-tuning -----------------------------------------------

def pretrain(dataset: SegmentDataset, config: ExperimentConfig, spec: ModelSpec | None = None,
             checkpoint: str | Path | None = None) -> TrainResult:
    """Full model trained on fold 0 of the summarization split."""
    spec = _template(dataset, spec)
    folds = kfold_split(dataset.videos(), config.folds, derive_seed(config.seed, "folds"))
    tr, va = folds[0]
    return train(spec, dataset.subset(tr), config, validation=dataset.subset(va),
                 seed=derive_seed(config.seed, "pretrain"), checkpoint=checkpoint)


@dataclass
class FinetuneResult:
    folds: FoldAssignment
    finetuned: CVResult
    baseline: CVResult
    chance: dict[tuple[str, int], float]

    def per_fold(self, metric: str, k: int) -> list[tuple[float, float]]:
        """(fine-tuned, baseline) mean per fold."""
        return [(f.report.mean(metric, k), b.report.mean(metric, k))
                for f, b in zip(self.finetuned.folds, self.baseline.folds)]

    def table(self) -> StudyTable:
        t = StudyTable("finetune", ["chance", "baseline", "fine_tuning"], self.finetuned.report.ks)
        t.values = {"chance": self.chance, "baseline": _report_values(self.baseline.report),
                    "fine_tuning": _report_values(self.finetuned.report)}
        t.param_counts = {"baseline": self.baseline.param_count, "fine_tuning": self.finetuned.param_count}
        return t


def _check_checkpoint(params: ParamStore, spec: ModelSpec) -> None:
    ref = init_params(spec, 0)
    if set(ref.params) != set(params.params) or any(ref[n].shape != params[n].shape for n in ref.params):
        raise ContractError("pretrained checkpoint does not match the model spec")


def finetune(pretrained: ParamStore, dataset: SegmentDataset, config: ExperimentConfig,
             spec: ModelSpec | None = None, jobs: int = 1) -> FinetuneResult:
    """Fine-tune from ``pretrained`` and train from scratch on the same folds."""
    spec = _template(dataset, spec)
    _check_checkpoint(pretrained, spec)
    videos = dataset.videos()
    if len(videos) != config.finetune_videos:
        warnings.warn(f"fine-tuning set has {len(videos)} videos, expected {config.finetune_videos}; "
                      f"splitting proportionally", RuntimeWarning, stacklevel=2)
    folds = kfold_split(videos, config.finetune_folds, derive_seed(config.seed, "finetune-folds"))
    ft = config.finetune_config()
    tuned = cross_validate(spec, dataset, ft, folds, "finetune", init=pretrained, jobs=jobs)
    scratch = cross_validate(spec, dataset, ft, folds, "finetune-baseline", jobs=jobs)
    return FinetuneResult(folds, tuned, scratch, chance_column(dataset, config))


# -- agreement -----------------------------------------------------------------

@dataclass
class AgreementResult:
    video_ids: list[str]
    alpha: list[float]
    tau: list[float]

    def histograms_csv(self, bins: int = 10) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "bin_left", "bin_right", "count"])
        for name, values in (("cronbach_alpha", self.alpha), ("kendall_tau_b", self.tau)):
            finite = [v for v in values if np.isfinite(v)]
            if finite:
                for left, right, count in histogram(finite, bins):
                    w.writerow([name, repr(left), repr(right), count])
        return buf.getvalue()

    def per_video_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["video_id", "cronbach_alpha", "kendall_tau_b"])
        for row in zip(self.video_ids, self.alpha, self.tau):
            w.writerow([row[0], repr(row[1]), repr(row[2])])
        return buf.getvalue()


def agreement_study(annotations: Mapping, reference: Mapping[str, Sequence[float]] | None = None) -> AgreementResult:
    """Per-video alpha across raters and tau between the rater mean and reference labels.

    Degenerate videos (constant sums or constant labels) get NaN.
    """
    ids, alphas, taus = [], [], []
    for vid in sorted(annotations):
        m = annotations[vid]
        rescaled = rescale_annotations(m)
        try:
            alpha = cronbach_alpha(rescaled)
        except DegenerateError:
            alpha = float("nan")
        tau = float("nan")
        if reference is not None and vid in reference:
            try:
                tau = kendall_tau_b(aggregate_annotations(rescaled), reference[vid])
            except DegenerateError:
                pass
        ids.append(vid)
        alphas.append(alpha)
        taus.append(tau)
    return AgreementResult(ids, alphas, taus)


# -- reporting -----------------------------------------------------------------

def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def boxplot_summary(tables: Sequence[StudyTable], k: int = 10, variants: Sequence[str] = NDCG_VARIANTS) -> dict:
    """NDCG@k distribution across videos for every trained model column."""
    out = {}
    for t in tables:
        for col, res in t.results.items():
            if not isinstance(res, CVResult) or k not in res.report.ks:
                continue
            out[f"{t.name}/{col}"] = {f"ndcg_{v}@{k}": res.report.boxplot(f"ndcg_{v}", k).to_dict() for v in variants}
    return out


def report(run_dir, single: StudyTable | None = None, ablation: StudyTable | None = None,
           finetuned: FinetuneResult | None = None, agreement: AgreementResult | None = None,
           boxplot_k: int = 10) -> list[Path]:
    """Write plot-ready tables and statistics; returns the files written."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str) -> None:
        path = run_dir / name
        path.write_text(text)
        written.append(path)

    tables = []
    if single is not None:
        put("table1.csv", single.to_csv())
        tables.append(single)
    if ablation is not None:
        put("table2.csv", ablation.to_csv())
        tables.append(ablation)
    if finetuned is not None:
        put("table3.csv", finetuned.table().to_csv())
        tables.append(StudyTable("finetune", [], finetuned.finetuned.report.ks,
                                 results={"baseline": finetuned.baseline, "fine_tuning": finetuned.finetuned}))
    if tables:
        put("fig2_boxplots.json", _dump_json(boxplot_summary(tables, boxplot_k)))
    if agreement is not None:
        put("fig3_histograms.csv", agreement.histograms_csv())
        put("agreement.csv", agreement.per_video_csv())
    return written


def run_manifest(config: ExperimentConfig | None = None, **extra) -> dict:
    """Replay record: package and format versions, config and its hash, seeds."""
    manifest = {
        "package": "avhighlight",
        "version": __version__,
        "formats": {"HLFB": HLFB_VERSION, "HLPS": HLPS_VERSION},
    }
    if config is not None:
        manifest["config"] = config.to_dict()
        manifest["config_hash"] = config.hash()
        manifest["seed"] = config.seed
    manifest.update(extra)
    return manifest


def write_manifest(run_dir, manifest: Mapping) -> Path:
    path = Path(run_dir) / "manifest.json"
    path.write_text(_dump_json(manifest))
    return path
