"""Per-video ranking metrics: DCG/NDCG@k, P@k, chance baselines, boxplots.

Two NDCG readings are supported:

``paper_literal``
    the gain in the numerator is the *predicted* score of each item in
    predicted order; the ideal DCG uses ground-truth labels sorted
    descending. Not bounded by 1 when predictions exceed labels.
``standard``
    the gain is the ground-truth label of each item in predicted order.

All orderings break ties by ascending segment index.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

NDCG_VARIANTS = ("paper_literal", "standard")
LABEL_RANGE = (0.0, 2.0)


class DegenerateIdcgWarning(RuntimeWarning):
    """Ideal DCG is zero (all-zero labels); NDCG reported as 0."""


@dataclass(frozen=True)
class RankedVideo:
    video_id: str
    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if labels.size < 1 or labels.shape != scores.shape:
            raise ContractError(f"video {self.video_id!r}: need equal, non-empty label and score vectors")
        if labels.min() < LABEL_RANGE[0] or labels.max() > LABEL_RANGE[1]:
            raise ContractError(f"video {self.video_id!r}: labels outside [0, 2]")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.labels.size


def rank_order(values) -> np.ndarray:
    """Indices sorted by descending value, ties by ascending index."""
    return np.argsort(-np.asarray(values, dtype=np.float64), kind="stable")


def _discounts(n: int) -> np.ndarray:
    return np.log2(np.arange(2, n + 2, dtype=np.float64))


def dcg_at_k(scores: Sequence[float], k: int) -> float:
    """DCG of gains already listed in ranking order; sums what exists if k > len."""
    if k < 1:
        raise ContractError("k must be at least 1")
    g = np.asarray(scores, dtype=np.float64).reshape(-1)[:k]
    return float(np.sum(g / _discounts(g.size)))


def ndcg_at_k(video: RankedVideo, k: int, variant: str = "paper_literal") -> float:
    if variant not in NDCG_VARIANTS:
        raise ContractError(f"unknown NDCG variant {variant!r}")
    order = rank_order(video.scores)
    gains = video.scores[order] if variant == "paper_literal" else video.labels[order]
    idcg = dcg_at_k(np.sort(video.labels)[::-1], k)
    if idcg == 0.0:
        warnings.warn(f"video {video.video_id!r}: ideal DCG is 0, NDCG set to 0", DegenerateIdcgWarning,
                      stacklevel=2)
        return 0.0
    return dcg_at_k(gains, k) / idcg


def precision_at_k(video: RankedVideo, k: int) -> float:
    """Overlap of the top-k by label and the top-k by prediction, over k."""
    if not 1 <= k <= len(video):
        raise ContractError(f"video {video.video_id!r}: k={k} outside [1, {len(video)}]")
    top_true = set(rank_order(video.labels)[:k].tolist())
    top_pred = set(rank_order(video.scores)[:k].tolist())
    return len(top_true & top_pred) / k


METRICS = ("ndcg_paper_literal", "ndcg_standard", "precision")


@dataclass(frozen=True)
class BoxplotStats:
    p5: float
    q1: float
    median: float
    q3: float
    p95: float
    mean: float
    outliers: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"p5": self.p5, "q1": self.q1, "median": self.median, "q3": self.q3, "p95": self.p95,
                "mean": self.mean, "outliers": list(self.outliers)}


def boxplot_stats(values: Iterable[float]) -> BoxplotStats:
    """Whiskers at the 5th/95th percentiles (linear interpolation)."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ContractError("boxplot_stats needs at least one value")
    p5, q1, med, q3, p95 = np.percentile(v, [5, 25, 50, 75, 95])
    out = tuple(float(x) for x in v if x < p5 or x > p95)
    return BoxplotStats(float(p5), float(q1), float(med), float(q3), float(p95), float(v.mean()), out)


@dataclass
class EvalReport:
    """Per-video metric values keyed by (metric, k), plus their means."""

    video_ids: list[str]
    ks: tuple[int, ...]
    variant: str
    values: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    degenerate: list[str] = field(default_factory=list)

    def mean(self, metric: str, k: int) -> float:
        return float(np.mean(self.values[(metric, k)]))

    def ndcg(self, k: int, variant: str | None = None) -> float:
        return self.mean(f"ndcg_{variant or self.variant}", k)

    def precision(self, k: int) -> float:
        return self.mean("precision", k)

    def means(self) -> dict[str, float]:
        return {f"{m}@{k}": self.mean(m, k) for (m, k) in self.values}

    def boxplot(self, metric: str, k: int) -> BoxplotStats:
        return boxplot_stats(self.values[(metric, k)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["video_id", "metric", "k", "value"])
        for i, vid in enumerate(self.video_ids):
            for (m, k), vals in self.values.items():
                w.writerow([vid, m, k, repr(float(vals[i]))])
        for (m, k) in self.values:
            w.writerow(["__mean__", m, k, repr(self.mean(m, k))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "n_videos": len(self.video_ids),
            "ks": list(self.ks),
            "ndcg_variant": self.variant,
            "means": self.means(),
            "boxplots": {f"{m}@{k}": self.boxplot(m, k).to_dict() for (m, k) in self.values},
            "degenerate_idcg": list(self.degenerate),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def mean_over_videos(videos: Sequence[RankedVideo], ks: Sequence[int] = (5, 10),
                     variant: str = "paper_literal") -> EvalReport:
    """Both NDCG variants and P@k for each video and k, with unweighted means.

    ``variant`` picks which NDCG reading :meth:`EvalReport.ndcg` returns.
    """
    if not videos:
        raise ContractError("no videos to evaluate")
    if variant not in NDCG_VARIANTS:
        raise ContractError(f"unknown NDCG variant {variant!r}")
    ks = tuple(int(k) for k in ks)
    report = EvalReport([v.video_id for v in videos], ks, variant)
    cols = {(m, k): [] for m in METRICS for k in ks}
    for v in videos:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateIdcgWarning)
            for k in ks:
                cols[("ndcg_paper_literal", k)].append(ndcg_at_k(v, k, "paper_literal"))
                cols[("ndcg_standard", k)].append(ndcg_at_k(v, k, "standard"))
                try:
                    cols[("precision", k)].append(precision_at_k(v, k))
                except ContractError as exc:
                    raise ContractError(f"video {v.video_id!r}: {exc}") from None
        if any(issubclass(c.category, DegenerateIdcgWarning) for c in caught):
            report.degenerate.append(v.video_id)
    report.values = {key: np.array(vals) for key, vals in cols.items()}
    return report


# -- chance level ---------------------------------------------------------------

def _batch_metrics(labels: np.ndarray, scores: np.ndarray, k: int, variant: str):
    """NDCG@k and P@k for every row of ``scores`` (trials x segments)."""
    n = labels.size
    order = np.argsort(-scores, axis=1, kind="stable")
    kk = min(k, n)
    disc = _discounts(kk)
    idcg = float(np.sum(np.sort(labels)[::-1][:kk] / disc))
    if variant == "standard":
        gains = labels[order[:, :kk]]
    else:
        gains = np.take_along_axis(scores, order[:, :kk], axis=1)
    ndcg = np.zeros(scores.shape[0]) if idcg == 0.0 else (gains / disc).sum(axis=1) / idcg
    prec = None
    if k <= n:
        relevant = np.zeros(n, dtype=bool)
        relevant[rank_order(labels)[:k]] = True
        prec = relevant[order[:, :k]].sum(axis=1) / k
    return ndcg, prec


@dataclass(frozen=True)
class ChanceResult:
    ndcg: float
    precision: float
    k: int
    n_trials: int
    variant: str


def chance_baseline(videos: Sequence, k: int, n_trials: int = 10_000, seed: int = 0,
                    variant: str = "standard", chunk: int = 20_000) -> ChanceResult:
    """Monte Carlo expectation of NDCG@k and P@k under i.i.d. U[0, 2] scores.

    ``videos`` may be :class:`RankedVideo` objects or bare label vectors. Each
    video draws from its own stream seeded by ``(seed, video position)``.
    """
    if n_trials < 1:
        raise ContractError("n_trials must be at least 1")
    if variant not in NDCG_VARIANTS:
        raise ContractError(f"unknown NDCG variant {variant!r}")
    ndcgs, precs = [], []
    for i, v in enumerate(videos):
        labels = np.asarray(v.labels if isinstance(v, RankedVideo) else v, dtype=np.float64).reshape(-1)
        rng = np.random.default_rng([seed, i])
        nd_sum, p_sum, done = 0.0, 0.0, 0
        while done < n_trials:
            m = min(chunk, n_trials - done)
            scores = rng.uniform(LABEL_RANGE[0], LABEL_RANGE[1], size=(m, labels.size))
            nd, pr = _batch_metrics(labels, scores, k, variant)
            nd_sum += nd.sum()
            p_sum += pr.sum() if pr is not None else np.nan
            done += m
        ndcgs.append(nd_sum / n_trials)
        precs.append(p_sum / n_trials)
    return ChanceResult(float(np.mean(ndcgs)), float(np.mean(precs)), k, n_trials, variant)
