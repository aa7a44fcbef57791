"""Concordance (CCC) and margin ranking losses.

Both are available as plain functions on score vectors and as graph node
kinds (``ccc_loss``, ``margin_ranking_loss``) so they can be differentiated
together with the model.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .autodiff.ops import register
from .errors import ContractError, DegenerateError, ShapeError

CCC_VARIANTS = ("lin_concordance", "eq1_literal")
PAIR_POLICIES = ("within_batch", "within_video")
TRAIN_EPS = 1e-8


def _moments(y, yhat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ContractError(f"length mismatch: {y.size} labels vs {yhat.size} predictions")
    if y.size < 2:
        raise ContractError("ccc needs at least 2 values")
    mu_y, mu_s = y.mean(), yhat.mean()
    dy, ds = y - mu_y, yhat - mu_s
    return y, yhat, mu_y, mu_s, dy, ds


def ccc(y, yhat, variant: str = "lin_concordance", eps: float = 0.0) -> float:
    """Concordance between labels and predictions, population moments.

    ``lin_concordance`` uses ``2 cov(y, yhat)`` in the numerator;
    ``eq1_literal`` uses ``2 sd(y) sd(yhat)``, which ignores ordering.
    With ``eps == 0`` a zero denominator raises :class:`DegenerateError`.
    """
    if variant not in CCC_VARIANTS:
        raise ContractError(f"unknown ccc variant {variant!r}")
    y, yhat, mu_y, mu_s, dy, ds = _moments(y, yhat)
    var_y, var_s = np.mean(dy * dy), np.mean(ds * ds)
    denom = var_y + var_s + (mu_y - mu_s) ** 2 + eps
    if denom == 0.0:
        raise DegenerateError("ccc undefined: both sequences constant with equal means")
    if variant == "lin_concordance":
        num = 2.0 * np.mean(dy * ds)
    else:
        num = 2.0 * np.sqrt(var_y) * np.sqrt(var_s)
    return float(num / denom)


def ccc_loss(y, yhat, variant: str = "lin_concordance", eps: float = 0.0) -> float:
    return 1.0 - ccc(y, yhat, variant, eps)


def _ccc_grad(y, s, variant, eps):
    """d ccc / d s for prediction vector ``s``."""
    n = s.size
    y, s, mu_y, mu_s, dy, ds = _moments(y, s)
    var_y, var_s = np.mean(dy * dy), np.mean(ds * ds)
    gap = mu_y - mu_s
    denom = var_y + var_s + gap * gap + eps
    d_denom = (2.0 * ds - 2.0 * gap) / n
    if variant == "lin_concordance":
        num = 2.0 * np.mean(dy * ds)
        d_num = 2.0 * dy / n
    else:
        sd_y, sd_s = np.sqrt(var_y), np.sqrt(var_s)
        num = 2.0 * sd_y * sd_s
        d_sd_s = ds / (n * sd_s) if sd_s > 0.0 else np.zeros(n)
        d_num = 2.0 * sd_y * d_sd_s
    return (d_num * denom - num * d_denom) / (denom * denom)


def _ccc_node_fwd(xs, ps, attrs, ctx):
    scores, labels = xs
    if scores.size != labels.size:
        raise ShapeError(f"{scores.size} scores vs {labels.size} labels")
    variant = attrs.get("variant", "lin_concordance")
    eps = attrs.get("eps", TRAIN_EPS)
    loss = ccc_loss(labels, scores, variant, eps)
    return np.array(loss), (scores, labels, variant, eps)


def _ccc_node_bwd(dout, cache, need):
    scores, labels, variant, eps = cache
    ds = -float(dout) * _ccc_grad(labels.reshape(-1), scores.reshape(-1), variant, eps)
    return [ds.reshape(scores.shape), None], []


register("ccc_loss", _ccc_node_fwd, _ccc_node_bwd)


@dataclass(frozen=True)
class PairSet:
    """Index pairs ``(high, low)`` with ``label[high] > label[low]`` strictly."""

    high: np.ndarray
    low: np.ndarray

    def __len__(self) -> int:
        return int(self.high.size)

    def __iter__(self):
        return iter(zip(self.high.tolist(), self.low.tolist()))

    @classmethod
    def empty(cls) -> PairSet:
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


def build_pair_set(labels: Sequence[float], policy: str = "within_batch", max_pairs: int | None = None,
                   seed: int = 0, groups: Sequence | None = None) -> PairSet:
    """All strictly ordered pairs among ``labels``, optionally subsampled.

    ``within_video`` only pairs segments sharing a ``groups`` entry.
    Subsampling draws ``max_pairs`` without replacement and keeps the
    enumeration order, so the result depends only on the inputs and seed.
    """
    if policy not in PAIR_POLICIES:
        raise ContractError(f"unknown pair policy {policy!r}")
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    n = labels.size
    if n < 2:
        raise ContractError("need at least 2 segments to form pairs")
    i, j = np.triu_indices(n, 1)
    keep = labels[i] != labels[j]
    if policy == "within_video":
        if groups is None:
            raise ContractError("within_video policy needs group ids")
        g = np.asarray(groups)
        if g.shape[0] != n:
            raise ContractError("groups must align with labels")
        keep &= g[i] == g[j]
    i, j = i[keep], j[keep]
    first_high = labels[i] > labels[j]
    high = np.where(first_high, i, j).astype(np.int64)
    low = np.where(first_high, j, i).astype(np.int64)
    if max_pairs is not None and high.size > max_pairs:
        pick = np.sort(np.random.default_rng(seed).choice(high.size, size=max_pairs, replace=False))
        high, low = high[pick], low[pick]
    return PairSet(high, low)


def margin_ranking_loss(scores: Mapping | Sequence[float], pairs: PairSet | Sequence[tuple], margin: float = 1.0) -> float:
    """Sum over pairs of ``max(0, margin - f(h) + f(l))``; 0 for no pairs.

    ``scores`` may be a sequence indexed by segment position or a mapping from
    whatever keys the pairs reference.
    """
    total = 0.0
    for h, l in pairs:
        try:
            total += max(0.0, margin - (float(scores[h]) - float(scores[l])))
        except (KeyError, IndexError):
            raise ContractError(f"pair ({h!r}, {l!r}) references an unscored segment") from None
    return total


def _margin_node_fwd(xs, ps, attrs, ctx):
    scores, high, low = xs
    s = scores.reshape(-1)
    high = high.astype(np.int64, copy=False).reshape(-1)
    low = low.astype(np.int64, copy=False).reshape(-1)
    if high.shape != low.shape:
        raise ShapeError("pair index arrays differ in length")
    if high.size and (max(high.max(), low.max()) >= s.size or min(high.min(), low.min()) < 0):
        raise ShapeError("pair index out of range")
    margin = attrs.get("margin", 1.0)
    hinge = margin - (s[high] - s[low])
    active = hinge > 0.0
    return np.array(float(np.sum(hinge[active]))), (scores.shape, high, low, active)


def _margin_node_bwd(dout, cache, need):
    shape, high, low, active = cache
    ds = np.zeros(int(np.prod(shape)))
    g = float(dout)
    np.add.at(ds, high[active], -g)
    np.add.at(ds, low[active], g)
    return [ds.reshape(shape), None, None], []


register("margin_ranking_loss", _margin_node_fwd, _margin_node_bwd)


def siamese_score(graph, params, segment) -> float:
    """Score one clip through the shared-weight branch.

    Pair members are scored with the same parameters during training, so at
    evaluation time this is exactly :func:`avhighlight.model.score_segment`.
    """
    from .model import score_segment

    return score_segment(graph, params, segment).score
