"""Definition-level reference implementations, written for clarity not speed."""

import itertools
import math
from fractions import Fraction


def ranking(values):
    """Segment indices by descending value, ties by ascending index."""
    return [i for _, i in sorted((-v, i) for i, v in enumerate(values))]


def dcg(gains, k):
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains[:k]))


def ndcg(labels, scores, k, variant):
    order = ranking(scores)
    ideal = dcg(sorted(labels, reverse=True), k)
    if ideal == 0:
        return 0.0
    gains = [scores[i] if variant == "paper_literal" else labels[i] for i in order]
    return dcg(gains, k) / ideal


def precision(labels, scores, k):
    top_label = set(ranking(labels)[:k])
    top_pred = set(ranking(scores)[:k])
    return len(top_label & top_pred) / k


def permutation_expectation(labels, k):
    """Exact mean of standard NDCG@k and P@k over every ordering of the segments.

    Continuous i.i.d. scores make every ordering equally likely.
    """
    n = len(labels)
    nd, pr, count = 0.0, Fraction(0), 0
    for perm in itertools.permutations(range(n)):
        # perm[j] is the rank position of segment j; higher score means earlier
        scores = [n - perm[j] for j in range(n)]
        nd += ndcg(labels, scores, k, "standard")
        if k <= n:
            pr += Fraction(len(set(ranking(labels)[:k]) & set(ranking(scores)[:k])), k)
        count += 1
    return nd / count, float(pr / count)


def cronbach_alpha(rows):
    k = len(rows)
    n = len(rows[0])

    def var(xs):
        m = sum(xs) / len(xs)
        return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)

    item_var = sum(var(r) for r in rows)
    totals = [sum(r[j] for r in rows) for j in range(n)]
    return k / (k - 1) * (1 - item_var / var(totals))


def kendall_tau_b(a, b):
    conc = disc = ties_a = ties_b = 0
    n = len(a)
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif (da > 0) == (db > 0):
                conc += 1
            else:
                disc += 1
    return (conc - disc) / math.sqrt((conc + disc + ties_a) * (conc + disc + ties_b))
