"""Independent brute-force implementations used as test oracles.

These deliberately avoid the library's code paths: entropies are direct
-sum p log2 p loops, expected MI under the permutation model is computed
from exact integer binomial coefficients, and FMI is counted over
explicit item pairs. Agreement with the fast implementations is asserted
to 1e-9.
"""

from __future__ import annotations

import math
from math import comb

import numpy as np


def entropy_direct(counts) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    terms = []
    for c in counts:
        if c > 0:
            p = c / total
            terms.append(-p * math.log2(p))
    return math.fsum(terms)


def homogeneity_direct(table) -> float:
    """1 - H(Intent|Key)/H(Intent) from a 2D count list."""
    rows = len(table)
    cols = len(table[0])
    n = sum(sum(r) for r in table)
    row_sums = [sum(r) for r in table]
    h_intent = entropy_direct(row_sums)
    if h_intent == 0:
        return 1.0
    h_cond = 0.0
    for j in range(cols):
        col = [table[i][j] for i in range(rows)]
        csum = sum(col)
        if csum:
            h_cond += (csum / n) * entropy_direct(col)
    return 1.0 - h_cond / h_intent


def completeness_direct(table) -> float:
    transposed = [list(row) for row in zip(*table)]
    return homogeneity_direct(transposed)


def v_direct(h: float, c: float, beta: float = 1.0) -> float:
    if h == 0.0 and c == 0.0:
        return 0.0
    return (1 + beta * beta) * h * c / (beta * beta * h + c)


def mi_direct(table) -> float:
    n = sum(sum(r) for r in table)
    row_sums = [sum(r) for r in table]
    col_sums = [sum(col) for col in zip(*table)]
    terms = []
    for i, row in enumerate(table):
        for j, nij in enumerate(row):
            if nij > 0:
                terms.append((nij / n) * math.log2(nij * n / (row_sums[i] * col_sums[j])))
    return math.fsum(terms)


def emi_exact(table) -> float:
    """Expected MI under the permutation model, from exact integer combs."""
    n = sum(sum(r) for r in table)
    row_sums = [sum(r) for r in table]
    col_sums = [sum(col) for col in zip(*table)]
    terms = []
    for a in row_sums:
        for b in col_sums:
            lo = max(1, a + b - n)
            hi = min(a, b)
            denom = comb(n, b)
            for nij in range(lo, hi + 1):
                weight = comb(a, nij) * comb(n - a, b - nij)
                prob = weight / denom  # exact ints -> correctly rounded float
                terms.append(prob * (nij / n) * math.log2(nij * n / (a * b)))
    return math.fsum(terms)


def ami_direct(table) -> float:
    mi = mi_direct(table)
    emi = emi_exact(table)
    row_sums = [sum(r) for r in table]
    col_sums = [sum(col) for col in zip(*table)]
    normalizer = 0.5 * (entropy_direct(row_sums) + entropy_direct(col_sums))
    denominator = normalizer - emi
    if abs(denominator) < np.finfo(float).eps:
        return 0.0
    return (mi - emi) / denominator


def fmi_pairwise(truth, keys) -> float:
    """FMI by counting item pairs explicitly."""
    t = np.asarray(truth)
    k = np.asarray(keys)
    same_t = t[:, None] == t[None, :]
    same_k = k[:, None] == k[None, :]
    upper = np.triu(np.ones((len(t), len(t)), dtype=bool), 1)
    tp = int(np.sum(same_t & same_k & upper))
    pairs_t = int(np.sum(same_t & upper))
    pairs_k = int(np.sum(same_k & upper))
    if pairs_t == 0 or pairs_k == 0:
        return 0.0
    return tp / math.sqrt(pairs_t * pairs_k)


def labels_from_table(table):
    """Expand a contingency table back into truth/key label sequences."""
    truth = []
    keys = []
    for i, row in enumerate(table):
        for j, nij in enumerate(row):
            truth.extend([i] * nij)
            keys.extend([j] * nij)
    return truth, keys


def random_table(rng: np.random.Generator, max_rows: int = 6, max_cols: int = 6, max_cell: int = 6):
    """Random contingency table with no all-zero rows or columns."""
    while True:
        rows = int(rng.integers(2, max_rows + 1))
        cols = int(rng.integers(2, max_cols + 1))
        table = rng.integers(0, max_cell + 1, size=(rows, cols))
        if table.sum() == 0:
            continue
        table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        if table.shape[0] >= 1 and table.shape[1] >= 1:
            return [[int(x) for x in row] for row in table]
