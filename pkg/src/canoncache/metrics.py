"""Clustering-quality evaluation of cache-key functions.

A cache-key function partitions queries, so its quality decomposes like a
clustering: homogeneity ``h`` measures precision (each key maps to one
intent), completeness ``c`` measures consistency (each intent maps to one
key), and ``V`` combines them. Mutual information, its chance-corrected
form (AMI), and the Fowlkes-Mallows index complete the picture, plus the
compression view: rate = log2 of the number of distinct keys, distortion
= 1 − h.

Conventions, fixed so degenerate clusterings score deterministically:

* ``h = 1`` when H(Intent) = 0, ``c = 1`` when H(Key) = 0;
* ``V = 0`` when h = c = 0 (a single key over several intents scores
  h=0, c=1, V=0);
* AMI uses the arithmetic-mean-of-entropies normalizer and is 0 when the
  denominator vanishes; the expected MI under the permutation model is
  computed exactly by summing over feasible hypergeometric cell values;
* all entropies and MI are in bits (base-2 logs); h, c, V are
  base-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import EmptyInput, InvalidParams, LengthMismatch
from .model import CacheKey, IntentLabel, canonical_key_string

_EPS = np.finfo(float).eps


def _as_token(label) -> str:
    if isinstance(label, CacheKey):
        return canonical_key_string(label)
    if isinstance(label, IntentLabel):
        return label.label
    return str(label)


@dataclass(frozen=True)
class ContingencyTable:
    """Intent × key co-occurrence counts underlying every metric here."""

    counts: np.ndarray
    n: int
    intent_labels: tuple
    key_labels: tuple

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def build_contingency(truth, keys) -> ContingencyTable:
    """Count co-occurrences of ground-truth intents and assigned keys.

    Labels are sorted lexicographically so the table layout is
    deterministic and independent of input order.
    """
    truth = [_as_token(t) for t in truth]
    keys = [_as_token(k) for k in keys]
    if len(truth) != len(keys):
        raise LengthMismatch(f"{len(truth)} truth labels vs {len(keys)} keys")
    if not truth:
        raise EmptyInput("no labels")
    intent_labels = tuple(sorted(set(truth)))
    key_labels = tuple(sorted(set(keys)))
    intent_index = {label: i for i, label in enumerate(intent_labels)}
    key_index = {label: j for j, label in enumerate(key_labels)}
    counts = np.zeros((len(intent_labels), len(key_labels)), dtype=np.int64)
    for t, k in zip(truth, keys):
        counts[intent_index[t], key_index[k]] += 1
    return ContingencyTable(
        counts=counts, n=len(truth), intent_labels=intent_labels, key_labels=key_labels
    )


# ---------------------------------------------------------------------------
# Entropies
# ---------------------------------------------------------------------------

def entropy_bits(counts: np.ndarray) -> float:
    """Shannon entropy in bits of the distribution given by nonneg counts."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _conditional_entropy_bits(table: ContingencyTable, given_keys: bool) -> float:
    """H(Intent|Key) when given_keys, else H(Key|Intent); in bits."""
    counts = table.counts if given_keys else table.counts.T
    n = table.n
    total = 0.0
    for j in range(counts.shape[1]):
        col = counts[:, j]
        colsum = col.sum()
        if colsum > 0:
            total += (colsum / n) * entropy_bits(col)
    return total


def homogeneity(table: ContingencyTable) -> float:
    """h = 1 − H(Intent|Key)/H(Intent); 1 when H(Intent) = 0."""
    h_intent = entropy_bits(table.row_sums)
    if h_intent == 0.0:
        return 1.0
    return 1.0 - _conditional_entropy_bits(table, given_keys=True) / h_intent


def completeness(table: ContingencyTable) -> float:
    """c = 1 − H(Key|Intent)/H(Key); 1 when H(Key) = 0."""
    h_key = entropy_bits(table.col_sums)
    if h_key == 0.0:
        return 1.0
    return 1.0 - _conditional_entropy_bits(table, given_keys=False) / h_key


def v_measure(h: float, c: float, beta: float = 1.0) -> float:
    """Weighted harmonic combination (1+β²)hc/(β²h + c); 0 when h = c = 0."""
    if not (0.0 <= h <= 1.0 and 0.0 <= c <= 1.0):
        raise InvalidParams(f"h={h}, c={c} outside [0,1]")
    if beta <= 0:
        raise InvalidParams(f"beta={beta} must be positive")
    if h == 0.0 and c == 0.0:
        return 0.0
    return (1.0 + beta * beta) * h * c / (beta * beta * h + c)


# ---------------------------------------------------------------------------
# Mutual information family
# ---------------------------------------------------------------------------

def mutual_information(table: ContingencyTable) -> float:
    """MI between intents and keys, in bits."""
    counts = table.counts.astype(np.float64)
    n = float(table.n)
    a = table.row_sums.astype(np.float64)
    b = table.col_sums.astype(np.float64)
    nz_i, nz_j = np.nonzero(counts)
    nij = counts[nz_i, nz_j]
    terms = (nij / n) * (np.log2(nij * n) - np.log2(a[nz_i] * b[nz_j]))
    return float(terms.sum())


def expected_mutual_information(table: ContingencyTable) -> float:
    """E[MI] under the permutation (hypergeometric) model, in bits.

    Exact direct summation over all feasible cell values nij in
    [max(1, a_i + b_j − n), min(a_i, b_j)] with hypergeometric weights
    evaluated via log-gamma.
    """
    n = int(table.n)
    a = table.row_sums.astype(np.int64)
    b = table.col_sums.astype(np.int64)
    lg = gammaln(np.arange(n + 2, dtype=np.float64))  # lg[k] = ln((k-1)!)
    log2n = math.log2(n)
    emi = 0.0
    for ai in a.tolist():
        base = lg[ai + 1] + lg[n - ai + 1] - lg[n + 1]
        for bj in b.tolist():
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.int64)
            log_w = (
                base
                + lg[bj + 1]
                + lg[n - bj + 1]
                - lg[nij + 1]
                - lg[ai - nij + 1]
                - lg[bj - nij + 1]
                - lg[n - ai - bj + nij + 1]
            )
            terms = (nij / n) * (np.log2(nij) + log2n - math.log2(ai * bj)) * np.exp(log_w)
            emi += float(terms.sum())
    return emi


def adjusted_mi(table: ContingencyTable) -> float:
    """(MI − E[MI]) / (mean(H(Intent), H(Key)) − E[MI]); 0 on zero denominator."""
    mi = mutual_information(table)
    emi = expected_mutual_information(table)
    normalizer = 0.5 * (entropy_bits(table.row_sums) + entropy_bits(table.col_sums))
    denominator = normalizer - emi
    if abs(denominator) < _EPS:
        return 0.0
    return (mi - emi) / denominator


def fowlkes_mallows(table: ContingencyTable) -> float:
    """FMI = TP / sqrt((TP+FP)(TP+FN)) over item pairs; 0 when undefined."""
    counts = table.counts.astype(np.float64)
    pairs_both = float((counts * (counts - 1)).sum()) / 2.0
    a = table.row_sums.astype(np.float64)
    b = table.col_sums.astype(np.float64)
    pairs_intent = float((a * (a - 1)).sum()) / 2.0
    pairs_key = float((b * (b - 1)).sum()) / 2.0
    if pairs_intent == 0.0 or pairs_key == 0.0:
        return 0.0
    return pairs_both / math.sqrt(pairs_intent * pairs_key)


# ---------------------------------------------------------------------------
# Whole-row report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyQualityReport:
    h: float
    c: float
    v: float
    beta: float
    mi: float
    ami: float
    fmi: float
    h_intent: float
    h_key: float
    rate_bits: float
    distortion: float
    n_keys: int

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "c": self.c,
            "v": self.v,
            "beta": self.beta,
            "mi": self.mi,
            "ami": self.ami,
            "fmi": self.fmi,
            "h_intent": self.h_intent,
            "h_key": self.h_key,
            "rate_bits": self.rate_bits,
            "distortion": self.distortion,
            "n_keys": self.n_keys,
        }


def report(truth, keys, beta: float = 1.0) -> KeyQualityReport:
    """Compute every key-quality metric for one truth/keys pairing.

    rate_bits uses the number of distinct observed keys; distortion is
    1 − h by definition.
    """
    table = build_contingency(truth, keys)
    h = homogeneity(table)
    c = completeness(table)
    n_keys = len(table.key_labels)
    return KeyQualityReport(
        h=h,
        c=c,
        v=v_measure(h, c, beta),
        beta=beta,
        mi=mutual_information(table),
        ami=adjusted_mi(table),
        fmi=fowlkes_mallows(table),
        h_intent=entropy_bits(table.row_sums),
        h_key=entropy_bits(table.col_sums),
        rate_bits=math.log2(n_keys),
        distortion=1.0 - h,
        n_keys=n_keys,
    )
