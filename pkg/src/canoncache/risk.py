"""Risk-coverage analysis and risk-controlled threshold selection.

The marginal unsafe rate R̂(τ) counts covered-and-wrong records over the
*whole* calibration set, so it is monotone nonincreasing in τ. A
threshold certificate (τ*, bound variant, α, δ, n) is produced by adding
a finite-sample correction C to R̂ and taking the smallest τ whose upper
confidence bound stays under α. Four correction variants:

* ``hoeffding_union``  C = sqrt(ln(K/δ) / 2n), union bound over the grid
* ``ltt_hoeffding``    C = sqrt(ln(1/δ) / 2n), fixed-sequence testing
* ``eb_union``         empirical Bernstein with δ/K per test
* ``ltt_eb``           empirical Bernstein with the full δ per test

LTT variants walk the grid from the highest threshold down and stop at
the first failure, which is valid because R̂ is monotone in τ; they
avoid the ln K union penalty entirely. Empirical-Bernstein corrections
use the unbiased sample variance of the per-example binary loss,
recomputed at each τ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, InvalidParams, NoCoverage

VARIANTS = ("hoeffding_union", "eb_union", "ltt_hoeffding", "ltt_eb")

DEFAULT_GRID_SIZE = 100
DEFAULT_GRID_MAX = 0.99


def default_grid(size: int = DEFAULT_GRID_SIZE, upper: float = DEFAULT_GRID_MAX) -> np.ndarray:
    """Equally spaced candidate thresholds in [0, upper]."""
    return np.linspace(0.0, upper, size)


@dataclass(frozen=True)
class CalibrationSet:
    """Labeled (confidence, correct) pairs used to pick a threshold."""

    confidences: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        conf = np.asarray(self.confidences, dtype=np.float64)
        corr = np.asarray(self.correct, dtype=bool)
        if conf.size == 0:
            raise EmptyInput("calibration set is empty")
        if conf.size != corr.size:
            raise InvalidParams("confidences and correctness differ in length")
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise InvalidParams("confidences outside [0,1]")
        object.__setattr__(self, "confidences", conf)
        object.__setattr__(self, "correct", corr)

    @property
    def n(self) -> int:
        return int(self.confidences.size)

    @classmethod
    def from_records(cls, records) -> "CalibrationSet":
        pairs = list(records)
        return cls(
            confidences=np.array([p[0] for p in pairs], dtype=np.float64),
            correct=np.array([bool(p[1]) for p in pairs], dtype=bool),
        )


def empirical_risk(cal: CalibrationSet, tau: float) -> float:
    """Marginal unsafe rate: covered-and-wrong count over n."""
    covered = cal.confidences >= tau
    return float(np.sum(covered & ~cal.correct)) / cal.n


def coverage(cal: CalibrationSet, tau: float) -> float:
    return float(np.mean(cal.confidences >= tau))


def safety(cal: CalibrationSet, tau: float) -> float:
    covered = cal.confidences >= tau
    total = int(covered.sum())
    if total == 0:
        raise NoCoverage(f"no record has confidence >= {tau}")
    return float(np.sum(covered & cal.correct)) / total


# ---------------------------------------------------------------------------
# Finite-sample corrections
# ---------------------------------------------------------------------------

def correction(variant: str, n: int, k: int, delta: float, vhat: float = 0.0) -> float:
    """Closed-form correction C(n, K, δ) for the given bound variant.

    ``vhat`` (the sample variance of the binary loss) only matters for
    the empirical-Bernstein variants and must lie in [0, 0.25].
    """
    if variant not in VARIANTS:
        raise InvalidParams(f"unknown variant {variant!r}")
    if n < 1 or k < 1:
        raise InvalidParams(f"n={n}, K={k} must be >= 1")
    if not 0.0 < delta < 1.0:
        raise InvalidParams(f"delta={delta} outside (0,1)")
    if variant == "hoeffding_union":
        return math.sqrt(math.log(k / delta) / (2 * n))
    if variant == "ltt_hoeffding":
        return math.sqrt(math.log(1 / delta) / (2 * n))
    if not 0.0 <= vhat <= 0.25 + 1e-12:
        raise InvalidParams(f"vhat={vhat} outside [0, 0.25]")
    # Empirical Bernstein; union variant splits delta across the K tests.
    log_term = math.log(3 * k / delta) if variant == "eb_union" else math.log(3 / delta)
    return math.sqrt(2 * vhat * log_term / n) + 3 * log_term / n


def _loss_variance(risk: float, n: int) -> float:
    """Unbiased sample variance of the binary loss with mean `risk`."""
    if n < 2:
        return 0.0
    return risk * (1.0 - risk) * n / (n - 1)


@dataclass(frozen=True)
class BoundSpec:
    """Which bound to apply, at what risk budget, over which grid."""

    variant: str
    alpha: float
    delta: float
    grid: np.ndarray = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParams(f"unknown variant {self.variant!r}")
        if not 0.0 < self.alpha < 1.0 or not 0.0 < self.delta < 1.0:
            raise InvalidParams("alpha and delta must lie in (0,1)")
        grid = self.grid if self.grid is not None else default_grid()
        grid = np.asarray(grid, dtype=np.float64)
        if grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise InvalidParams("grid must be strictly increasing with K >= 1")
        if grid.min() < 0.0 or grid.max() > 1.0:
            raise InvalidParams("grid thresholds outside [0,1]")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class ThresholdCertificate:
    """Deployment artifact: the selected threshold and its guarantee."""

    tau_star: float | None
    variant: str
    alpha: float
    delta: float
    n: int
    ucb_at_tau: float | None
    calib_coverage: float | None

    @property
    def feasible(self) -> bool:
        return self.tau_star is not None

    def to_dict(self) -> dict:
        return {
            "tau_star": self.tau_star,
            "feasible": self.feasible,
            "variant": self.variant,
            "alpha": self.alpha,
            "delta": self.delta,
            "n": self.n,
            "ucb_at_tau": self.ucb_at_tau,
            "calib_coverage": self.calib_coverage,
        }


def _grid_risks(cal: CalibrationSet, grid: np.ndarray) -> np.ndarray:
    """R̂(τ) for every grid point, via sorted suffix counts."""
    order = np.argsort(cal.confidences, kind="stable")
    conf_sorted = cal.confidences[order]
    wrong_sorted = (~cal.correct[order]).astype(np.float64)
    # errors among records with confidence >= tau
    suffix_wrong = np.concatenate([np.cumsum(wrong_sorted[::-1])[::-1], [0.0]])
    idx = np.searchsorted(conf_sorted, grid, side="left")
    return suffix_wrong[idx] / cal.n


def _grid_ucbs(cal: CalibrationSet, spec: BoundSpec) -> tuple[np.ndarray, np.ndarray]:
    risks = _grid_risks(cal, spec.grid)
    k = spec.grid.size
    if spec.variant in ("hoeffding_union", "ltt_hoeffding"):
        c = correction(spec.variant, cal.n, k, spec.delta)
        return risks, risks + c
    ucbs = np.array(
        [
            r + correction(spec.variant, cal.n, k, spec.delta, _loss_variance(r, cal.n))
            for r in risks
        ]
    )
    return risks, ucbs


def select_threshold(cal: CalibrationSet, spec: BoundSpec) -> ThresholdCertificate:
    """Pick τ* = the smallest threshold whose UCB stays under α.

    Union-bound variants scan the whole grid. LTT variants test from the
    highest threshold downward, spending the full δ per test, and stop
    at the first failure; the last passing τ is τ*. Returns an
    infeasible certificate (tau_star=None) when no threshold passes.
    """
    risks, ucbs = _grid_ucbs(cal, spec)
    grid = spec.grid
    chosen = None
    if spec.variant.startswith("ltt"):
        for i in range(grid.size - 1, -1, -1):
            if ucbs[i] <= spec.alpha:
                chosen = i
            else:
                break
    else:
        passing = np.nonzero(ucbs <= spec.alpha)[0]
        if passing.size:
            chosen = int(passing[0])
    if chosen is None:
        return ThresholdCertificate(
            tau_star=None,
            variant=spec.variant,
            alpha=spec.alpha,
            delta=spec.delta,
            n=cal.n,
            ucb_at_tau=None,
            calib_coverage=None,
        )
    tau = float(grid[chosen])
    return ThresholdCertificate(
        tau_star=tau,
        variant=spec.variant,
        alpha=spec.alpha,
        delta=spec.delta,
        n=cal.n,
        ucb_at_tau=float(ucbs[chosen]),
        calib_coverage=coverage(cal, tau),
    )


# ---------------------------------------------------------------------------
# Sweeps and Monte-Carlo validation
# ---------------------------------------------------------------------------

def risk_coverage_sweep(cal: CalibrationSet, grid: np.ndarray | None = None) -> list[dict]:
    """One record per grid point: τ, coverage, safety (None if empty), R̂."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    risks = _grid_risks(cal, grid)
    records = []
    for tau, risk in zip(grid, risks):
        cov = coverage(cal, float(tau))
        safe = safety(cal, float(tau)) if cov > 0 else None
        records.append(
            {"tau": float(tau), "coverage": cov, "safety": safe, "risk": float(risk)}
        )
    return records


def validate_guarantee(
    generator,
    spec: BoundSpec,
    trials: int,
    n_calibration: int = 500,
    n_test: int = 4000,
    seed: int = 20260209,
) -> float:
    """Monte-Carlo check of the (α, δ) guarantee.

    ``generator(rng, n)`` must return a fresh CalibrationSet drawn from a
    fixed distribution with known conditional accuracy. Each trial draws
    a calibration and a test set, selects τ*, and measures the test
    marginal unsafe rate at τ*; a trial violates when that rate exceeds
    α. Infeasible certificates abstain entirely and cannot violate.
    Returns the violation fraction, which the guarantee bounds by δ.
    """
    if trials < 100:
        raise InvalidParams(f"trials={trials} < 100")
    violations = 0
    for trial in range(trials):
        rng = np.random.default_rng((seed, trial))
        cal = generator(rng, n_calibration)
        cert = select_threshold(cal, spec)
        if not cert.feasible:
            continue
        test = generator(rng, n_test)
        if empirical_risk(test, cert.tau_star) > spec.alpha:
            violations += 1
    return violations / trials
