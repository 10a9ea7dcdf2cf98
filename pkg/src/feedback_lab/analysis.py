"""Reliability bounds, entropy estimates, rates and type-set count formulas."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .arrivals import ArrivalModel, arrival_stats
from .channel import DMC, channel_info


@dataclass(frozen=True)
class BoundInputs:
    """Everything the two reliability lower bounds depend on."""

    C: float
    C1: float
    R: float
    tau_bar_over_n: float
    h_limit: float = 1.0
    h_se: float = 0.0

    def __post_init__(self):
        for name in ("C", "C1", "R", "tau_bar_over_n", "h_limit", "h_se"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.C <= 0:
            raise ValueError("capacity must be positive")
        if self.h_limit > 1.0:
            raise ValueError("per-bit entropy cannot exceed 1 for equiprobable bits")

    def at_rate(self, R: float) -> "BoundInputs":
        return BoundInputs(self.C, self.C1, R, self.tau_bar_over_n, self.h_limit, self.h_se)


@dataclass(frozen=True)
class BoundValue:
    """A bound evaluation; ``valid`` is False when the raw value was negative."""

    value: float
    valid: bool


def _linear_bound(C1: float, slope: float, R: float) -> BoundValue:
    raw = C1 * (1.0 - slope * R)
    return BoundValue(max(raw, 0.0), raw >= 0.0)


def reliability_lb_instantaneous(b: BoundInputs) -> BoundValue:
    """Lower bound on E(R) for instantaneous encoding: C1 (1 - (h/C + tau_bar/n) R)."""
    return _linear_bound(b.C1, b.h_limit / b.C + b.tau_bar_over_n, b.R)


def reliability_lb_buffer(b: BoundInputs) -> BoundValue:
    """Lower bound on E(R) for buffer-then-transmit: C1 (1 - (1/C + tau_bar/n) R)."""
    return _linear_bound(b.C1, 1.0 / b.C + b.tau_bar_over_n, b.R)


def zero_crossing_instantaneous(b: BoundInputs) -> float:
    """Rate at which the instantaneous bound reaches zero."""
    return 1.0 / (b.h_limit / b.C + b.tau_bar_over_n)


def zero_crossing_buffer(b: BoundInputs) -> float:
    """Rate at which the buffer bound reaches zero."""
    return 1.0 / (1.0 / b.C + b.tau_bar_over_n)


def typeset_count_bound(q: float, t: float) -> tuple[float, float]:
    """Heuristic mean type-set counts: (before partitioning at t+1, after partitioning)."""
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if np.any(np.asarray(t) < 1):
        raise ValueError("t must be >= 1")
    nb = (2.0 - q) / 2.0 * t * t + (3.0 - q / 2.0) * t + q
    return nb, nb + (1.0 - q) * t + 1.0


# -- Monte Carlo summaries -----------------------------------------------------

@dataclass(frozen=True)
class RatePoint:
    n: int
    mean_lambda: float
    rate: float
    error_rate: float
    ci_halfwidth: float  # 95% normal-approximation half-width of the error rate
    rate_ci: tuple[float, float]
    trials: int


MIN_TRIALS = 30


def rate_point(records: Sequence, n: int, epsilon: float) -> RatePoint:
    """Rate n / mean(lambda) and error rate, with truncated trials counted as errors."""
    m = len(records)
    if m < MIN_TRIALS:
        raise ValueError(f"rate_point needs at least {MIN_TRIALS} trials, got {m}")
    lam = np.array([r.lam for r in records], dtype=float)
    err = np.array([(not r.correct) or r.truncated for r in records], dtype=float)
    mean_lam = float(lam.mean())
    e = float(err.mean())
    lam_hw = 1.96 * float(lam.std(ddof=1)) / math.sqrt(m)
    rate_ci = (n / (mean_lam + lam_hw), n / max(mean_lam - lam_hw, 1e-12))
    return RatePoint(n, mean_lam, n / mean_lam, e, 1.96 * math.sqrt(e * (1 - e) / m), rate_ci, m)


@dataclass(frozen=True)
class EntropyEstimate:
    n: int
    t_eval: int
    mean: float  # bits, whole posterior
    se: float

    @property
    def per_bit(self) -> float:
        return self.mean / self.n

    @property
    def per_bit_se(self) -> float:
        return self.se / self.n


def evaluation_time(m: ArrivalModel) -> int:
    """tau_bar_n + d(n) rounded up; raises when d(n) does not exist."""
    stats = arrival_stats(m)
    if not stats.bounded:
        raise ValueError(f"{m.describe()} arrivals have no almost-sure slack d(n)")
    return int(math.ceil(stats.tau_bar + stats.d - 1e-9))


def summarize_entropies(entropies: np.ndarray, n: int, t_eval: int) -> EntropyEstimate:
    h = np.asarray(entropies, dtype=float)
    if len(h) == 0:
        raise ValueError("no entropy samples")
    se = float(h.std(ddof=1)) / math.sqrt(len(h)) if len(h) > 1 else 0.0
    return EntropyEstimate(n, t_eval, float(h.mean()), se)


def entropy_estimate(cfg, t_eval: Optional[int] = None, workers: Optional[int] = None) -> EntropyEstimate:
    """Mean posterior entropy over ``cfg.trials`` runs stopped at ``t_eval``."""
    from .harness import posterior_entropies

    if t_eval is None:
        t_eval = evaluation_time(cfg.model)
    if t_eval < 1:
        raise ValueError("evaluation time precedes the first arrival")
    return summarize_entropies(posterior_entropies(cfg, t_eval, workers), cfg.n, t_eval)


# -- bounds table ----------------------------------------------------------------

BOUNDS_HEADER = "R,lb_instantaneous,lb_buffer,C,C1,h_limit,tau_bar_over_n"


def bound_inputs(ch: DMC, m: ArrivalModel, h_limit: float, h_se: float = 0.0) -> Optional[BoundInputs]:
    """Inputs at R = 0, or None when d(n) does not exist for the arrival model."""
    stats = arrival_stats(m)
    if not stats.bounded:
        return None
    info = channel_info(ch)
    return BoundInputs(info.capacity, info.c1, 0.0, stats.tau_bar / m.n, h_limit, h_se)


def bounds_table(ch: DMC, m: ArrivalModel, h_limit: float, rates: Sequence[float]) -> list[str]:
    """CSV rows (no header) of both bounds over a rate grid; "n/a" when undefined."""
    stats = arrival_stats(m)
    info = channel_info(ch)
    rows = []
    for R in rates:
        if not stats.bounded:
            rows.append(f"{R:.6g},n/a,n/a,{info.capacity:.8g},{info.c1:.8g},{h_limit:.6g},n/a")
            continue
        b = BoundInputs(info.capacity, info.c1, R, stats.tau_bar / m.n, h_limit)
        rows.append(f"{R:.6g},{reliability_lb_instantaneous(b).value:.8g},"
                    f"{reliability_lb_buffer(b).value:.8g},{b.C:.8g},{b.C1:.8g},"
                    f"{h_limit:.6g},{b.tau_bar_over_n:.8g}")
    return rows


def loglog_slope(t: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log t."""
    slope, _ = np.polyfit(np.log(np.asarray(t, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)
