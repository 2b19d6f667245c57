"""Weighted right-censored survival analysis of remediation.

The estimator is the product-limit (Kaplan-Meier) fit with per-subject
weights w = 1/|G|, |G| being the number of sites run by the same owner, so
every owner moves the curve by the same amount no matter how many sites
they operate. Variances come from the plain weighted Greenwood plug-in,
which treats weight as case mass: the curve itself is invariant under
rescaling all weights, the variance scales inversely (the w = 1/|G|
convention fixes the scale at one unit per owner, so this never matters in
practice). Because the remediation data violates proportional hazards,
curves are compared at fixed points in time on the log(-log S) scale with a
two-sided normal test, and families of such tests are corrected with the
Holm step-down procedure.
"""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class SurvivalInput:
    subject_id: str
    duration: float  # days until event or censoring
    event: bool  # True = remediated, False = right-censored
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError(f"{self.subject_id}: weight must be positive")
        if self.duration < 0:
            raise ValueError(f"{self.subject_id}: duration must be nonnegative")


@dataclass(frozen=True)
class SurvivalCurve:
    event_times: tuple[float, ...]
    survival: tuple[float, ...]
    variance: tuple[float, ...]
    ci_level: float = 0.95

    def __post_init__(self) -> None:
        if not (len(self.event_times) == len(self.survival) == len(self.variance)):
            raise ValueError("event_times, survival and variance must align")
        if any(b > a + 1e-15 for a, b in zip(self.survival, self.survival[1:])):
            raise ValueError("survival must be non-increasing")

    def confidence_band(self) -> list[tuple[float, float]]:
        """Pointwise CI bounds computed on the log(-log) scale."""
        z = _normal_quantile(0.5 + self.ci_level / 2.0)
        band = []
        for s, v in zip(self.survival, self.variance):
            if s <= 0.0 or s >= 1.0 or v <= 0.0:
                band.append((s, s))
                continue
            theta = math.log(-math.log(s))
            se = math.sqrt(v) / abs(s * math.log(s))
            lo = math.exp(-math.exp(theta + z * se))
            hi = math.exp(-math.exp(theta - z * se))
            band.append((lo, hi))
        return band


@dataclass(frozen=True)
class PointComparison:
    t: float
    s1: float
    s2: float
    z: float
    p: float


@dataclass(frozen=True)
class MultiTestResult:
    raw_p: tuple[float, ...]
    adjusted_p: tuple[float, ...]
    rejected: tuple[bool, ...]
    alpha: float


class SingularComparisonError(ValueError):
    """A compared survival value sits at 0 or 1, where the log(-log)
    transform is undefined."""


def weighted_km(inputs: Sequence[SurvivalInput], ci_level: float = 0.95) -> SurvivalCurve:
    """Product-limit estimate over weighted subjects.

    At each distinct event time t: S(t) = S(t-) * (1 - d/n) with d the event
    weight at t and n the weight still at risk (duration >= t); subjects
    censored at t count as at risk there (events precede censorings on
    ties). Greenwood's formula supplies the variance.
    """
    if not inputs:
        raise ValueError("survival input must be non-empty")

    by_time: dict[float, list[SurvivalInput]] = {}
    for item in inputs:
        by_time.setdefault(item.duration, []).append(item)
    times = sorted(by_time)

    at_risk = math.fsum(item.weight for item in inputs)
    survival = 1.0
    greenwood = 0.0
    out_t: list[float] = []
    out_s: list[float] = []
    out_v: list[float] = []

    for t in times:
        cohort = by_time[t]
        d = math.fsum(item.weight for item in cohort if item.event)
        if d > 0.0:
            survival *= 1.0 - d / at_risk
            remaining = at_risk - d
            greenwood = greenwood + (d / (at_risk * remaining) if remaining > 0.0 else math.inf)
            variance = survival * survival * greenwood
            if survival == 0.0:
                variance = 0.0
            out_t.append(t)
            out_s.append(survival)
            out_v.append(variance)
        at_risk -= math.fsum(item.weight for item in cohort)

    return SurvivalCurve(
        event_times=tuple(out_t),
        survival=tuple(out_s),
        variance=tuple(out_v),
        ci_level=ci_level,
    )


def survival_at(curve: SurvivalCurve, t: float) -> tuple[float, float]:
    """Right-continuous step lookup: (S(t), Var S(t)); (1, 0) before the
    first event."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    idx = bisect_right(curve.event_times, t) - 1
    if idx < 0:
        return 1.0, 0.0
    return curve.survival[idx], curve.variance[idx]


def cloglog_compare(curve1: SurvivalCurve, curve2: SurvivalCurve, t: float) -> PointComparison:
    """Fixed-time two-curve test on the log(-log) scale (delta method).

    z > 0 means the first curve sits lower (more remediation) at t. The
    p-value is the two-sided normal tail.
    """
    s1, v1 = survival_at(curve1, t)
    s2, v2 = survival_at(curve2, t)
    for s in (s1, s2):
        if s <= 0.0 or s >= 1.0:
            raise SingularComparisonError(
                f"survival {s} at t={t} is on the boundary; the transform is undefined"
            )
    numerator = math.log(-math.log(s1)) - math.log(-math.log(s2))
    se = math.sqrt(
        v1 / (s1 * math.log(s1)) ** 2 + v2 / (s2 * math.log(s2)) ** 2
    )
    if se == 0.0:
        z = 0.0 if numerator == 0.0 else math.copysign(math.inf, numerator)
    else:
        z = numerator / se
    p = math.erfc(abs(z) / math.sqrt(2.0)) if math.isfinite(z) else 0.0
    return PointComparison(t=t, s1=s1, s2=s2, z=z, p=p)


def holm_bonferroni(raw_p: Sequence[float], alpha: float = 0.05) -> MultiTestResult:
    """Holm step-down correction.

    Sorted ascending, adjusted p_(k) = max over j<=k of min(1, (m-j+1)p_(j));
    rejections are the maximal prefix of the sorted order with adjusted <= alpha,
    mapped back to input positions.
    """
    for p in raw_p:
        if not (0.0 < p <= 1.0):
            raise ValueError(f"p-values must lie in (0, 1]: {p}")
    m = len(raw_p)
    order = sorted(range(m), key=lambda i: raw_p[i])
    adjusted_sorted: list[float] = []
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * raw_p[idx]))
        adjusted_sorted.append(running)

    rejected_sorted = []
    still_rejecting = True
    for value in adjusted_sorted:
        still_rejecting = still_rejecting and value <= alpha
        rejected_sorted.append(still_rejecting)

    adjusted = [0.0] * m
    rejected = [False] * m
    for rank, idx in enumerate(order):
        adjusted[idx] = adjusted_sorted[rank]
        rejected[idx] = rejected_sorted[rank]
    return MultiTestResult(
        raw_p=tuple(raw_p),
        adjusted_p=tuple(adjusted),
        rejected=tuple(rejected),
        alpha=alpha,
    )


def _normal_quantile(q: float) -> float:
    """Inverse standard normal CDF (Acklam's rational approximation,
    refined with one Halley step; ~1e-15 accurate)."""
    if not (0.0 < q < 1.0):
        raise ValueError("quantile must be in (0, 1)")
    a = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
         1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
    b = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
         6.680131188771972e01, -1.328068155288572e01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
         -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
         3.754408661907416e00)
    p_low = 0.02425
    if q < p_low:
        u = math.sqrt(-2.0 * math.log(q))
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / (
            (((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0
        )
    elif q <= 1.0 - p_low:
        u = q - 0.5
        r = u * u
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )
    else:
        u = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / (
            (((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0
        )
    # Halley refinement against the exact CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - q
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def read_inputs_csv(text: str) -> list[SurvivalInput]:
    """subject_id,duration_days,event(0/1),weight"""
    inputs = []
    for row in csv.DictReader(io.StringIO(text)):
        inputs.append(
            SurvivalInput(
                subject_id=row["subject_id"],
                duration=float(row["duration_days"]),
                event=row["event"].strip() in ("1", "true", "True"),
                weight=float(row.get("weight") or 1.0),
            )
        )
    return inputs


def curve_to_csv(curve: SurvivalCurve) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["t", "S", "var", "ci_lo", "ci_hi"])
    for (t, s, v), (lo, hi) in zip(
        zip(curve.event_times, curve.survival, curve.variance), curve.confidence_band()
    ):
        writer.writerow([f"{t:.10g}", f"{s:.12g}", f"{v:.12g}", f"{lo:.12g}", f"{hi:.12g}"])
    return out.getvalue()
