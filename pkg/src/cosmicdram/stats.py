"""Statistical kernel of the correlation studies."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy import stats as sp_stats

from cosmicdram.core.base import CDObject
from cosmicdram.core.data_objects import TestStatus
from cosmicdram.core.exceptions import (
    EmptySampleError,
    InvalidPValueError,
    LengthMismatchError,
)
from cosmicdram.timegrid import PairedSeries

logger = logging.getLogger(__name__)

MIN_KENDALL_POINTS = 3


@dataclass(frozen=True)
class CorrelationResult(CDObject):
    status: TestStatus
    tau_b: float | None = None
    p_raw: float | None = None
    n: int = 0

    def __post_init__(self):
        ok = self.status == TestStatus.OK
        if ok and not (_finite(self.tau_b) and _finite(self.p_raw)):
            raise ValueError("an ok correlation needs finite tau_b and p_raw")
        if not ok and (self.tau_b is not None or self.p_raw is not None):
            raise ValueError("a refused correlation carries no statistics")

    @property
    def stat(self) -> float | None:
        return self.tau_b


@dataclass(frozen=True)
class KsResult(CDObject):
    status: TestStatus
    d_stat: float | None = None
    p_raw: float | None = None
    n_high: int = 0
    n_rest: int = 0
    direction: int = 0
    """+1 if the high sample has the larger mean, -1 if the smaller, 0 if equal."""

    def __post_init__(self):
        ok = self.status == TestStatus.OK
        if ok and not (_finite(self.d_stat) and _finite(self.p_raw)):
            raise ValueError("an ok KS result needs finite d_stat and p_raw")
        if not ok and (self.d_stat is not None or self.p_raw is not None):
            raise ValueError("a refused KS result carries no statistics")

    @property
    def stat(self) -> float | None:
        return self.d_stat

    @property
    def n(self) -> int:
        return self.n_high + self.n_rest


@dataclass
class AdjustedPValues(CDObject):
    p_adj: list[float] = field(default_factory=list)
    """Adjusted p-values, in the order of the raw ones."""

    def __len__(self) -> int:
        return len(self.p_adj)


@dataclass(frozen=True)
class UniformityResult(CDObject):
    status: TestStatus
    statistic: float | None = None
    p_raw: float | None = None
    dof: int = 0


def _finite(value: float | None) -> bool:
    return value is not None and math.isfinite(value)


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """
    Kendall rank correlation, tau-b variant.

    The p-value is two-sided, from the normal approximation of the
    concordant minus discordant pair count with the tie-corrected variance.

    Parameters
    ----------
    x, y
        Paired observations.

    Returns
    -------
    CorrelationResult
        Refused with ``too_few_points`` under 3 pairs and with
        ``untestable_constant`` when one of the variables is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise LengthMismatchError(f"x has {len(x)} values, y has {len(y)}")
    n = len(x)
    if n < MIN_KENDALL_POINTS:
        return CorrelationResult(TestStatus.TOO_FEW_POINTS, n=n)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return CorrelationResult(TestStatus.UNTESTABLE_CONSTANT, n=n)
    result = sp_stats.kendalltau(x, y, variant="b", method="asymptotic")
    tau = float(np.clip(result.statistic, -1.0, 1.0))
    p_raw = float(np.clip(result.pvalue, 0.0, 1.0))
    return CorrelationResult(TestStatus.OK, tau_b=tau, p_raw=p_raw, n=n)


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KsResult:
    """
    Two-sample Kolmogorov-Smirnov test.

    The p-value is the asymptotic Kolmogorov tail at
    ``(sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D`` with the effective size
    ``ne = na * nb / (na + nb)``.

    Parameters
    ----------
    a
        First sample, the high-neutron windows in the KS suites.
    b
        Second sample.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise EmptySampleError(f"samples of sizes {len(a)} and {len(b)}")
    d_stat = float(sp_stats.ks_2samp(a, b, method="asymp").statistic)
    ne = len(a) * len(b) / (len(a) + len(b))
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d_stat
    p_raw = float(np.clip(special.kolmogorov(lam), 0.0, 1.0))
    difference = a.mean() - b.mean()
    return KsResult(
        TestStatus.OK,
        d_stat=d_stat,
        p_raw=p_raw,
        n_high=len(a),
        n_rest=len(b),
        direction=int(np.sign(difference)),
    )


def by_adjust(p_values: Sequence[float]) -> AdjustedPValues:
    """
    Benjamini-Yekutieli false discovery rate adjustment.

    Valid under arbitrary dependence between the tests.

    Raises
    ------
    InvalidPValueError
        If a p-value is not a number in [0, 1].
    """
    p = np.asarray(p_values, dtype=float)
    if len(p) == 0:
        return AdjustedPValues([])
    if not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        bad = p[~(np.isfinite(p) & (p >= 0) & (p <= 1))][0]
        raise InvalidPValueError(f"p-value out of [0, 1]: {bad}")
    adjusted = sp_stats.false_discovery_control(p, method="by")
    return AdjustedPValues([float(v) for v in np.clip(adjusted, 0.0, 1.0)])


def percentile(sample: Sequence[float], q: float) -> float:
    """Percentile with linear interpolation between order statistics."""
    sample = np.asarray(sample, dtype=float)
    if len(sample) == 0:
        raise EmptySampleError("percentile of an empty sample")
    if not 0 <= q <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {q}")
    return float(np.percentile(sample, q, method="linear"))


def partition_by_threshold(
    paired: PairedSeries, threshold: float
) -> tuple[np.ndarray, np.ndarray]:
    """Split the error values between windows with a neutron mean above the threshold and the rest."""
    high = paired.neutron > threshold
    return paired.errors[high], paired.errors[~high]


def chi_square_uniformity(profile: Sequence[float]) -> UniformityResult:
    """
    Chi-square goodness of fit of a histogram against the uniform distribution.

    Used on hour-of-day profiles: a flat profile of the cosmic ray intensity
    next to a peaked error profile points at a non cosmic-ray cause.
    """
    observed = np.asarray(profile, dtype=float)
    if len(observed) < 2 or observed.sum() <= 0:
        return UniformityResult(TestStatus.TOO_FEW_POINTS)
    result = sp_stats.chisquare(observed)
    return UniformityResult(
        TestStatus.OK,
        statistic=float(result.statistic),
        p_raw=float(np.clip(result.pvalue, 0.0, 1.0)),
        dof=len(observed) - 1,
    )
