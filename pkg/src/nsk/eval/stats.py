"""Two-group statistics: Cohen's d, Welch's t-test, t-test power and the
distribution functions they rest on."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError, DegenerateVariance


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def normal_ppf(p: float) -> float:
    """Inverse normal CDF by bisection-safeguarded Newton on ``normal_cdf``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = -40.0, 40.0
    x = 0.0
    for _ in range(200):
        f = normal_cdf(x) - p
        if abs(f) < 1e-16:
            break
        if f > 0:
            hi = x
        else:
            lo = x
        dens = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        step = x - f / dens if dens > 0 else (lo + hi) / 2
        x = step if lo < step < hi else (lo + hi) / 2
    return x


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    if x == 0 or x == 1:
        return float(x)
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1) / (a + b + 2):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t."""
    if math.isinf(df):
        return normal_sf(t)
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return 1.0 - t_sf(t, df)


def t_ppf(p: float, df: float) -> float:
    """Quantile of Student's t by bisection on ``t_cdf``."""
    lo, hi = -1e3, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)


def _groups(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise DataError("each group needs at least two values")
    return a, b


def cohens_d(group_a, group_b) -> float:
    """Mean difference over the pooled (n-1 weighted) sample SD."""
    a, b = _groups(group_a, group_b)
    na, nb = a.size, b.size
    pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    if pooled <= 0:
        raise DegenerateVariance("pooled standard deviation is zero")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


def welch_t(group_a, group_b) -> tuple[float, float, float]:
    """Welch's t statistic, Satterthwaite df and two-sided p-value."""
    a, b = _groups(group_a, group_b)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb <= 0:
        raise DegenerateVariance("both groups have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = min(1.0, 2.0 * t_sf(abs(t), df))
    return float(t), float(df), float(p)


def power_two_sample(d: float, n_a: int, n_b: int, alpha: float = 0.05) -> float:
    """Power of the two-sided pooled two-sample t-test for effect size ``d``.

    Uses the noncentral t distribution with df = n_a + n_b - 2 and
    noncentrality d * sqrt(n_a n_b / (n_a + n_b)).
    """
    from scipy import stats

    if n_a < 2 or n_b < 2:
        raise DataError("power needs at least two subjects per group")
    df = n_a + n_b - 2
    ncp = d * math.sqrt(n_a * n_b / (n_a + n_b))
    crit = t_ppf(1 - alpha / 2, df)
    upper = stats.nct.sf(crit, df, abs(ncp))
    lower = stats.nct.sf(crit, df, -abs(ncp))
    # far tails can come back as nan; they are negligibly small there
    power = (0.0 if math.isnan(upper) else upper) + (0.0 if math.isnan(lower) else lower)
    return float(min(max(power, 0.0), 1.0))


def power_monte_carlo(d: float, n_a: int, n_b: int, alpha: float = 0.05,
                      n_sims: int = 100_000, seed=0) -> float:
    """Simulated rejection rate of the pooled t-test under N(d,1) vs N(0,1)."""
    rng = np.random.default_rng(seed)
    df = n_a + n_b - 2
    crit = t_ppf(1 - alpha / 2, df)
    rejections = 0
    chunk = 20_000
    done = 0
    while done < n_sims:
        m = min(chunk, n_sims - done)
        a = rng.standard_normal((m, n_a)) + d
        b = rng.standard_normal((m, n_b))
        sp2 = ((n_a - 1) * a.var(axis=1, ddof=1) + (n_b - 1) * b.var(axis=1, ddof=1)) / df
        t = (a.mean(axis=1) - b.mean(axis=1)) / np.sqrt(sp2 * (1 / n_a + 1 / n_b))
        rejections += int(np.sum(np.abs(t) > crit))
        done += m
    return rejections / n_sims
