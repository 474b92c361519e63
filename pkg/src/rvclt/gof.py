"""Normalized, studentized and multiplier sums and their goodness of fit."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .models import centering_constant, simulate_paths
from .streams import as_streams, map_replicates

STATISTIC_KINDS = ("NormalizedSum", "StudentizedSum", "MultiplierSum", "QuadraticVn2")
KOLMOGOROV_TERMS = 100
QQ_LEVELS = np.arange(1, 200) / 200.0


@dataclass
class SumSample:
    values: np.ndarray
    statistic_kind: str
    n: int
    normalization: float = 1.0
    centering: float = 0.0
    seed: str = ""
    excluded: int = 0

    def __post_init__(self):
        if self.statistic_kind not in STATISTIC_KINDS:
            raise ValueError(f"unknown statistic kind {self.statistic_kind!r}")
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("SumSample values must be finite")

    @property
    def size(self) -> int:
        return self.values.size

    def variance(self) -> float:
        return float(np.var(self.values, ddof=1))

    def header(self) -> dict:
        return {
            "statistic_kind": self.statistic_kind,
            "n": self.n,
            "a_n": f"{self.normalization:.17g}",
            "d_n": f"{self.centering:.17g}",
            "seed": self.seed,
        }

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            _write_meta(fh, self.header())
            fh.write("replicate,value\n")
            for i, v in enumerate(self.values):
                fh.write(f"{i},{v:.17g}\n")


def _write_meta(fh, meta: dict):
    fh.write("# rvclt-schema v1\n")
    fh.write("# " + ",".join(f"{k}={v}" for k, v in meta.items()) + "\n")


@dataclass(frozen=True)
class GoFReport:
    ks_statistic: float
    ks_pvalue: float
    ad_statistic: float
    target_sigma2: float
    sample_size: int

    def to_dict(self):
        return {
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "ad_statistic": self.ad_statistic,
            "target_sigma2": self.target_sigma2,
            "sample_size": self.sample_size,
        }


def kolmogorov_sf(lam: float, terms: int = KOLMOGOROV_TERMS) -> float:
    """``P(K > lam)`` for the Kolmogorov distribution.

    Uses ``2 sum_k (-1)^(k-1) exp(-2 k^2 lam^2)`` for ``lam >= 0.3`` and the
    Jacobi theta form ``1 - sqrt(2 pi)/lam sum_k exp(-(2k-1)^2 pi^2 / (8 lam^2))``
    below, so that ``terms`` terms keep the truncation error under 1e-10.
    """
    if lam <= 0:
        return 1.0
    k = np.arange(1, terms + 1, dtype=float)
    if lam >= 0.3:
        val = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam))
    else:
        val = 1.0 - math.sqrt(2.0 * math.pi) / lam * np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * lam * lam)))
    return float(min(max(val, 0.0), 1.0))


def ks_statistic(values, sigma2: float) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    nobs = x.size
    cdf = special.ndtr(x / math.sqrt(sigma2))
    i = np.arange(1, nobs + 1)
    d_plus = np.max(i / nobs - cdf)
    d_minus = np.max(cdf - (i - 1) / nobs)
    return float(max(d_plus, d_minus))


def ad_statistic(values, sigma2: float) -> float:
    """Anderson-Darling statistic against the fully specified ``N(0, sigma2)``."""
    z = np.sort(np.asarray(values, dtype=float)) / math.sqrt(sigma2)
    nobs = z.size
    i = np.arange(1, nobs + 1)
    log_f = special.log_ndtr(z)
    log_sf = special.log_ndtr(-z[::-1])
    return float(-nobs - np.sum((2 * i - 1) * (log_f + log_sf)) / nobs)


def ks_test(sample, sigma2: float) -> GoFReport:
    """One-sample KS (asymptotic Kolmogorov p-value) and AD against ``N(0, sigma2)``."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    values = sample.values if isinstance(sample, SumSample) else np.asarray(sample, dtype=float)
    if values.size == 0:
        raise ValueError("ks_test needs a non-empty sample")
    d = ks_statistic(values, sigma2)
    return GoFReport(
        ks_statistic=d,
        ks_pvalue=kolmogorov_sf(math.sqrt(values.size) * d),
        ad_statistic=ad_statistic(values, sigma2),
        target_sigma2=float(sigma2),
        sample_size=int(values.size),
    )


def normalized_sums(model, n: int, a_n: float, d_n: float | None = None, replicates: int = 1000, rng_stream=None, threads=None) -> SumSample:
    """``(S_n - d_n) / a_n`` over independent stationary paths."""
    if replicates < 100:
        raise ValueError("normalized_sums needs replicates >= 100")
    streams = as_streams(rng_stream)
    if d_n is None:
        d_n = centering_constant(model, n)

    def stat(rng, size):
        return (simulate_paths(model, n, rng, size).sum(axis=1) - d_n) / a_n

    vals = map_replicates(stat, replicates, n, streams, threads)
    return SumSample(vals, "NormalizedSum", n, float(a_n), float(d_n), streams.stream_id)


def studentized_sums(model, n: int, replicates: int = 1000, rng_stream=None, threads=None) -> SumSample:
    """``S_n / V_n`` with ``V_n = (sum X_t^2)^(1/2)``; replicates with ``V_n = 0`` are dropped."""
    if replicates < 100:
        raise ValueError("studentized_sums needs replicates >= 100")
    streams = as_streams(rng_stream)

    def stat(rng, size):
        x = simulate_paths(model, n, rng, size)
        return np.stack([x.sum(axis=1), np.sqrt(np.sum(x * x, axis=1))], axis=1)

    sv = map_replicates(stat, replicates, n, streams, threads)
    ok = sv[:, 1] > 0
    excluded = int(np.count_nonzero(~ok))
    if excluded:
        warnings.warn(f"studentized_sums: excluded {excluded} replicate(s) with V_n = 0", RuntimeWarning, stacklevel=2)
    out = SumSample(sv[ok, 0] / sv[ok, 1], "StudentizedSum", n, 1.0, 0.0, streams.stream_id)
    out.excluded = excluded
    return out


def multiplier_check(model, n: int, a_n: float, replicates: int = 1000, rng_stream=None, threads=None) -> dict:
    """``V_n^2 / a_n^2`` and ``sum X_t N_t / a_n`` from the same paths.

    ``N_t`` are iid standard normal multipliers drawn after each chunk of
    paths, independent of them.
    """
    if replicates < 100:
        raise ValueError("multiplier_check needs replicates >= 100")
    streams = as_streams(rng_stream)

    def stat(rng, size):
        x = simulate_paths(model, n, rng, size)
        mult = rng.standard_normal(x.shape)
        return np.stack([np.sum(x * x, axis=1) / a_n**2, np.sum(x * mult, axis=1) / a_n], axis=1)

    v = map_replicates(stat, replicates, n, streams, threads)
    sid = streams.stream_id
    return {
        "vn2_sample": SumSample(v[:, 0], "QuadraticVn2", n, float(a_n), 0.0, sid),
        "multiplier_sample": SumSample(v[:, 1], "MultiplierSum", n, float(a_n), 0.0, sid),
    }


def qq_export(sample, sigma2: float = 1.0, levels=QQ_LEVELS) -> np.ndarray:
    """Rows ``(level, theoretical quantile, empirical quantile)`` at 0.5%, 1%, ..., 99.5%."""
    values = sample.values if isinstance(sample, SumSample) else np.asarray(sample, dtype=float)
    if values.size == 0:
        raise ValueError("qq_export needs a non-empty sample")
    levels = np.asarray(levels, dtype=float)
    theo = math.sqrt(sigma2) * special.ndtri(levels)
    emp = np.quantile(values, levels)
    return np.column_stack([levels, theo, emp])


def write_qq_csv(table: np.ndarray, file, meta: dict) -> None:
    with open(file, "w", newline="") as fh:
        _write_meta(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "theoretical", "empirical"])
        for row in table:
            w.writerow([f"{v:.17g}" for v in row])
