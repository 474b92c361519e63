"""Finite-n diagnostics for the Gaussian CLT via independent block sums.

All estimators work with row-wise iid block sums ``S_{r_n}`` simulated from
fresh stationary paths of length ``r_n``; the incomplete last block is
dropped (``k_n = floor(n / r_n)``).  :func:`mixing_cf_check` measures how far
the dependent full-path sum is from this idealization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .models import SRE_KINDS, centering_constant, simulate_paths
from .streams import Streams, as_streams, map_replicates
from .tails import EmpiricalTail

DEFAULT_EPS_GRID = (0.25, 0.5, 1.0)
DEFAULT_DELTA = 0.1
MIN_HITS = 30
MARGINAL_DRAWS = 10**7
MARGINAL_PATH_LENGTH = 1000
RULES = ("LogPower", "RemarkRem4x", "Manual")


# ---------------------------------------------------------------------------
# block schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockScheme:
    n: int
    r_n: int
    rule: str = "Manual"
    params: tuple = ()

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown block rule {self.rule!r}")
        if not 1 <= self.r_n <= self.n:
            raise ConfigurationError(f"block length r_n = {self.r_n} must lie in [1, n = {self.n}]")

    @property
    def k_n(self) -> int:
        return self.n // self.r_n

    def to_dict(self):
        return {"n": self.n, "r_n": self.r_n, "k_n": self.k_n, "rule": self.rule, **dict(self.params)}


def choose_block_scheme(model_kind: str, n: int, params: Optional[dict] = None) -> BlockScheme:
    """Block length from the log-power rule (``m``-dependent, linear, SV) or
    ``ceil((log n)^((1 - eps)/delta))`` for the recurrence equations.

    ``params`` may carry ``eps`` (default 0.5), ``delta`` (default 0.5),
    ``m`` (dependence window, default 0), ``rule`` to force a rule and
    ``r_n`` for the manual rule.  The result is clipped to
    ``[m + 1, n / 10]`` with the lower end taking precedence.
    """
    params = dict(params or {})
    if n < 100:
        raise ConfigurationError(f"choose_block_scheme requires n >= 100, got {n}")
    eps = float(params.get("eps", 0.5))
    delta = float(params.get("delta", 0.5))
    m = int(params.get("m", 0))
    rule = params.get("rule") or ("RemarkRem4x" if model_kind in SRE_KINDS else "LogPower")
    if rule == "Manual":
        r = int(params["r_n"])
        used = (("r_n", r),)
    elif rule == "LogPower":
        r = math.ceil(math.log(n) ** (1.0 + eps))
        used = (("eps", eps),)
    elif rule == "RemarkRem4x":
        r = math.ceil(math.log(n) ** ((1.0 - eps) / delta))
        used = (("eps", eps), ("delta", delta))
    else:
        raise ConfigurationError(f"unknown block rule {rule!r}")
    if rule != "Manual":
        r = max(min(r, n // 10), m + 1)
    return BlockScheme(n, r, rule, used)


def dependence_window(model) -> int:
    if model.kind in ("FiniteMA", "StochVol"):
        return model.m
    if model.kind == "LinearProcess":
        return int(model.m_trunc)
    return 0


# ---------------------------------------------------------------------------
# block sums
# ---------------------------------------------------------------------------


def simulate_sums(model, length: int, replicates: int, streams: Streams, centering: float = 0.0, threads=None):
    """``S_length - centering`` for independent stationary paths."""

    def sums(rng, size):
        return simulate_paths(model, length, rng, size).sum(axis=1) - centering

    return map_replicates(sums, replicates, length, streams, threads)


def stationary_empirical_tail(model, draws: int, streams: Streams, threads=None, path_length: int = MARGINAL_PATH_LENGTH) -> EmpiricalTail:
    """Empirical marginal tail from ``draws`` values pooled over stationary paths."""
    length = min(path_length, draws)
    paths = -(-draws // length)

    def values(rng, size):
        return simulate_paths(model, length, rng, size)

    x = map_replicates(values, paths, length, streams, threads)
    return EmpiricalTail(x.ravel()[:draws])


def simulate_sums_with_marginals(model, length: int, replicates: int, streams: Streams, centering: float = 0.0, threads=None):
    """Like :func:`simulate_sums` but also returns every path value, shape ``(replicates, length)``."""

    def both(rng, size):
        x = simulate_paths(model, length, rng, size)
        return np.column_stack([x.sum(axis=1) - centering, x])

    out = map_replicates(both, replicates, length, streams, threads)
    return out[:, 0], out[:, 1:]


# ---------------------------------------------------------------------------
# Petrov conditions
# ---------------------------------------------------------------------------


@dataclass
class PetrovReport:
    n: int
    r_n: int
    k_n: int
    a_n: float
    replicates: int
    cond_a: float
    cond_a_stderr: float
    cond_b: dict
    cond_b_stderr: dict
    cond_c: float
    cond_c_stderr: float

    def cond_b_pairwise_z(self) -> dict:
        """``|b(e1) - b(e2)| / sqrt(se1^2 + se2^2)`` over all pairs of the eps grid."""
        eps = sorted(self.cond_b)
        out = {}
        for i, e1 in enumerate(eps):
            for e2 in eps[i + 1 :]:
                se = math.hypot(self.cond_b_stderr[e1], self.cond_b_stderr[e2])
                diff = abs(self.cond_b[e1] - self.cond_b[e2])
                out[(e1, e2)] = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        return out

    def to_dict(self):
        return {
            "n": self.n,
            "r_n": self.r_n,
            "k_n": self.k_n,
            "a_n": self.a_n,
            "replicates": self.replicates,
            "cond_a": self.cond_a,
            "cond_a_stderr": self.cond_a_stderr,
            "cond_b": {str(k): v for k, v in self.cond_b.items()},
            "cond_b_stderr": {str(k): v for k, v in self.cond_b_stderr.items()},
            "cond_c": self.cond_c,
            "cond_c_stderr": self.cond_c_stderr,
        }


def petrov_statistics(y: np.ndarray, k: int, eps_grid: Sequence[float]) -> np.ndarray:
    """Plug-in estimates ``[cond_a, cond_b(eps_1), ..., cond_c]`` from ``y = S_r / a_n``."""
    ay = np.abs(y)
    out = [k * np.mean(ay > 1.0)]
    for eps in eps_grid:
        out.append(k * np.var(np.where(ay <= eps, y, 0.0), ddof=1))
    out.append(k * np.mean(np.where(ay <= 1.0, y, 0.0)))
    return np.asarray(out)


def bootstrap_stderr(y, statistic, rng: np.random.Generator, resamples: int = 200) -> np.ndarray:
    stats = np.empty((resamples, np.size(statistic(y[:2]))))
    for b in range(resamples):
        stats[b] = statistic(y[rng.integers(0, y.size, y.size)])
    return stats.std(axis=0, ddof=1)


def petrov_conditions(
    model,
    scheme: BlockScheme,
    a_n: float,
    d_rn: Optional[float] = None,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    replicates: int = 10**4,
    rng_stream=None,
    bootstrap: int = 200,
    threads=None,
) -> PetrovReport:
    """Monte Carlo estimates of the three Petrov conditions.

    ``replicates`` independent block sums ``S_{r_n} - d_{r_n}`` are scaled by
    ``a_n``; standard errors come from a nonparametric bootstrap with
    ``bootstrap`` resamples.  ``d_rn`` defaults to ``r_n E[X]``.
    """
    if not a_n > 0:
        raise ValueError(f"a_n must be positive, got {a_n}")
    if replicates < 1000:
        raise ValueError("petrov_conditions needs replicates >= 1000")
    streams = as_streams(rng_stream)
    if d_rn is None:
        d_rn = centering_constant(model, scheme.r_n)
    eps_grid = tuple(float(e) for e in eps_grid)
    y = simulate_sums(model, scheme.r_n, replicates, streams.child("blocks"), d_rn, threads) / a_n
    k = scheme.k_n

    def stat(v):
        return petrov_statistics(v, k, eps_grid)

    est = stat(y)
    se = bootstrap_stderr(y, stat, streams.child("bootstrap").generator(), bootstrap)
    ne = len(eps_grid)
    return PetrovReport(
        n=scheme.n,
        r_n=scheme.r_n,
        k_n=k,
        a_n=float(a_n),
        replicates=replicates,
        cond_a=float(est[0]),
        cond_a_stderr=float(se[0]),
        cond_b={e: float(est[1 + i]) for i, e in enumerate(eps_grid)},
        cond_b_stderr={e: float(se[1 + i]) for i, e in enumerate(eps_grid)},
        cond_c=float(est[1 + ne]),
        cond_c_stderr=float(se[1 + ne]),
    )


# ---------------------------------------------------------------------------
# large deviation ratios
# ---------------------------------------------------------------------------


@dataclass
class LDScanReport:
    r_n: int
    replicates: int
    c0_expected: float
    y: np.ndarray
    ratio: np.ndarray
    stderr: np.ndarray
    hits: np.ndarray
    region_lower: float
    in_region: np.ndarray

    @property
    def sup_deviation(self) -> float:
        return float(np.max(np.abs(self.ratio - self.c0_expected)))

    def rows(self):
        for i in range(self.y.size):
            yield {
                "y": float(self.y[i]),
                "ratio": float(self.ratio[i]),
                "stderr": float(self.stderr[i]),
                "hits": int(self.hits[i]),
                "in_paper_region": bool(self.in_region[i]),
            }

    def to_dict(self):
        return {
            "r_n": self.r_n,
            "replicates": self.replicates,
            "c0_expected": self.c0_expected,
            "sup_deviation": self.sup_deviation,
            "region_lower": self.region_lower,
            "points": list(self.rows()),
        }


def paper_region_lower(model, r_n: int, delta: float = DEFAULT_DELTA, M: float = 2.5) -> float:
    """Lower end of the ``y``-region where the large-deviation ratio is claimed.

    Kesten-Goldie: ``sqrt(r) (log r)^M`` with ``M > 2``; Grincevicius-Grey:
    ``r^(0.5 + delta)``; otherwise ``r^((1 + delta)/2)``.
    """
    if model.kind == "SREKestenGoldie":
        return math.sqrt(r_n) * max(math.log(r_n), 1.0) ** M
    if model.kind == "SREGrey":
        return r_n ** (0.5 + delta)
    return r_n ** ((1.0 + delta) / 2.0)


def ld_ratio_scan(
    model,
    r_n: int,
    y_grid,
    tail,
    c0_expected: float,
    d_rn: Optional[float] = None,
    replicates: int = 10**5,
    rng_stream=None,
    tail_stderr=None,
    quantile_levels=(1e-2, 1e-3, 1e-4),
    min_hits: int = MIN_HITS,
    marginal_draws: int = MARGINAL_DRAWS,
    threads=None,
) -> LDScanReport:
    """Ratios ``P(|S_r - d_r| > y) / (r P(|X| > y))`` on a grid of ``y``.

    ``y_grid=None`` takes the empirical block-sum quantiles at
    ``quantile_levels``.  ``tail`` supplies ``abs_tail_probability``;
    ``tail_stderr(y)`` optionally gives its standard error, which is
    propagated into the ratio standard error.  ``tail=None`` uses an
    empirical tail of ``marginal_draws`` stationary values on a separate
    stream; for ``r_n = 1`` the block values themselves are used, so the
    ratio of a centered model is then identically 1.  Grid points with fewer than
    ``min_hits`` exceedances are dropped.
    """
    streams = as_streams(rng_stream)
    if d_rn is None:
        d_rn = centering_constant(model, r_n)
    if tail is None and r_n == 1:
        s, marg = simulate_sums_with_marginals(model, r_n, replicates, streams.child("blocks"), d_rn, threads)
        tail = EmpiricalTail(marg)
        tail_stderr = tail.abs_tail_probability_stderr
    else:
        s = simulate_sums(model, r_n, replicates, streams.child("blocks"), d_rn, threads)
        if tail is None:
            tail = stationary_empirical_tail(model, marginal_draws, streams.child("marginal"), threads)
            tail_stderr = tail.abs_tail_probability_stderr
    s = np.abs(s)
    if y_grid is None:
        levels = [q for q in quantile_levels if q * replicates >= min_hits]
        y = np.quantile(s, 1.0 - np.asarray(levels, dtype=float)) if levels else np.array([])
    else:
        y = np.asarray(y_grid, dtype=float)
    s_sorted = np.sort(s)
    hits = s.size - np.searchsorted(s_sorted, y, side="right")
    keep = (hits >= min_hits) & (np.asarray(tail.abs_tail_probability(np.maximum(y, getattr(tail, "r", 0.0))), dtype=float) > 0)
    if not np.any(keep):
        # expected hits under the target ratio
        y_min = float(np.min(y)) if y.size else float(np.max(s))
        p = max(c0_expected * r_n * float(tail.abs_tail_probability(max(y_min, getattr(tail, "r", 0.0)))), 1e-300)
        need = math.ceil(min_hits / p)
        raise ValueError(f"no reachable y in the grid; need at least {need} replicates for {min_hits} exceedances")
    y, hits = y[keep], hits[keep]
    p_hat = hits / replicates
    p_tail = np.asarray(tail.abs_tail_probability(y), dtype=float)
    ratio = p_hat / (r_n * p_tail)
    rel_var = (1.0 - p_hat) / (replicates * p_hat)
    if tail_stderr is not None:
        rel_var = rel_var + (np.asarray(tail_stderr(y), dtype=float) / p_tail) ** 2
    stderr = ratio * np.sqrt(rel_var)
    lower = paper_region_lower(model, r_n)
    return LDScanReport(
        r_n=r_n,
        replicates=replicates,
        c0_expected=float(c0_expected),
        y=y,
        ratio=ratio,
        stderr=stderr,
        hits=hits,
        region_lower=lower,
        in_region=y >= lower,
    )


# ---------------------------------------------------------------------------
# characteristic-function mixing check
# ---------------------------------------------------------------------------


@dataclass
class MixingReport:
    n: int
    r_n: int
    k_n: int
    u: np.ndarray
    discrepancy: np.ndarray
    stderr: np.ndarray

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(self.discrepancy))

    def to_dict(self):
        return {
            "n": self.n,
            "r_n": self.r_n,
            "k_n": self.k_n,
            "max_discrepancy": self.max_discrepancy,
            "u": self.u.tolist(),
            "discrepancy": self.discrepancy.tolist(),
            "stderr": self.stderr.tolist(),
        }


def _ecf(y, u):
    return np.exp(1j * np.outer(u, y)).mean(axis=1)


def _jackknife_groups(y, u, groups):
    """Leave-one-group-out empirical characteristic functions, shape ``(G, len(u))``."""
    parts = np.array_split(y, groups)
    sums = np.stack([np.exp(1j * np.outer(u, p)).sum(axis=1) for p in parts])
    total = sums.sum(axis=0)
    counts = np.array([p.size for p in parts])
    return (total[None, :] - sums) / (y.size - counts)[:, None]


def _jk_var(vals):
    g = vals.shape[0]
    return (g - 1) / g * np.sum((vals - vals.mean(axis=0)) ** 2, axis=0)


def mixing_cf_check(
    model,
    n: int,
    scheme: BlockScheme,
    a_n: float,
    u_grid,
    replicates: int = 1000,
    rng_stream=None,
    block_replicates: Optional[int] = None,
    groups: int = 20,
    threads=None,
) -> MixingReport:
    """``|phi_{S_n/a_n}(u) - phi_{S_{r_n}/a_n}(u)^{k_n}|`` from independent replicates.

    Full paths and single blocks are simulated independently; both sums are
    centered by ``n E[X]`` and ``r_n E[X]``.  Error bars are delete-a-group
    jackknife estimates (``groups`` groups per sample) combined over the two
    independent samples.
    """
    if replicates < 1000:
        raise ValueError("mixing_cf_check needs replicates >= 1000")
    streams = as_streams(rng_stream)
    u = np.asarray(u_grid, dtype=float)
    block_replicates = block_replicates or replicates
    k = scheme.k_n
    full = simulate_sums(model, n, replicates, streams.child("full"), centering_constant(model, n), threads) / a_n
    blocks = (
        simulate_sums(model, scheme.r_n, block_replicates, streams.child("block"), centering_constant(model, scheme.r_n), threads)
        / a_n
    )
    phi_full = _ecf(full, u)
    phi_block = _ecf(blocks, u)
    disc = np.abs(phi_full - phi_block**k)
    jk_full = np.abs(_jackknife_groups(full, u, groups) - phi_block[None, :] ** k)
    jk_block = np.abs(phi_full[None, :] - _jackknife_groups(blocks, u, groups) ** k)
    stderr = np.sqrt(_jk_var(jk_full) + _jk_var(jk_block))
    return MixingReport(n, scheme.r_n, k, u, disc, stderr)


# ---------------------------------------------------------------------------
# moment growth
# ---------------------------------------------------------------------------


@dataclass
class MomentGrowthReport:
    n_grid: np.ndarray
    moments: np.ndarray
    log_stderr: np.ndarray
    gamma: float
    intercept: float
    residuals: np.ndarray
    delta: float

    def to_dict(self):
        return {
            "delta": self.delta,
            "gamma": self.gamma,
            "intercept": self.intercept,
            "n": self.n_grid.tolist(),
            "moment": self.moments.tolist(),
            "log_stderr": self.log_stderr.tolist(),
            "residuals": self.residuals.tolist(),
        }


def moment_growth(
    model,
    n_grid,
    delta: float = DEFAULT_DELTA,
    replicates: int = 1000,
    rng_stream=None,
    threads=None,
) -> MomentGrowthReport:
    """Least-squares slope of ``log E|S_n - d_n|^(2-delta)`` against ``log n``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    n_grid = np.asarray(sorted(int(n) for n in n_grid))
    if n_grid.size < 3:
        raise ValueError("moment_growth needs at least 3 grid points")
    streams = as_streams(rng_stream)
    p = 2.0 - delta
    moments, log_se = [], []
    for n in n_grid:
        s = simulate_sums(model, int(n), replicates, streams.child("n", int(n)), centering_constant(model, int(n)), threads)
        v = np.abs(s) ** p
        mean = float(v.mean())
        moments.append(mean)
        log_se.append(float(v.std(ddof=1) / math.sqrt(v.size) / mean) if mean > 0 else math.inf)
    moments = np.asarray(moments)
    x, yv = np.log(n_grid.astype(float)), np.log(moments)
    slope, intercept = np.polyfit(x, yv, 1)
    return MomentGrowthReport(
        n_grid=n_grid,
        moments=moments,
        log_stderr=np.asarray(log_se),
        gamma=float(slope),
        intercept=float(intercept),
        residuals=yv - (slope * x + intercept),
        delta=delta,
    )


def eq8a_ratio(n: int, r_n: int, gamma: float, ell_n: float, s_n: float, delta: float) -> float:
    """``n^(1/2) r_n^(gamma-1) / (ell(n) s_n^(1-delta))``; reported, not enforced."""
    return math.sqrt(n) * r_n ** (gamma - 1.0) / (ell_n * s_n ** (1.0 - delta))
