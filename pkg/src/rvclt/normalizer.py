"""Normalizing sequences ``a_n`` for sums with tail index 2 and infinite variance.

``a_n`` is the root of

    h(a) = n P(|X| > a) + (n / a**2) K(a) - 1,    K(a) = E[X**2 1(|X| <= a)],

which is decreasing in ``a``.  We bracket the root geometrically and bisect.
Closed-form shortcuts are provided for the Kesten-Goldie recurrence
(``sqrt(c_inf n log n)``) and stochastic volatility
(``sqrt(E[sigma_0^2]) a_n^Z``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, ConfigurationError
from .tails import EmpiricalTail

MIN_N = 10
RESIDUAL_TOL = 1e-10
MAX_DOUBLINGS = 200

SOURCES = ("Eq3Exact", "Eq3aFixedPoint", "ClosedFormKG", "ClosedFormSV", "EmpiricalK")


def defining_function(tail, n: float, a: float) -> float:
    """``h(a)``; below the support threshold ``P(|X|>a) = 1`` and ``K(a) = 0``."""
    if a <= getattr(tail, "r", 0.0):
        return n - 1.0
    p = float(tail.abs_tail_probability(a))
    k = float(tail.truncated_second_moment(a))
    return n * p + n / (a * a) * k - 1.0


def solve_a_n(tail, n: int, eps0: float = 1.0, M0: float = 1.0) -> float:
    """Root of ``h`` by bisection on a geometrically expanded bracket.

    The initial bracket is ``[sqrt(n) eps0, n M0]``; the lower end is halved
    while ``h <= 0`` and the upper end doubled while ``h >= 0``.

    Raises
    ------
    ValueError
        If ``n < 10``.
    BracketError
        If no sign change is found within 200 doublings.
    """
    if n < MIN_N:
        raise ValueError(f"solve_a_n requires n >= {MIN_N}, got {n}")
    n = float(n)
    lo, hi = math.sqrt(n) * eps0, n * M0
    for _ in range(MAX_DOUBLINGS):
        if defining_function(tail, n, lo) > 0:
            break
        lo /= 2.0
    else:
        raise BracketError("could not find a lower bracket with h > 0; is the tail misconfigured?")
    for _ in range(MAX_DOUBLINGS):
        if defining_function(tail, n, hi) < 0:
            break
        hi *= 2.0
    else:
        raise BracketError("could not find an upper bracket with h < 0; is K increasing?")

    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if defining_function(tail, n, mid) > 0:
            lo = mid
        else:
            hi = mid
    # for a continuous h both ends carry residuals at rounding level
    r_lo, r_hi = defining_function(tail, n, lo), defining_function(tail, n, hi)
    return lo if abs(r_lo) <= abs(r_hi) else hi


def solve_a_n_truncated(tail, n: int) -> float:
    """Root of ``a**2 = n K(a)``, the variant that drops the tail term.

    Asymptotically equivalent to :func:`solve_a_n` in the infinite-variance
    case since ``P(|X| > x) = o(x**-2 K(x))``.
    """
    if n < MIN_N:
        raise ValueError(f"solve_a_n_truncated requires n >= {MIN_N}, got {n}")
    r = max(getattr(tail, "r", 0.0), 1e-300)

    def g(a):
        return n * float(tail.truncated_second_moment(a)) / (a * a) - 1.0

    lo = max(r * (1.0 + 1e-12), 1e-300)
    # K(r) = 0 so g(lo) < 0 just above r; move up until K has accumulated mass
    hi = max(math.sqrt(n), 2.0 * lo)
    for _ in range(MAX_DOUBLINGS):
        if g(hi) > 0:
            break
        hi *= 2.0
    else:
        raise BracketError("a**2 = n K(a) has no root above the support threshold")
    lo = hi
    for _ in range(MAX_DOUBLINGS):
        lo *= 2.0
        if g(lo) < 0:
            break
    else:
        raise BracketError("K(a)/a**2 does not decay; is the tail misconfigured?")
    lo, hi = hi, lo  # g(lo) > 0 > g(hi)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid


def residual(tail, n: int, a: float) -> float:
    return abs(defining_function(tail, float(n), a))


def empirical_K(sample, x) -> float:
    """``(1/N) sum X_i**2 1(|X_i| <= x)``."""
    s = np.asarray(sample, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empirical_K needs a non-empty sample")
    return float(np.sum(np.where(np.abs(s) <= x, s * s, 0.0)) / s.size)


def closed_form_a_n(model, n: int, c_infinity: float | None = None) -> float:
    """Closed-form normalization for the Kesten-Goldie SRE or stochastic volatility.

    Kesten-Goldie: ``sqrt(c_inf n log n)``; ``c_infinity`` defaults to the
    value from :func:`rvclt.variance.kg_constants`.
    Stochastic volatility: ``sqrt(E[sigma_0^2]) * solve_a_n(noise, n)``.
    """
    kind = getattr(model, "kind", None)
    if kind == "SREKestenGoldie":
        if c_infinity is None:
            from .variance import kg_constants

            c_infinity = kg_constants(model.A, model.B).c_infinity
        return math.sqrt(c_infinity * n * math.log(n))
    if kind == "StochVol":
        return math.sqrt(model.volatility_second_moment) * solve_a_n(model.noise, n)
    raise ConfigurationError(f"closed_form_a_n does not support model variant {kind!r}")


@dataclass
class NormalizingSequence:
    """``n -> a_n`` together with ``ell(n) = a_n / sqrt(n)`` and residuals."""

    source: str
    values: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    @property
    def ell(self) -> dict:
        return {n: a / math.sqrt(n) for n, a in self.values.items()}

    def rows(self):
        for n in sorted(self.values):
            a = self.values[n]
            yield n, a, a / math.sqrt(n), self.residuals.get(n, float("nan")), self.source

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            fh.write("# rvclt-schema v1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "a_n", "ell_n", "residual", "source"])
            for n, a, ell, res, src in self.rows():
                w.writerow([n, f"{a:.17g}", f"{ell:.17g}", f"{res:.17g}", src])


def normalizing_sequence(tail, ns, truncated: bool = False) -> NormalizingSequence:
    """Solve for ``a_n`` at every ``n`` in ``ns``.

    ``truncated=True`` uses :func:`solve_a_n_truncated` (source
    ``Eq3aFixedPoint``); residuals are always those of the full equation.
    """
    if isinstance(tail, EmpiricalTail):
        source = "EmpiricalK"
    else:
        source = "Eq3aFixedPoint" if truncated else "Eq3Exact"
    seq = NormalizingSequence(source)
    for n in ns:
        a = solve_a_n_truncated(tail, n) if truncated else solve_a_n(tail, n)
        seq.values[int(n)] = a
        seq.residuals[int(n)] = residual(tail, n, a)
        if isinstance(tail, EmpiricalTail):
            seq.stderr[int(n)] = empirical_a_n_stderr(tail, n, a)
    return seq


def empirical_a_n_stderr(tail: EmpiricalTail, n: int, a: float) -> float:
    """Delta-method standard error of an ``a_n`` solved from an empirical tail.

    With ``a**2 ~ n (a**2 P(|X|>a) + K(a)) =: n G(a)`` the sampling error of
    ``G`` propagates as ``da/a ~ dG / (2 G)``.
    """
    x = np.abs(np.asarray(tail._abs))
    g = np.minimum(x, a) ** 2
    mean = g.mean()
    se = g.std(ddof=1) / math.sqrt(g.size)
    return a * se / (2.0 * mean)


def closed_form_sequence(model, ns) -> NormalizingSequence:
    kind = getattr(model, "kind", None)
    source = {"SREKestenGoldie": "ClosedFormKG", "StochVol": "ClosedFormSV"}.get(kind)
    if source is None:
        raise ConfigurationError(f"no closed-form normalization for {kind!r}")
    seq = NormalizingSequence(source)
    for n in ns:
        seq.values[int(n)] = closed_form_a_n(model, n)
    return seq
