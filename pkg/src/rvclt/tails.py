"""Marginal laws with tail index 2: samplers and closed-form tail functions.

Three families are provided:

* :class:`Pareto2` -- ``P(|X| > x) = (r/x)**2`` for ``x >= r`` with tail
  weights ``p_plus``/``p_minus``.
* :class:`OscillatingDensity` -- the symmetric density
  ``c_r |x|**-3 (1 + a cos(theta0 log|x|) + b sin(theta0 log|x|))`` on
  ``|x| > r``.  Its tail is not regularly varying but the truncated second
  moment is slowly varying.
* :class:`EmpiricalTail` -- tail and truncated moments read off a sample.

All three expose the same surface: ``sample``, ``tail_probability`` (right
tail), ``abs_tail_probability``, ``truncated_second_moment`` and ``mean``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigurationError, DomainError, SamplingError

#: Proposals allowed per accepted oscillating draw before giving up.
MAX_PROPOSALS = 10**6


def _check_domain(x, r, what):
    if np.any(np.asarray(x) < r):
        raise DomainError(f"{what} requires argument >= r = {r}, got {x!r}")


def _signs(rng, size, p_plus):
    return np.where(rng.random(size) < p_plus, 1.0, -1.0)


@dataclass(frozen=True)
class Pareto2:
    """Two-sided Pareto law with tail index 2.

    Parameters
    ----------
    r : float
        Support threshold, ``|X| > r``.
    p_plus : float
        Weight of the right tail; ``p_minus = 1 - p_plus``.
    """

    r: float = 1.0
    p_plus: float = 0.5

    kind = "Pareto2"

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigurationError(f"Pareto2: r must be > 0, got {self.r}")
        if not 0.0 <= self.p_plus <= 1.0:
            raise ConfigurationError(f"Pareto2: p_plus must lie in [0, 1], got {self.p_plus}")

    @property
    def p_minus(self) -> float:
        return 1.0 - self.p_plus

    @property
    def symmetric(self) -> bool:
        return self.p_plus == 0.5

    @property
    def mean(self) -> float:
        return (self.p_plus - self.p_minus) * 2.0 * self.r

    def sample(self, rng: np.random.Generator, size=None):
        # |X| = r U^{-1/2} by inversion; 1 - U avoids a zero divisor.
        u = 1.0 - rng.random(size)
        return self.r / np.sqrt(u) * _signs(rng, size, self.p_plus)

    def abs_tail_probability(self, y):
        _check_domain(y, self.r, "abs_tail_probability")
        return (self.r / np.asarray(y, dtype=float)) ** 2

    def tail_probability(self, y):
        return self.p_plus * self.abs_tail_probability(y)

    def truncated_second_moment(self, x):
        _check_domain(x, self.r, "truncated_second_moment")
        return 2.0 * self.r**2 * np.log(np.asarray(x, dtype=float) / self.r)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r": self.r, "p_plus": self.p_plus}


@dataclass(frozen=True)
class OscillatingDensity:
    """Symmetric law with log-periodically modulated ``|x|**-3`` density.

    The right tail is ``P(X > y) = (c_r / 2) y**-2 N(y)`` with
    ``N(y) = 1 + C cos(theta0 log y) + D sin(theta0 log y)``, where
    ``C = (a + theta0 b / 2) / (1 + theta0**2 / 4)`` and
    ``D = (b - theta0 a / 2) / (1 + theta0**2 / 4)``.  Total mass one fixes
    ``c_r = r**2 / N(r)``.

    ``a = b = 0`` is accepted and gives the symmetric :class:`Pareto2` law.
    """

    a: float = 0.5
    b: float = 0.0
    theta0: float = 2.0
    r: float = 1.0
    C: float = field(init=False)
    D: float = field(init=False)
    c_r: float = field(init=False)

    kind = "OscillatingAppendixB"
    p_plus = 0.5
    symmetric = True
    mean = 0.0

    def __post_init__(self):
        if self.theta0 == 0:
            raise ConfigurationError("OscillatingDensity: theta0 must be non-zero")
        if not self.r > 0:
            raise ConfigurationError(f"OscillatingDensity: r must be > 0, got {self.r}")
        if self.a**2 + self.b**2 > 1.0:
            raise ConfigurationError(
                f"OscillatingDensity: need a^2 + b^2 <= 1, got {self.a**2 + self.b**2}"
            )
        scale = 1.0 + self.theta0**2 / 4.0
        C = (self.a + self.theta0 * self.b / 2.0) / scale
        D = (self.b - self.theta0 * self.a / 2.0) / scale
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        n_r = float(self._N(self.r))
        if not n_r > 0:
            raise ConfigurationError(f"OscillatingDensity: N(r) = {n_r} must be positive")
        object.__setattr__(self, "c_r", self.r**2 / n_r)

    def _N(self, y):
        phase = self.theta0 * np.log(y)
        return 1.0 + self.C * np.cos(phase) + self.D * np.sin(phase)

    def N(self, y):
        """Modulation factor ``N(y)`` of the tail, ``y >= r``."""
        _check_domain(y, self.r, "N")
        return self._N(np.asarray(y, dtype=float))

    def oscillation(self, x):
        """``a cos(theta0 log|x|) + b sin(theta0 log|x|)``."""
        phase = self.theta0 * np.log(np.abs(x))
        return self.a * np.cos(phase) + self.b * np.sin(phase)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = self.c_r * ax**-3 * (1.0 + self.oscillation(x))
        return np.where(ax > self.r, f, 0.0)

    @property
    def acceptance_rate(self) -> float:
        """Expected acceptance probability of :meth:`sample` per proposal."""
        return float(self._N(self.r)) / 2.0

    def sample(self, rng: np.random.Generator, size=None, max_proposals: int = MAX_PROPOSALS):
        """Draw by rejection from the ``|x|**-3`` envelope on ``|x| > r``.

        A proposal ``|X|`` is accepted with probability
        ``(1 + a cos(theta0 log|X|) + b sin(theta0 log|X|)) / 2``.
        """
        scalar = size is None
        total = 1 if scalar else int(np.prod(size))
        out = np.empty(total)
        todo = np.arange(total)
        rounds = 0
        while todo.size:
            rounds += 1
            if rounds > max_proposals:
                raise SamplingError(
                    f"oscillating sampler exceeded {max_proposals} proposals per draw"
                )
            k = todo.size
            prop = self.r / np.sqrt(1.0 - rng.random(k))
            keep = rng.random(k) * 2.0 < 1.0 + self.oscillation(prop)
            out[todo[keep]] = prop[keep]
            todo = todo[~keep]
        out *= _signs(rng, total, 0.5)
        if scalar:
            return float(out[0])
        return out.reshape(size)

    def tail_probability(self, y):
        _check_domain(y, self.r, "tail_probability")
        y = np.asarray(y, dtype=float)
        return self.c_r / 2.0 * y**-2 * self._N(y)

    def abs_tail_probability(self, y):
        return 2.0 * self.tail_probability(y)

    def _K_raw(self, x):
        phase = self.theta0 * np.log(x)
        c, th = self.c_r, self.theta0
        return (
            2.0 * c * np.log(x)
            + c * (2.0 * self.C / th - self.D) * np.sin(phase)
            - c * (2.0 * self.D / th + self.C) * np.cos(phase)
        )

    def truncated_second_moment(self, x):
        """``K(x) = E[X**2 1(|X| <= x)]`` in closed form, anchored at ``K(r) = 0``."""
        _check_domain(x, self.r, "truncated_second_moment")
        x = np.asarray(x, dtype=float)
        return self._K_raw(x) - self._K_raw(self.r)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "theta0": self.theta0, "r": self.r}


class EmpiricalTail:
    """Tail functions of the empirical law of a sample.

    Used for marginals without a closed form (moving averages, stochastic
    recurrence equations).  Evaluation is ``O(log N)`` per point via a sorted
    copy of ``|X|`` and cumulative sums of squares.
    """

    kind = "UserEmpirical"

    def __init__(self, sample):
        x = np.asarray(sample, dtype=float).ravel()
        if x.size == 0:
            raise ConfigurationError("EmpiricalTail: sample must be non-empty")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("EmpiricalTail: sample contains non-finite values")
        self.size = x.size
        self.mean = float(np.mean(x))
        self._pos = np.sort(x[x > 0])
        self._abs = np.sort(np.abs(x))
        self._cum_sq = np.concatenate([[0.0], np.cumsum(self._abs**2)])
        self.r = 0.0
        n_pos, n_neg = self._pos.size, int(np.count_nonzero(x < 0))
        self.p_plus = n_pos / max(n_pos + n_neg, 1)

    @property
    def symmetric(self) -> bool:
        return False

    def tail_probability(self, y):
        y = np.asarray(y, dtype=float)
        return (self._pos.size - np.searchsorted(self._pos, y, side="right")) / self.size

    def abs_tail_probability(self, y):
        y = np.asarray(y, dtype=float)
        return (self.size - np.searchsorted(self._abs, y, side="right")) / self.size

    def abs_tail_probability_stderr(self, y):
        p = self.abs_tail_probability(y)
        return np.sqrt(p * (1.0 - p) / self.size)

    def truncated_second_moment(self, x):
        idx = np.searchsorted(self._abs, np.asarray(x, dtype=float), side="right")
        return self._cum_sq[idx] / self.size

    def truncated_second_moment_stderr(self, x):
        """Monte Carlo standard error of :meth:`truncated_second_moment`."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._abs, x, side="right")
        m2 = self._cum_sq[idx] / self.size
        # fourth moment via a direct pass; only used for reporting
        m4 = np.array([np.sum(self._abs[:i] ** 4) for i in np.atleast_1d(idx)]) / self.size
        return np.sqrt(np.maximum(m4.reshape(np.shape(m2)) - m2**2, 0.0) / self.size)

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError("EmpiricalTail carries no sign information for resampling")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size}


class AsymptoticTail:
    """``P(|X| > y) ~ factor * base(y)`` or, without a base, ``factor / y**2``.

    Stands in for a marginal tail known only through its asymptotic
    constant (stochastic recurrence equations), capped at 1.
    """

    kind = "Asymptotic"

    def __init__(self, factor: float, base=None):
        if not factor > 0:
            raise ConfigurationError(f"AsymptoticTail: factor must be positive, got {factor}")
        self.factor = float(factor)
        self.base = base
        self.r = 0.0 if base is None else getattr(base, "r", 0.0)

    def abs_tail_probability(self, y):
        y = np.asarray(y, dtype=float)
        if self.base is None:
            with np.errstate(divide="ignore"):
                p = self.factor / (y * y)
        else:
            p = self.factor * np.asarray(self.base.abs_tail_probability(np.maximum(y, self.r)), dtype=float)
        return np.minimum(p, 1.0)


TailSpec = Union[Pareto2, OscillatingDensity, EmpiricalTail]


def sample_pareto2(rng: np.random.Generator, spec: Pareto2, size=None):
    if not isinstance(spec, Pareto2):
        raise ConfigurationError(f"sample_pareto2 needs a Pareto2 spec, got {type(spec).__name__}")
    return spec.sample(rng, size)


def sample_oscillating(rng: np.random.Generator, d: OscillatingDensity, size=None):
    return d.sample(rng, size)


def tail_probability(spec: TailSpec, y):
    """Right tail ``P(X > y)``."""
    return spec.tail_probability(y)


def truncated_second_moment(spec: TailSpec, x):
    """``K(x) = E[X**2 1(|X| <= x)]``."""
    return spec.truncated_second_moment(x)


def tail_from_dict(d: dict) -> TailSpec:
    kind = d.get("kind")
    params = {k: v for k, v in d.items() if k != "kind"}
    try:
        if kind == Pareto2.kind:
            return Pareto2(**params)
        if kind == OscillatingDensity.kind:
            return OscillatingDensity(**params)
    except TypeError as exc:
        raise ConfigurationError(f"tail '{kind}': {exc}") from None
    raise ConfigurationError(f"unknown tail kind {kind!r}")


def log_grid(lo: float, hi: float, num: int) -> np.ndarray:
    return np.exp(np.linspace(math.log(lo), math.log(hi), num))
