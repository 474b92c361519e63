"""Asymptotic variances and tail constants.

The m-dependent variance is

    sigma^2 = E[(Theta_0 + ... + Theta_m)^2 1(Theta_{-1} = ... = Theta_{-m} = 0)]

over the spectral tail process ``Theta``.  It is evaluated by exact
enumeration when the spectral law has finite support (at most
``ENUMERATION_LIMIT`` atoms) and by Monte Carlo otherwise.  Closed forms are
given for linear processes, stochastic volatility and the two stochastic
recurrence regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

ENUMERATION_LIMIT = 10**4
MC_DRAWS = 10**6

METHODS = ("ClosedForm", "SpectralMC", "SpectralEnumeration")
CONVENTIONS = ("PaperAn", "NoiseAnZ")


@dataclass(frozen=True)
class VarianceReport:
    sigma2: float
    method: str
    mc_stderr: float = 0.0
    normalization_convention: str = "PaperAn"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.normalization_convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.normalization_convention!r}")
        if not (self.sigma2 >= 0 and self.mc_stderr >= 0):
            raise ValueError("sigma2 and mc_stderr must be non-negative")

    def to_dict(self):
        return {
            "sigma2": self.sigma2,
            "method": self.method,
            "mc_stderr": self.mc_stderr,
            "normalization_convention": self.normalization_convention,
        }


class SpectralTailLaw:
    """Law of ``(Theta_{-m}, ..., Theta_m)``.

    Either finite support (``atoms`` of shape ``(K, 2m+1)`` with ``probs``)
    or a ``sampler(rng, size) -> (size, 2m+1)`` array.  Column ``m`` holds
    ``Theta_0``.
    """

    def __init__(self, m: int, atoms=None, probs=None, sampler: Optional[Callable] = None):
        self.m = int(m)
        if atoms is None and sampler is None:
            raise ValueError("SpectralTailLaw needs atoms or a sampler")
        self.atoms = None if atoms is None else np.asarray(atoms, dtype=float)
        self.probs = None if probs is None else np.asarray(probs, dtype=float)
        if self.atoms is not None:
            if self.atoms.shape != (self.probs.size, 2 * self.m + 1):
                raise ValueError("atoms must have shape (len(probs), 2m+1)")
            if abs(self.probs.sum() - 1.0) > 1e-12 or np.any(self.probs < 0):
                raise ValueError("probs must be a probability vector")
            if np.any(np.abs(np.abs(self.atoms[:, self.m]) - 1.0) > 1e-12):
                raise ValueError("|Theta_0| must equal 1 on every atom")
        self._sampler = sampler

    @property
    def support_size(self) -> Optional[int]:
        return None if self.atoms is None else self.atoms.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self._sampler is not None:
            return np.asarray(self._sampler(rng, size), dtype=float)
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return self.atoms[idx]


def linear_spectral_law(psi, p_plus: float = 0.5) -> SpectralTailLaw:
    """``Theta_t = Theta_Z psi_{J+t} / |psi_J|`` with ``P(J=j) ~ psi_j^2``."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 1 or not np.any(psi):
        raise ConfigurationError("psi must be a non-zero vector")
    m = psi.size - 1
    norm2 = float(np.sum(psi**2))
    padded = np.concatenate([np.zeros(m), psi, np.zeros(m)])
    atoms, probs = [], []
    for j in np.flatnonzero(psi):
        # Theta_t for t = -m..m reads psi_{j+t}, index shift m in `padded`
        row = padded[j : j + 2 * m + 1] / abs(psi[j])
        for sign, p in ((1.0, p_plus), (-1.0, 1.0 - p_plus)):
            if p > 0:
                atoms.append(sign * row)
                probs.append(psi[j] ** 2 / norm2 * p)
    probs = np.asarray(probs)
    return SpectralTailLaw(m, np.asarray(atoms), probs / probs.sum())


def sv_spectral_law(p_plus: float = 0.5) -> SpectralTailLaw:
    """Stochastic volatility: ``Theta_t = 0`` for ``t != 0``."""
    atoms = [[s] for s, p in ((1.0, p_plus), (-1.0, 1.0 - p_plus)) if p > 0]
    probs = [p for p in (p_plus, 1.0 - p_plus) if p > 0]
    return SpectralTailLaw(0, atoms, probs)


def _m_dependent_integrand(theta: np.ndarray, m: int) -> np.ndarray:
    past_zero = np.all(theta[:, :m] == 0.0, axis=1)
    forward = theta[:, m:].sum(axis=1)
    return np.where(past_zero, forward**2, 0.0)


def sigma2_m_dependent(
    law: SpectralTailLaw,
    rng: Optional[np.random.Generator] = None,
    draws: int = MC_DRAWS,
) -> VarianceReport:
    """m-dependent asymptotic variance over the spectral tail process.

    Exact enumeration is used when the law has at most ``ENUMERATION_LIMIT``
    atoms; otherwise ``draws`` Monte Carlo samples from ``rng``.
    """
    if law.support_size is not None and law.support_size <= ENUMERATION_LIMIT:
        vals = _m_dependent_integrand(law.atoms, law.m)
        return VarianceReport(float(np.dot(law.probs, vals)), "SpectralEnumeration")
    return sigma2_m_dependent_mc(law, rng, draws)


def sigma2_m_dependent_mc(law: SpectralTailLaw, rng: Optional[np.random.Generator], draws: int = MC_DRAWS) -> VarianceReport:
    if rng is None:
        raise ValueError("Monte Carlo evaluation needs an rng")
    vals = _m_dependent_integrand(law.sample(rng, draws), law.m)
    return VarianceReport(float(vals.mean()), "SpectralMC", float(vals.std(ddof=1) / math.sqrt(draws)))


def sigma2_linear(psi) -> dict:
    """Linear process variances in both normalizations.

    Returns ``{"PaperAn": (sum psi)^2 / ||psi||_2^2, "NoiseAnZ": (sum psi)^2}``
    as :class:`VarianceReport` values.
    """
    psi = np.asarray(psi, dtype=float)
    if not np.any(psi):
        raise ConfigurationError("sigma2_linear: psi must not be identically zero")
    total = float(np.sum(psi))
    norm2 = float(np.sum(psi**2))
    return {
        "PaperAn": VarianceReport(total**2 / norm2, "ClosedForm", 0.0, "PaperAn"),
        "NoiseAnZ": VarianceReport(total**2, "ClosedForm", 0.0, "NoiseAnZ"),
    }


def sigma2_sv(psi) -> dict:
    """Stochastic volatility: 1 under the model's own ``a_n``; ``exp(2 sum psi^2)`` under ``a_n^Z``."""
    psi = np.asarray(psi, dtype=float)
    return {
        "PaperAn": VarianceReport(1.0, "ClosedForm", 0.0, "PaperAn"),
        "NoiseAnZ": VarianceReport(math.exp(2.0 * float(np.sum(psi**2))), "ClosedForm", 0.0, "NoiseAnZ"),
    }


@dataclass(frozen=True)
class KGConstants:
    m2: float
    c_infinity: float
    c0: float
    EX: float
    EA: float
    covariance_variance: float = float("nan")

    def to_dict(self):
        return {
            "m2": self.m2,
            "c_infinity": self.c_infinity,
            "c0": self.c0,
            "EX": self.EX,
            "EA": self.EA,
            "covariance_variance": self.covariance_variance,
        }


def kg_constants(A_law, B_law, tol: float = 1e-8) -> KGConstants:
    """Kesten-Goldie tail and variance constants (``A`` and ``B`` independent).

    ``c_inf = (E[B^2](1 - E[A]) + 2 E[A] E[B]^2) / (2 (1 - E[A]) m2)`` and
    ``c0 = (1 + E[A]) / ((1 - E[A]) 2 m2)``.

    ``covariance_variance = (1 + E[A]) / (1 - E[A])`` is reported for
    comparison: it is the limit that ``Cov(X_0, X_h) = E[A]^h var(X)``
    gives for the truncated variance of ``S_n / a_n``.  It differs from
    ``c0`` by the factor ``2 m2``.
    """
    ea, ea2 = A_law.mean, A_law.second_moment
    if abs(ea2 - 1.0) > tol:
        raise ConfigurationError(f"kg_constants: E[A²]=1 fails, computed E[A²] = {ea2!r}")
    if ea >= 1.0:
        raise ConfigurationError(f"kg_constants: E[A] = {ea} >= 1, stationary mean does not exist")
    eb, eb2 = B_law.mean, B_law.second_moment
    m2 = A_law.m2
    # E[B^2](1 - EA) + 2 EA EB^2 regrouped so that B = 1 reproduces 1 + EA bit for bit
    num = eb2 + ea * (2.0 * eb * eb - eb2)
    denom = 2.0 * (1.0 - ea) * m2
    return KGConstants(
        m2=m2,
        c_infinity=num / denom,
        c0=(1.0 + ea) / denom,
        EX=eb / (1.0 - ea),
        EA=ea,
        covariance_variance=(1.0 + ea) / (1.0 - ea),
    )


@dataclass(frozen=True)
class GGConstants:
    EC: float
    EC2: float
    c0: float
    tail_equiv: float
    EA: float
    EA2: float

    def to_dict(self):
        return {"EC": self.EC, "EC2": self.EC2, "c0": self.c0, "tail_equiv": self.tail_equiv}


def gg_constants(A_law) -> GGConstants:
    """Constants of the Grincevicius-Grey regime via ``C_t = 1 + A_t C_{t-1}``."""
    ea, ea2 = A_law.mean, A_law.second_moment
    if ea2 >= 1.0:
        raise ConfigurationError(f"gg_constants: need E[A^2] < 1, got {ea2}")
    ec = 1.0 / (1.0 - ea)
    ec2 = (1.0 + ea) / ((1.0 - ea2) * (1.0 - ea))
    return GGConstants(
        EC=ec,
        EC2=ec2,
        c0=(1.0 + ea) / (1.0 - ea),
        tail_equiv=1.0 / (1.0 - ea2),
        EA=ea,
        EA2=ea2,
    )


def kg_tail_split(A_law, B_law, stationary_sample, rng: np.random.Generator):
    """Monte Carlo estimates of ``c_+`` and ``c_-``.

    ``c_pm = E[(A X + B)_pm^2 - (A X)_pm^2] / (2 m2)`` with ``X`` drawn from
    ``stationary_sample`` and fresh independent ``(A, B)``.
    Returns ``(c_plus, c_minus, stderr_plus, stderr_minus)``.
    """
    x = np.asarray(stationary_sample, dtype=float)
    a = A_law.sample(rng, x.size)
    b = B_law.sample(rng, x.size)
    ax = a * x
    axb = ax + b
    m2 = A_law.m2
    plus = (np.maximum(axb, 0) ** 2 - np.maximum(ax, 0) ** 2) / (2 * m2)
    minus = (np.maximum(-axb, 0) ** 2 - np.maximum(-ax, 0) ** 2) / (2 * m2)
    se = lambda v: float(v.std(ddof=1) / math.sqrt(v.size))  # noqa: E731
    return float(plus.mean()), float(minus.mean()), se(plus), se(minus)
