"""Stationary model families and path simulation.

Six families are covered: iid sequences, finite moving averages, linear
processes (truncated), stochastic volatility ``X_t = sigma_t Z_t`` with
log-Gaussian volatility, and affine stochastic recurrence equations
``X_t = A_t X_{t-1} + B_t`` in the Kesten-Goldie (``E[A^2] = 1``) and
Grincevicius-Grey (``E[A^2] < 1``, heavy-tailed ``B``) regimes.

Paths are simulated in batches: ``simulate_paths(spec, n, rng, size)`` returns
an array of shape ``(size, n)`` and ``simulate_path`` is its first row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numba
import numpy as np

from .errors import ConfigurationError
from .tails import EmpiricalTail, OscillatingDensity, Pareto2, tail_from_dict

#: Target contraction factor for the SRE burn-in.
BURN_IN_TOLERANCE = 1e-8
KG_NORMALIZATION_TOL = 1e-8


# ---------------------------------------------------------------------------
# scalar laws for the multiplier A and the additive term B
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantLaw:
    c: float

    kind = "Constant"

    @property
    def mean(self):
        return float(self.c)

    @property
    def second_moment(self):
        return float(self.c) ** 2

    def moment(self, beta):
        return float(self.c) ** beta

    @property
    def m2(self):
        """``E[A^2 log A]``."""
        return 0.0 if self.c == 0 else self.c**2 * math.log(self.c)

    @property
    def nonnegative(self):
        return self.c >= 0

    symmetric = False

    def sample(self, rng, size=None):
        if size is None:
            return float(self.c)
        return np.full(size, float(self.c))

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class LogNormalLaw:
    """``A = exp(mu + s G)`` with ``G`` standard normal.

    ``E[A^beta] = exp(beta mu + beta^2 s^2 / 2)``; the Kesten-Goldie
    normalization ``E[A^2] = 1`` holds iff ``mu = -s^2``.
    """

    mu: float
    s: float

    kind = "LogNormal"
    nonnegative = True
    symmetric = False

    def __post_init__(self):
        if not self.s >= 0:
            raise ConfigurationError(f"LogNormal: s must be >= 0, got {self.s}")

    @classmethod
    def kesten_goldie(cls, s: float) -> "LogNormalLaw":
        return cls(mu=-(s**2), s=s)

    def moment(self, beta):
        return math.exp(beta * self.mu + beta**2 * self.s**2 / 2.0)

    @property
    def mean(self):
        return self.moment(1.0)

    @property
    def second_moment(self):
        return self.moment(2.0)

    @property
    def m2(self):
        # d/d beta E[A^beta] at beta = 2
        return (self.mu + 2.0 * self.s**2) * self.moment(2.0)

    def sample(self, rng, size=None):
        return np.exp(self.mu + self.s * rng.standard_normal(size))

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "s": self.s}


@dataclass(frozen=True)
class DiscreteLaw:
    atoms: tuple
    weights: tuple

    kind = "Discrete"
    symmetric = False

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if len(atoms) == 0 or len(atoms) != len(weights):
            raise ConfigurationError("Discrete: atoms and weights must be non-empty and equally long")
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-12:
            raise ConfigurationError(f"Discrete: weights must be >= 0 and sum to 1, got {weights}")

    @property
    def nonnegative(self):
        return min(self.atoms) >= 0

    def moment(self, beta):
        return sum(w * a**beta for a, w in zip(self.atoms, self.weights) if a != 0 or beta == 0)

    @property
    def mean(self):
        return sum(w * a for a, w in zip(self.atoms, self.weights))

    @property
    def second_moment(self):
        return sum(w * a * a for a, w in zip(self.atoms, self.weights))

    @property
    def m2(self):
        return sum(w * a * a * math.log(a) for a, w in zip(self.atoms, self.weights) if a > 0)

    def sample(self, rng, size=None):
        return rng.choice(np.asarray(self.atoms), size=size, p=np.asarray(self.weights))

    def to_dict(self):
        return {"kind": self.kind, "atoms": list(self.atoms), "weights": list(self.weights)}


@dataclass(frozen=True)
class NormalLaw:
    """Gaussian law; used for light-tailed ``B`` and for test stubs."""

    loc: float = 0.0
    scale: float = 1.0

    kind = "Normal"
    nonnegative = False

    @property
    def symmetric(self):
        return self.loc == 0

    @property
    def mean(self):
        return float(self.loc)

    @property
    def second_moment(self):
        return self.loc**2 + self.scale**2

    def sample(self, rng, size=None):
        return self.loc + self.scale * rng.standard_normal(size)

    def to_dict(self):
        return {"kind": self.kind, "loc": self.loc, "scale": self.scale}


ScalarLaw = Union[ConstantLaw, LogNormalLaw, DiscreteLaw, NormalLaw]
_LAWS = {cls.kind: cls for cls in (ConstantLaw, LogNormalLaw, DiscreteLaw, NormalLaw)}


def law_from_dict(d: dict):
    kind = d.get("kind")
    params = {k: v for k, v in d.items() if k != "kind"}
    if kind in _LAWS:
        try:
            return _LAWS[kind](**params)
        except TypeError as exc:
            raise ConfigurationError(f"law '{kind}': {exc}") from None
    return tail_from_dict(d)


# ---------------------------------------------------------------------------
# coefficient rules for linear processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricRule:
    """``psi_j = rho**j``, ``j >= 0``."""

    rho: float

    kind = "Geometric"

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ConfigurationError(f"Geometric rule needs |rho| < 1, got {self.rho}")

    def coefficients(self, m: int) -> np.ndarray:
        return self.rho ** np.arange(m + 1, dtype=float)

    def abs_sum_bound(self) -> float:
        return 1.0 / (1.0 - abs(self.rho))

    def tail_bound(self, m: int) -> float:
        """Upper bound on ``sum_{j > m} |psi_j|``."""
        return abs(self.rho) ** (m + 1) / (1.0 - abs(self.rho))

    def to_dict(self):
        return {"kind": self.kind, "rho": self.rho}


@dataclass(frozen=True)
class HyperbolicRule:
    """``psi_j = (j + 1)**-power`` with ``power > 1``."""

    power: float

    kind = "Hyperbolic"

    def __post_init__(self):
        if not self.power > 1:
            raise ConfigurationError(f"Hyperbolic rule needs power > 1, got {self.power}")

    def coefficients(self, m: int) -> np.ndarray:
        return (np.arange(m + 1, dtype=float) + 1.0) ** -self.power

    def abs_sum_bound(self) -> float:
        return 1.0 + 1.0 / (self.power - 1.0)

    def tail_bound(self, m: int) -> float:
        return (m + 1.0) ** (1.0 - self.power) / (self.power - 1.0)

    def to_dict(self):
        return {"kind": self.kind, "power": self.power}


def rule_from_dict(d: dict):
    kind = d.get("kind")
    params = {k: v for k, v in d.items() if k != "kind"}
    if kind == GeometricRule.kind:
        return GeometricRule(**params)
    if kind == HyperbolicRule.kind:
        return HyperbolicRule(**params)
    raise ConfigurationError(f"unknown coefficient rule {kind!r}")


# ---------------------------------------------------------------------------
# model families
# ---------------------------------------------------------------------------


def _check_noise(noise, name):
    if not hasattr(noise, "sample") or isinstance(noise, EmpiricalTail):
        raise ConfigurationError(f"{name}: noise must be a samplable law, got {type(noise).__name__}")


def _centered_noise(noise, rng, shape):
    # Heavy-tailed noise is centered; deterministic/Gaussian stub laws pass through.
    z = noise.sample(rng, shape)
    if isinstance(noise, (Pareto2, OscillatingDensity)) and noise.mean != 0:
        z = z - noise.mean
    return z


def _psi_array(psi, name):
    arr = np.atleast_1d(np.asarray(psi, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigurationError(f"{name}: psi must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name}: psi must be finite")
    return arr


def _moving_average(z, psi, n):
    """``X_t = sum_j psi_j z_{t-j}`` on the last ``n`` columns of ``z``."""
    m = psi.size - 1
    offset = z.shape[1] - n
    out = np.zeros((z.shape[0], n))
    for j, c in enumerate(psi):
        if c != 0:
            out += c * z[:, offset - j : offset - j + n]
    return out


@dataclass(frozen=True)
class IID:
    """iid sequence; a heavy-tailed marginal with non-zero mean is centered."""

    noise: object
    burn_in: Optional[int] = None

    kind = "IID"

    def __post_init__(self):
        _check_noise(self.noise, self.kind)

    @property
    def symmetric(self):
        return bool(getattr(self.noise, "symmetric", False))

    @property
    def mean(self):
        return 0.0

    def default_burn_in(self):
        return 0

    def simulate(self, rng, n, size):
        return _centered_noise(self.noise, rng, (size, n))

    def to_dict(self):
        return {"variant": self.kind, "noise": self.noise.to_dict(), **_burn(self)}


@dataclass(frozen=True)
class FiniteMA:
    """``X_t = psi_0 Z_t + ... + psi_m Z_{t-m}`` with ``psi_0 = 1``, ``psi_m != 0``."""

    psi: tuple
    noise: object
    burn_in: Optional[int] = None

    kind = "FiniteMA"

    def __post_init__(self):
        arr = _psi_array(self.psi, self.kind)
        object.__setattr__(self, "psi", tuple(arr.tolist()))
        if arr[0] != 1.0:
            raise ConfigurationError(f"FiniteMA: psi_0 must equal 1, got {arr[0]}")
        if arr[-1] == 0.0:
            raise ConfigurationError("FiniteMA: last coefficient psi_m must be non-zero")
        _check_noise(self.noise, self.kind)
        if self.burn_in is not None and self.burn_in < self.m:
            raise ConfigurationError(f"FiniteMA: burn_in must be >= m = {self.m}")

    @property
    def m(self):
        return len(self.psi) - 1

    @property
    def coefficients(self):
        return np.asarray(self.psi)

    @property
    def symmetric(self):
        return bool(getattr(self.noise, "symmetric", False))

    @property
    def mean(self):
        return 0.0

    def default_burn_in(self):
        return self.m

    def simulate(self, rng, n, size):
        burn = effective_burn_in(self)
        z = _centered_noise(self.noise, rng, (size, n + burn))
        return _moving_average(z, self.coefficients, n)

    def to_dict(self):
        return {"variant": self.kind, "psi": list(self.psi), "noise": self.noise.to_dict(), **_burn(self)}


@dataclass(frozen=True)
class LinearProcess:
    """Causal linear process truncated to ``m_trunc + 1`` coefficients."""

    rule: object
    m_trunc: int
    noise: object
    burn_in: Optional[int] = None

    kind = "LinearProcess"

    def __post_init__(self):
        if int(self.m_trunc) != self.m_trunc or self.m_trunc < 0:
            raise ConfigurationError("LinearProcess: m_trunc must be a non-negative integer")
        if not math.isfinite(self.rule.abs_sum_bound()):
            raise ConfigurationError("LinearProcess: coefficient rule is not absolutely summable")
        if self.rule.coefficients(0)[0] != 1.0:
            raise ConfigurationError("LinearProcess: rule must have psi_0 = 1")
        _check_noise(self.noise, self.kind)
        if self.burn_in is not None and self.burn_in < self.m_trunc:
            raise ConfigurationError(f"LinearProcess: burn_in must be >= m_trunc = {self.m_trunc}")

    @property
    def coefficients(self):
        return self.rule.coefficients(int(self.m_trunc))

    @property
    def truncation_bound(self):
        return self.rule.tail_bound(int(self.m_trunc))

    @property
    def symmetric(self):
        return bool(getattr(self.noise, "symmetric", False))

    @property
    def mean(self):
        return 0.0

    def default_burn_in(self):
        return int(self.m_trunc)

    def simulate(self, rng, n, size):
        burn = effective_burn_in(self)
        z = _centered_noise(self.noise, rng, (size, n + burn))
        return _moving_average(z, self.coefficients, n)

    def to_dict(self):
        return {
            "variant": self.kind,
            "rule": self.rule.to_dict(),
            "m_trunc": int(self.m_trunc),
            "noise": self.noise.to_dict(),
            **_burn(self),
        }


@dataclass(frozen=True)
class StochVol:
    """``X_t = sigma_t Z_t`` with ``log sigma_t = sum_j psi_j eta_{t-j}``, ``eta`` iid N(0,1)."""

    psi: tuple
    noise: object
    burn_in: Optional[int] = None

    kind = "StochVol"

    def __post_init__(self):
        arr = _psi_array(self.psi, self.kind)
        object.__setattr__(self, "psi", tuple(arr.tolist()))
        _check_noise(self.noise, self.kind)
        if self.burn_in is not None and self.burn_in < self.m:
            raise ConfigurationError(f"StochVol: burn_in must be >= m = {self.m}")

    @classmethod
    def from_rule(cls, rule, m_trunc, noise, burn_in=None):
        return cls(tuple(rule.coefficients(m_trunc).tolist()), noise, burn_in)

    @property
    def m(self):
        return len(self.psi) - 1

    @property
    def coefficients(self):
        return np.asarray(self.psi)

    @property
    def volatility_second_moment(self):
        """``E[sigma_0^2] = exp(2 sum psi_j^2)``."""
        return math.exp(2.0 * float(np.sum(self.coefficients**2)))

    @property
    def symmetric(self):
        return bool(getattr(self.noise, "symmetric", False))

    @property
    def mean(self):
        return 0.0

    def default_burn_in(self):
        return self.m

    def simulate(self, rng, n, size):
        burn = effective_burn_in(self)
        z = _centered_noise(self.noise, rng, (size, n))
        psi = self.coefficients
        if not np.any(psi):
            return z
        eta = rng.standard_normal((size, n + burn))
        return np.exp(_moving_average(eta, psi, n)) * z

    def to_dict(self):
        return {"variant": self.kind, "psi": list(self.psi), "noise": self.noise.to_dict(), **_burn(self)}


@numba.njit(nogil=True, cache=True)
def _sre_recursion(A, B, burn):
    size, total = B.shape
    out = np.empty((size, total - burn))
    for i in range(size):
        x = 0.0
        for t in range(burn):
            x = A[i, t] * x + B[i, t]
        for t in range(burn, total):
            x = A[i, t] * x + B[i, t]
            out[i, t - burn] = x
    return out


def _sre_burn_in(A_law) -> int:
    ea2 = A_law.second_moment
    rho = math.sqrt(ea2) if ea2 < 1.0 else A_law.mean
    if rho <= 0.0:
        return 1
    if rho >= 1.0:
        raise ConfigurationError(f"SRE: no geometric contraction (rate {rho} >= 1)")
    return int(math.floor(math.log(BURN_IN_TOLERANCE) / math.log(rho))) + 1


def _sre_simulate(spec, rng, n, size):
    burn = effective_burn_in(spec)
    total = n + burn
    A = np.asarray(spec.A.sample(rng, (size, total)), dtype=float)
    B = np.asarray(spec.B.sample(rng, (size, total)), dtype=float)
    return _sre_recursion(A, B, burn)


@dataclass(frozen=True)
class SREKestenGoldie:
    """``X_t = A_t X_{t-1} + B_t`` with ``E[A^2] = 1``.

    ``enforce_normalization=False`` skips the ``E[A^2] = 1`` check; it exists
    for deterministic test cases only.
    """

    A: object
    B: object
    burn_in: Optional[int] = None
    enforce_normalization: bool = True

    kind = "SREKestenGoldie"

    def __post_init__(self):
        if not getattr(self.A, "nonnegative", False):
            raise ConfigurationError("SREKestenGoldie: A must be non-negative")
        if self.enforce_normalization:
            ea2 = self.A.second_moment
            if abs(ea2 - 1.0) > KG_NORMALIZATION_TOL:
                raise ConfigurationError(f"SREKestenGoldie: E[A²]=1 fails, computed E[A²] = {ea2!r}")
        if not hasattr(self.B, "second_moment") or not math.isfinite(self.B.second_moment):
            raise ConfigurationError("SREKestenGoldie: B must have a finite second moment")
        if self.A.mean >= 1.0:
            raise ConfigurationError(f"SREKestenGoldie: E[A] = {self.A.mean} must be < 1")

    symmetric = False

    @property
    def mean(self):
        return self.B.mean / (1.0 - self.A.mean)

    def default_burn_in(self):
        return _sre_burn_in(self.A)

    def simulate(self, rng, n, size):
        return _sre_simulate(self, rng, n, size)

    def to_dict(self):
        d = {"variant": self.kind, "A": self.A.to_dict(), "B": self.B.to_dict(), **_burn(self)}
        if not self.enforce_normalization:
            d["enforce_normalization"] = False
        return d


@dataclass(frozen=True)
class SREGrey:
    """``X_t = A_t X_{t-1} + B_t`` with ``E[A^2] < 1`` and ``B`` of tail index 2."""

    A: object
    B: object
    burn_in: Optional[int] = None

    kind = "SREGrey"

    def __post_init__(self):
        if not getattr(self.A, "nonnegative", False):
            raise ConfigurationError("SREGrey: A must be non-negative")
        if not self.A.second_moment < 1.0:
            raise ConfigurationError(f"SREGrey: need E[A^2] < 1, got {self.A.second_moment}")
        if not isinstance(self.B, (Pareto2, OscillatingDensity)):
            raise ConfigurationError("SREGrey: B must be a tail-index-2 law (Pareto2 or OscillatingAppendixB)")

    symmetric = False

    @property
    def mean(self):
        return self.B.mean / (1.0 - self.A.mean)

    def default_burn_in(self):
        return _sre_burn_in(self.A)

    def simulate(self, rng, n, size):
        return _sre_simulate(self, rng, n, size)

    def to_dict(self):
        return {"variant": self.kind, "A": self.A.to_dict(), "B": self.B.to_dict(), **_burn(self)}


ModelSpec = Union[IID, FiniteMA, LinearProcess, StochVol, SREKestenGoldie, SREGrey]
SRE_KINDS = (SREKestenGoldie.kind, SREGrey.kind)


def _burn(spec):
    return {} if spec.burn_in is None else {"burn_in": int(spec.burn_in)}


def effective_burn_in(spec) -> int:
    return spec.default_burn_in() if spec.burn_in is None else int(spec.burn_in)


def default_burn_in(spec) -> int:
    """Burn-in that makes the simulated path (approximately) stationary.

    0 for iid, the coefficient count minus one for moving averages, linear
    processes and stochastic volatility (exact stationarity), and for the SREs
    the smallest ``k`` with ``rho**k < 1e-8`` where ``rho = sqrt(E[A^2])`` if
    ``E[A^2] < 1`` and ``rho = E[A]`` in the Kesten-Goldie case.
    """
    return spec.default_burn_in()


def simulate_paths(spec, n: int, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """``size`` independent stationary paths of length ``n``, shape ``(size, n)``."""
    if n < 1:
        raise ValueError("path length n must be >= 1")
    return spec.simulate(rng, int(n), int(size))


def simulate_path(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    return simulate_paths(spec, n, rng, 1)[0]


def centering_constant(spec, n: int) -> float:
    """``d_n = n E[X]``: zero for the centered families, ``n E[B]/(1-E[A])`` for SREs."""
    return n * spec.mean


def model_from_dict(d: dict):
    variant = d.get("variant")
    burn_in = d.get("burn_in")
    try:
        if variant == IID.kind:
            return IID(law_from_dict(d["noise"]), burn_in)
        if variant == FiniteMA.kind:
            return FiniteMA(tuple(d["psi"]), law_from_dict(d["noise"]), burn_in)
        if variant == LinearProcess.kind:
            return LinearProcess(rule_from_dict(d["rule"]), int(d["m_trunc"]), law_from_dict(d["noise"]), burn_in)
        if variant == StochVol.kind:
            return StochVol(tuple(d["psi"]), law_from_dict(d["noise"]), burn_in)
        if variant == SREKestenGoldie.kind:
            return SREKestenGoldie(
                law_from_dict(d["A"]), law_from_dict(d["B"]), burn_in, bool(d.get("enforce_normalization", True))
            )
        if variant == SREGrey.kind:
            return SREGrey(law_from_dict(d["A"]), law_from_dict(d["B"]), burn_in)
    except KeyError as exc:
        raise ConfigurationError(f"model '{variant}': missing field {exc}") from None
    raise ConfigurationError(f"unknown model variant {variant!r}")


def write_path_binary(path: np.ndarray, file) -> None:
    """Raw little-endian float64 column."""
    np.asarray(path, dtype="<f8").tofile(file)


def write_path_csv(path: np.ndarray, file) -> None:
    with open(file, "w") as fh:
        for x in np.asarray(path, dtype=float):
            fh.write(f"{x:.17g}\n")
