"""Market parameters, derived constants and GBM hitting-time statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ParameterError(ValueError):
    """Raised when a parameter set violates a model constraint."""


class NumericalError(RuntimeError):
    """Raised when a computation fails to produce a finite, converged result."""


@dataclass(frozen=True)
class GbmParams:
    """Production dynamics dX = mu X dt + sigma X dW, X_0 = x0 (rates per year)."""

    mu: float
    sigma: float
    x0: float


@dataclass(frozen=True)
class EconomyParams:
    """Discount rate, damage exponent and damage scale of L(x) = ell * x**gamma."""

    rho: float
    gamma: float
    ell: float


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    message: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def raise_if_failed(self) -> None:
        if not self.ok:
            raise ParameterError("; ".join(c.message for c in self.failures))

    def __str__(self) -> str:
        return "\n".join(f"[{'pass' if c.ok else 'FAIL'}] {c.name}: {c.message}" for c in self.checks)


def damage_growth_rate(mu: float, sigma: float, gamma: float) -> float:
    """Growth rate M of E[X_t**gamma] = x0**gamma * exp(M t)."""
    return gamma * mu + 0.5 * sigma**2 * (gamma**2 - gamma)


def validate(gbm: GbmParams, econ: EconomyParams) -> ValidationReport:
    """Check every model constraint; never raises."""
    mu, sigma, x0 = gbm.mu, gbm.sigma, gbm.x0
    rho, gamma, ell = econ.rho, econ.gamma, econ.ell
    checks = [
        Check("sigma", sigma > 0, f"sigma must be positive (got {sigma})"),
        Check("x0", x0 > 0, f"x0 must be positive (got {x0})"),
        Check("gamma", gamma >= 2, f"gamma must be at least 2 (got {gamma})"),
        Check("ell", ell > 0, f"ell must be positive (got {ell})"),
    ]
    half_var = 0.5 * sigma**2
    checks.append(Check(
        "drift", mu > half_var,
        f"mu must exceed sigma^2/2 = {half_var:.6g} (got mu={mu})"))
    checks.append(Check("rho_low", rho > mu, f"rho must exceed mu = {mu} (got rho={rho})"))
    big_m = damage_growth_rate(mu, sigma, gamma)
    checks.append(Check(
        "rho_high", rho < big_m,
        f"rho must be below gamma*mu + sigma^2*(gamma^2-gamma)/2 = {big_m:.6g} (got rho={rho})"))
    return ValidationReport(tuple(checks))


def root_m(mu: float, sigma: float, rho: float) -> float:
    """Positive root of sigma^2/2 m^2 + (mu - sigma^2/2) m - rho = 0.

    Evaluated as 2rho/sigma^2 divided by (sqrt(q^2 + 2rho/sigma^2) - q), q = 1/2 - mu/sigma^2,
    which avoids the cancellation of q + sqrt(...) when q < 0, then polished by
    one Newton step.
    """
    s2 = sigma * sigma
    q = 0.5 - mu / s2
    r = 2.0 * rho / s2
    disc = math.sqrt(q * q + r)
    m = r / (disc - q) if q < 0 else q + disc
    f = 0.5 * s2 * m * m + (mu - 0.5 * s2) * m - rho
    fp = s2 * m + (mu - 0.5 * s2)
    return m - f / fp


@dataclass(frozen=True)
class DerivedConstants:
    a: float
    b: float
    m: float
    big_m: float
    nu: float


def derived_constants(gbm: GbmParams, econ: EconomyParams) -> DerivedConstants:
    validate(gbm, econ).raise_if_failed()
    big_m = damage_growth_rate(gbm.mu, gbm.sigma, econ.gamma)
    return DerivedConstants(
        a=1.0 / (big_m - econ.rho),
        b=1.0 / (econ.rho - gbm.mu),
        m=root_m(gbm.mu, gbm.sigma, econ.rho),
        big_m=big_m,
        nu=gbm.mu - 0.5 * gbm.sigma**2,
    )


@dataclass(frozen=True)
class Model:
    """Validated bundle of dynamics, economy and their derived constants."""

    gbm: GbmParams
    econ: EconomyParams
    consts: DerivedConstants = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "consts", derived_constants(self.gbm, self.econ))

    @classmethod
    def create(cls, mu, sigma, x0, rho, gamma, ell) -> "Model":
        return cls(GbmParams(mu, sigma, x0), EconomyParams(rho, gamma, ell))

    # shorthands used all over the closed forms
    @property
    def a(self) -> float:
        return self.consts.a

    @property
    def b(self) -> float:
        return self.consts.b

    @property
    def m(self) -> float:
        return self.consts.m

    @property
    def gamma(self) -> float:
        return self.econ.gamma

    @property
    def ell(self) -> float:
        return self.econ.ell

    @property
    def x0(self) -> float:
        return self.gbm.x0

    def with_x0(self, x0: float) -> "Model":
        return Model(GbmParams(self.gbm.mu, self.gbm.sigma, x0), self.econ)


def expected_discount_factor(gbm: GbmParams, rho: float, x_hat: float) -> float:
    """E[exp(-rho tau)] for tau the first time X reaches x_hat from x0."""
    if not x_hat > 0:
        raise ParameterError(f"threshold must be positive (got {x_hat})")
    if gbm.x0 >= x_hat:
        return 1.0
    return (gbm.x0 / x_hat) ** root_m(gbm.mu, gbm.sigma, rho)


def expected_hitting_time(gbm: GbmParams, x_hat: float) -> float:
    """E[tau] = ln(x_hat/x0) / (mu - sigma^2/2) for an upward threshold."""
    if x_hat < gbm.x0:
        raise ParameterError(
            f"threshold {x_hat} lies below x0 = {gbm.x0}; handle immediate exit explicitly")
    return math.log(x_hat / gbm.x0) / (gbm.mu - 0.5 * gbm.sigma**2)


def discounted_level(x0: float, level: float, m: float) -> float:
    """E[exp(-rho tau) X_tau] for the hitting time of `level` (tau = 0 when x0 >= level)."""
    if x0 >= level:
        return x0
    return level * (x0 / level) ** m


def discounted_power(x0: float, level: float, m: float, power: float) -> float:
    """E[exp(-rho tau) X_tau**power] for the hitting time of `level`."""
    if x0 >= level:
        return x0**power
    return level**power * (x0 / level) ** m


def profit_integral(x0: float, level: float, model: Model) -> float:
    """E[int_0^tau exp(-rho t) X_t dt] up to the hitting time of `level`."""
    return model.b * (x0 - discounted_level(x0, level, model.m))


def damage_integral(x0: float, level: float, model: Model) -> float:
    """E[int_0^tau exp(-rho t) X_t**gamma dt] up to the hitting time of `level`."""
    g = model.gamma
    return model.a * (discounted_power(x0, level, model.m, g) - x0**g)
