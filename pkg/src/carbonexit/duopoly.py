"""Two markets sharing a global damage: Nash game between two regulators and
single-regulator benchmarks (individual contracts, uniform contract, no
compensation).

Country indices are 1 and 2 throughout. Regulators pay the forgone
perpetuity Z^i = pi_i lambda_i b X at exit, and the damage
ell (lambda_1 X 1{t<=tau_1} + lambda_2 X 1{t<=tau_2})^gamma is split half-half
in the Nash game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import singlemarket
from .core import Model, ParameterError, discounted_level, discounted_power, expected_hitting_time

TIE_RTOL = 1e-9


class Regime(str, Enum):
    NASH = "nash"
    INDIVIDUAL = "individual"
    CENTRAL = "central"

    @property
    def numerator_factor(self) -> float:
        # the compensation doubles the cost of exit; half-damage doubles it again
        return {"nash": 4.0, "individual": 2.0, "central": 1.0}[self.value]

    @property
    def profit_weight(self) -> float:
        """Multiplier of pi_i lambda_i b X at exit in the utility display."""
        return 1.0 if self is Regime.CENTRAL else 2.0


@dataclass(frozen=True)
class DuopolySpec:
    lambda1: float
    lambda2: float
    pi1: float
    pi2: float

    def __post_init__(self):
        for lam in (self.lambda1, self.lambda2):
            if not 0 < lam < 1:
                raise ParameterError(f"shares must lie in (0, 1) (got {lam})")
        if abs(self.lambda1 + self.lambda2 - 1.0) > 1e-12:
            raise ParameterError("shares must sum to 1")
        if not (self.pi1 > 0 and self.pi2 > 0):
            raise ParameterError("unit profits must be positive")

    @classmethod
    def proportional(cls, lambda1: float, alpha: float) -> "DuopolySpec":
        return cls(lambda1, 1.0 - lambda1, alpha * lambda1, alpha * (1.0 - lambda1))

    def lam(self, i: int) -> float:
        return self.lambda1 if i == 1 else self.lambda2

    def pi(self, i: int) -> float:
        return self.pi1 if i == 1 else self.pi2


@dataclass(frozen=True)
class CountryThresholds:
    z_low: float
    z_mid: float
    z_high: float


@dataclass(frozen=True)
class DuopolyThresholds:
    regime: Regime
    country1: CountryThresholds
    country2: CountryThresholds

    def __getitem__(self, i: int) -> CountryThresholds:
        if i not in (1, 2):
            raise IndexError(i)
        return self.country1 if i == 1 else self.country2

    def as_array(self) -> np.ndarray:
        c1, c2 = self.country1, self.country2
        return np.array([c1.z_low, c1.z_mid, c1.z_high, c2.z_low, c2.z_mid, c2.z_high])


def _country(i: int, spec: DuopolySpec, model: Model, factor: float) -> CountryThresholds:
    a, b, m, g, ell = model.a, model.b, model.m, model.gamma, model.ell
    lam, pi = spec.lam(i), spec.pi(i)
    other = 1.0 - lam
    k = (m - 1.0) / (g - m) * factor * pi * lam * b / (a * ell)
    w_low = 1.0 - other**g
    w_high = lam**g
    z_l = (k / w_low) ** (1.0 / (g - 1.0))
    z_h = (k / w_high) ** (1.0 / (g - 1.0))
    num = (factor * pi * lam * b * (z_l ** (1 - m) - z_h ** (1 - m))
           + a * ell * w_low * z_l ** (g - m) - a * ell * w_high * z_h ** (g - m))
    den = a * ell * (1.0 - spec.lambda1**g - spec.lambda2**g)
    return CountryThresholds(z_l, (num / den) ** (1.0 / (g - m)), z_h)


def duopoly_thresholds(spec: DuopolySpec, model: Model, regime: Regime | str = Regime.NASH) -> DuopolyThresholds:
    """Exit-first, indifference and exit-second levels of each country.

    The individual and central regimes use the same formulas with the factor 4
    replaced by 2 and 1, which by homogeneity equals scaling the Nash levels
    by 2^{-1/(gamma-1)} and 4^{-1/(gamma-1)}.
    """
    regime = Regime(regime)
    f = regime.numerator_factor
    return DuopolyThresholds(regime, _country(1, spec, model, f), _country(2, spec, model, f))


def _damage(spec: DuopolySpec, model: Model, x1: float, x2: float, x0: float) -> float:
    """D(x0, tau_1, tau_2) for hitting times of x1 and x2."""
    g, m = model.gamma, model.m
    if x1 <= x2:
        first, second, lam_late = x1, x2, spec.lambda2
    else:
        first, second, lam_late = x2, x1, spec.lambda1
    base = x0**g
    w = lam_late**g
    return model.ell * model.a * (
        (1.0 - w) * (discounted_power(x0, first, m, g) - base)
        + w * (discounted_power(x0, second, m, g) - base))


def _net_profit(i: int, level: float, spec: DuopolySpec, model: Model, x0: float, pay: bool) -> float:
    pl = spec.pi(i) * spec.lam(i) * model.b
    d1 = discounted_level(x0, level, model.m)
    return pl * (x0 - d1) - (pl * d1 if pay else 0.0)


def regulator_value(i: int, x1: float, x2: float, spec: DuopolySpec, model: Model,
                    x0: float | None = None) -> float:
    """J_i(x0, tau_1, tau_2) for the hitting times of x1 and x2 (half of the damage)."""
    if i not in (1, 2):
        raise ParameterError(f"country must be 1 or 2 (got {i})")
    x0 = model.x0 if x0 is None else x0
    own = x1 if i == 1 else x2
    return _net_profit(i, own, spec, model, x0, True) - 0.5 * _damage(spec, model, x1, x2, x0)


def objective(regime: Regime | str, x1: float, x2: float, spec: DuopolySpec, model: Model,
              x0: float | None = None) -> float:
    """Total social utility of exits at the hitting times of x1 and x2.

    Nash and individual regimes share the same objective J_1 + J_2 (with
    compensation, full damage); the central planner pays no compensation.
    """
    regime = Regime(regime)
    x0 = model.x0 if x0 is None else x0
    pay = regime is not Regime.CENTRAL
    return (_net_profit(1, x1, spec, model, x0, pay) + _net_profit(2, x2, spec, model, x0, pay)
            - _damage(spec, model, x1, x2, x0))


def utility(first: int, regime: Regime | str, th: DuopolyThresholds, spec: DuopolySpec,
            model: Model, x0: float | None = None) -> float:
    """Closed-form utility when `first` exits at its low level and the other at its high level."""
    regime = Regime(regime)
    x0 = model.x0 if x0 is None else x0
    a, b, m, g, ell = model.a, model.b, model.m, model.gamma, model.ell
    k = regime.profit_weight
    second = 3 - first
    zf, zs = th[first].z_low, th[second].z_high
    lam_s = spec.lam(second)
    term_f = (-k * spec.pi(first) * spec.lam(first) * b * zf - a * ell * (1 - lam_s**g) * zf**g) * (x0 / zf) ** m
    term_s = (-k * spec.pi(second) * lam_s * b * zs - a * ell * lam_s**g * zs**g) * (x0 / zs) ** m
    return term_f + term_s + a * ell * x0**g + (spec.pi1 * spec.lambda1 + spec.pi2 * spec.lambda2) * b * x0


def _ties(u: float, v: float) -> bool:
    return abs(u - v) <= TIE_RTOL * max(abs(u), abs(v))


def best_response(i: int, other: float, th: DuopolyThresholds, x0: float) -> tuple[float, ...]:
    """Optimal hitting level(s) of country i against the rival's level `other`."""
    c = th[i]
    if not (x0 < c.z_low and x0 < other):
        raise ParameterError("best response requires x0 below both z_low and the rival level")
    if _ties(other, c.z_mid):
        return (c.z_low, c.z_high)
    return (c.z_low,) if other > c.z_mid else (c.z_high,)


@dataclass(frozen=True)
class Equilibrium:
    first_exit: int
    first_threshold: float
    second_threshold: float
    utility: float

    @property
    def levels(self) -> tuple[float, float]:
        """(x1, x2) in country order."""
        if self.first_exit == 1:
            return self.first_threshold, self.second_threshold
        return self.second_threshold, self.first_threshold


@dataclass(frozen=True)
class EquilibriumOutcome:
    regime: Regime
    thresholds: DuopolyThresholds
    equilibria: tuple[Equilibrium, ...]
    immediate: tuple[int, ...] = ()


def _equilibrium(first: int, regime: Regime, th: DuopolyThresholds, spec, model, x0) -> Equilibrium:
    return Equilibrium(first, th[first].z_low, th[3 - first].z_high,
                       utility(first, regime, th, spec, model, x0))


def _require_below(th: DuopolyThresholds, x0: float) -> None:
    lo = min(th.country1.z_low, th.country2.z_low)
    if not x0 < lo:
        raise ParameterError(f"x0 = {x0} must lie below min z_low = {lo:.6g} for the {th.regime.value} regime")


def classify_nash(spec: DuopolySpec, model: Model, x0: float | None = None) -> EquilibriumOutcome:
    x0 = model.x0 if x0 is None else x0
    th = duopoly_thresholds(spec, model, Regime.NASH)
    _require_below(th, x0)
    c1, c2 = th.country1, th.country2
    if _ties(c1.z_mid, c2.z_mid):
        firsts = (2, 1)
    elif c1.z_mid < c2.z_mid:
        firsts = (2, 1) if c2.z_low <= c1.z_mid and c2.z_mid <= c1.z_high else (1,)
    else:
        firsts = (2, 1) if c1.z_low <= c2.z_mid and c1.z_mid <= c2.z_high else (2,)
    eqs = tuple(_equilibrium(f, Regime.NASH, th, spec, model, x0) for f in firsts)
    return EquilibriumOutcome(Regime.NASH, th, eqs)


def _planner(regime: Regime, spec: DuopolySpec, model: Model, x0: float) -> EquilibriumOutcome:
    th = duopoly_thresholds(spec, model, regime)
    _require_below(th, x0)
    z1, z2 = th.country1.z_mid, th.country2.z_mid
    if _ties(z1, z2):
        firsts = (1, 2)
    else:
        firsts = (1,) if z1 < z2 else (2,)
    return EquilibriumOutcome(regime, th, tuple(_equilibrium(f, regime, th, spec, model, x0) for f in firsts))


def _planner_with_immediate(regime: Regime, spec: DuopolySpec, model: Model, x0: float) -> EquilibriumOutcome:
    """Planner optimum when x0 may already exceed some exit levels.

    For a fixed exit order the objective separates into one term per country,
    maximised at max(x0, z_low) for the first exiter and max(x0, z_high) for
    the second; the better order is kept. Countries whose level is at or below
    x0 leave at time zero and are listed in ``immediate``.
    """
    th = duopoly_thresholds(spec, model, regime)
    cands = []
    for first in (1, 2):
        yf = max(x0, th[first].z_low)
        ys = max(x0, th[3 - first].z_high)
        levels = (yf, ys) if first == 1 else (ys, yf)
        cands.append(Equilibrium(first, yf, ys, objective(regime, *levels, spec, model, x0)))
    best = max(c.utility for c in cands)
    eqs = tuple(c for c in cands if _ties(c.utility, best))
    immediate = tuple(sorted({i for e in eqs for i, lvl in zip((1, 2), e.levels) if lvl <= x0}))
    return EquilibriumOutcome(regime, th, eqs, immediate)


def _solve_planner(regime: Regime, spec: DuopolySpec, model: Model, x0: float | None,
                   allow_immediate: bool) -> EquilibriumOutcome:
    x0 = model.x0 if x0 is None else x0
    th = duopoly_thresholds(spec, model, regime)
    if allow_immediate and not x0 < min(th.country1.z_low, th.country2.z_low):
        return _planner_with_immediate(regime, spec, model, x0)
    return _planner(regime, spec, model, x0)


def individual_solution(spec: DuopolySpec, model: Model, x0: float | None = None,
                        allow_immediate: bool = False) -> EquilibriumOutcome:
    """One regulator paying each firm its own forgone perpetuity."""
    return _solve_planner(Regime.INDIVIDUAL, spec, model, x0, allow_immediate)


def central_solution(spec: DuopolySpec, model: Model, x0: float | None = None,
                     allow_immediate: bool = False) -> EquilibriumOutcome:
    """Planner optimum without compensation.

    By default x0 must lie below both exit-first levels; ``allow_immediate``
    extends the solution to larger x0 (see ``_planner_with_immediate``).
    """
    return _solve_planner(Regime.CENTRAL, spec, model, x0, allow_immediate)


@dataclass(frozen=True)
class UniformSolution:
    x_hat1: float
    x_hat2: float
    value: float


def uniform_two_firm(spec: DuopolySpec, model: Model, x0: float | None = None) -> UniformSolution:
    """One regulator offering the same payment process to both firms."""
    x0 = model.x0 if x0 is None else x0
    if not spec.pi1 < spec.pi2:
        raise ParameterError("the uniform scheme needs pi1 < pi2")
    a, b, m, g, ell = model.a, model.b, model.m, model.gamma, model.ell
    l1, l2, p1, p2 = spec.lambda1, spec.lambda2, spec.pi1, spec.pi2
    k = (m - 1) / (g - m) * b / (ell * a)
    x1 = (k * 2 * p1 * l1 / (1 - l2**g)) ** (1 / (g - 1))
    x2 = (k * (p2 * (1 + l2) - p1 * l1) / l2**g) ** (1 / (g - 1))
    v = ((-2 * p1 * l1 * b * x1 - a * ell * (1 - l2**g) * x1**g) * (x0 / x1) ** m
         + (-2 * l2 * p2 * b * x2 - l1 * (p2 - p1) * b * x2 - a * ell * l2**g * x2**g) * (x0 / x2) ** m
         + a * ell * x0**g + (p1 * l1 + p2 * l2) * b * x0)
    return UniformSolution(x1, x2, v)


def uniform_profile(spec: DuopolySpec) -> singlemarket.FirmProfile:
    return singlemarket.FirmProfile.from_arrays([spec.lambda1, spec.lambda2], [spec.pi1, spec.pi2])


@dataclass(frozen=True)
class ComparisonReport:
    nash: EquilibriumOutcome
    individual: EquilibriumOutcome
    central: EquilibriumOutcome
    uniform: UniformSolution | None
    orderings: dict[str, bool]

    @property
    def utility_ordering_holds(self) -> bool:
        return self.orderings.get("utility", False)


def _earlier(a: float, b: float, x0: float) -> bool:
    return a < b or a <= x0


def compare_regimes(spec: DuopolySpec, model: Model, x0: float | None = None,
                    allow_immediate: bool = False) -> ComparisonReport:
    """Solve every regime and check exit timing and utility orderings.

    Utility ordering: every Nash utility <= individual optimum <= central
    optimum. Timing ordering: for each exit order used by the planners, the
    central levels lie below the individual ones, which lie below the Nash
    levels of the same roles. With ``allow_immediate`` the planners may close
    a market at time zero; the uniform scheme is then only reported when both
    of its levels exceed x0.
    """
    x0 = model.x0 if x0 is None else x0
    nash = classify_nash(spec, model, x0)
    ind = individual_solution(spec, model, x0, allow_immediate)
    cen = central_solution(spec, model, x0, allow_immediate)
    uni = uniform_two_firm(spec, model, x0) if spec.pi1 < spec.pi2 else None
    if uni is not None and not x0 < uni.x_hat1:
        uni = None
    u_hat = ind.equilibria[0].utility
    u_bar = cen.equilibria[0].utility
    scale = max(abs(u_bar), abs(u_hat), 1.0)
    slack = 1e-12 * scale
    orderings = {
        "utility": all(e.utility <= u_hat + slack for e in nash.equilibria) and u_hat <= u_bar + slack,
        # a level clamped at x0 counts as earlier
        "first_exit": _earlier(cen.equilibria[0].first_threshold, ind.equilibria[0].first_threshold, x0),
        "second_exit": _earlier(cen.equilibria[0].second_threshold, ind.equilibria[0].second_threshold, x0),
    }
    if uni is not None:
        orderings["individual_beats_uniform"] = u_hat >= uni.value - slack
    return ComparisonReport(nash, ind, cen, uni, orderings)


def lifetimes(eq: Equilibrium, model: Model) -> tuple[float, float]:
    """Expected exit times (country 1, country 2); zero for immediate exits."""
    return tuple(0.0 if lvl <= model.x0 else expected_hitting_time(model.gbm, lvl) for lvl in eq.levels)


def lattice_equilibria(spec: DuopolySpec, model: Model, grid: np.ndarray, x0: float | None = None,
                       rtol: float = 1e-10) -> list[tuple[float, float]]:
    """All grid pairs (x1, x2) that are mutual best responses on the grid itself.

    Payoffs are J_1 and J_2 of the Nash game. Used as a brute-force check that
    the case table misses no hitting-time equilibrium.
    """
    x0 = model.x0 if x0 is None else x0
    a, b, m, g, ell = model.a, model.b, model.m, model.gamma, model.ell
    y = np.maximum(np.asarray(grid, dtype=float), x0)
    disc = (x0 / y) ** m
    d1 = y * disc
    dg = y**g * disc - x0**g
    own = [spec.pi(i) * spec.lam(i) * b * (x0 - 2.0 * d1) for i in (1, 2)]
    first = y[:, None] <= y[None, :]
    w1 = spec.lambda1**g
    w2 = spec.lambda2**g
    # damage for (x1 on rows, x2 on columns)
    dmg = ell * a * np.where(first,
                             (1 - w2) * dg[:, None] + w2 * dg[None, :],
                             (1 - w1) * dg[None, :] + w1 * dg[:, None])
    j1 = own[0][:, None] - 0.5 * dmg
    j2 = own[1][None, :] - 0.5 * dmg
    best1 = j1.max(axis=0)
    best2 = j2.max(axis=1)
    ok1 = j1 >= best1[None, :] - rtol * np.abs(best1[None, :])
    ok2 = j2 >= best2[:, None] - rtol * np.abs(best2[:, None])
    p_idx, q_idx = np.nonzero(ok1 & ok2)
    return [(float(y[p]), float(y[q])) for p, q in zip(p_idx, q_idx)]
