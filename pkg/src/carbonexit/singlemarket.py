"""Uniform exit incentives for N firms sharing one market.

Firm i holds market share lambda_i and earns pi_i per unit of production;
profits increase strictly with i, so firms exit in index order at the hitting
times of increasing thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (Model, ParameterError, damage_integral, discounted_level,
                   expected_hitting_time, profit_integral)

SHARE_TOL = 1e-12
TIE_TOL = 1e-12


def _kahan_cumsum(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    total = 0.0
    comp = 0.0
    for k, v in enumerate(values):
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[k] = total
    return out


@dataclass(frozen=True, eq=False)
class FirmProfile:
    """Ordered firms with cached cumulative shares and tail profit sums.

    ``lam_tilde[i]`` is the share of firms 1..i (index 0 holds 0) and
    ``pi_bar[i]`` the sum of pi_j lambda_j over j >= i (index N+1 holds 0), both
    1-based to follow the usual notation.
    """

    lambdas: np.ndarray
    pis: np.ndarray
    lam_tilde: np.ndarray
    pi_bar: np.ndarray

    @classmethod
    def from_arrays(cls, lambdas, pis) -> "FirmProfile":
        lam = np.asarray(lambdas, dtype=float).copy()
        pi = np.asarray(pis, dtype=float).copy()
        if lam.ndim != 1 or lam.shape != pi.shape or lam.size == 0:
            raise ParameterError("lambdas and pis must be 1-D arrays of equal, non-zero length")
        if np.any(lam <= 0) or (lam.size > 1 and np.any(lam >= 1)):
            raise ParameterError("market shares must lie in (0, 1)")
        if np.any(pi <= 0):
            raise ParameterError("unit profits must be positive")
        if abs(math.fsum(lam) - 1.0) > SHARE_TOL:
            raise ParameterError(f"market shares must sum to 1 (sum = {math.fsum(lam)!r})")
        gaps = np.diff(pi)
        if np.any(gaps <= TIE_TOL * pi[:-1]):
            raise ParameterError("unit profits must be strictly increasing")
        lam_tilde = np.concatenate([[0.0], _kahan_cumsum(lam)])
        lam_tilde[-1] = 1.0
        tail = _kahan_cumsum((pi * lam)[::-1])[::-1]
        pi_bar = np.concatenate([[0.0], tail, [0.0]])
        for arr in (lam, pi, lam_tilde, pi_bar):
            arr.setflags(write=False)
        return cls(lam, pi, lam_tilde, pi_bar)

    @property
    def n(self) -> int:
        return self.lambdas.size

    def damage_weights(self, gamma: float) -> np.ndarray:
        """(1 - lam_tilde_{i-1})^gamma - (1 - lam_tilde_i)^gamma for i = 1..N."""
        rem = np.clip(1.0 - self.lam_tilde, 0.0, 1.0) ** gamma
        return rem[:-1] - rem[1:]

    def scaled(self, kappa: float) -> "FirmProfile":
        return FirmProfile.from_arrays(self.lambdas, self.pis * kappa)


def share_generator(n: int, theta: float, alpha: float) -> FirmProfile:
    """Power-law shares lambda_i = K / (n + 1 - i)^theta with profits pi_i = alpha lambda_i."""
    if n < 1:
        raise ParameterError("need at least one firm")
    if theta < 0 or alpha <= 0:
        raise ParameterError("theta must be >= 0 and alpha > 0")
    if n > 1 and theta == 0:
        raise ParameterError("theta = 0 gives equal profits; strict ordering requires theta > 0")
    weights = (n + 1.0 - np.arange(1, n + 1)) ** (-theta)
    lam = weights / math.fsum(weights)
    lam[-1] = 1.0 - math.fsum(lam[:-1])
    return FirmProfile.from_arrays(lam, alpha * lam)


def thresholds(profile: FirmProfile, model: Model) -> np.ndarray:
    lam, pi, lt = profile.lambdas, profile.pis, profile.lam_tilde
    m, g = model.m, model.gamma
    pi_prev = np.concatenate([[0.0], pi[:-1]])
    num = pi * (lam + lt[1:]) - pi_prev * lt[:-1]
    den = profile.damage_weights(g)
    k = model.b * (m - 1.0) / (model.a * model.ell * (g - m))
    return (k * num / den) ** (1.0 / (g - 1.0))


def payment_coeffs(profile: FirmProfile, x_hat: np.ndarray, x0: float, model: Model) -> np.ndarray:
    """Coefficients d_i of the X^m part of the payment offer; d_N = 0."""
    m = model.m
    pi = profile.pis
    steps = model.b * np.diff(pi) * np.where(x0 >= x_hat[1:], x0 ** (1 - m), x_hat[1:] ** (1 - m))
    tail = np.cumsum(steps[::-1])[::-1]
    return np.concatenate([tail, [0.0]])


def perpetuity_coeffs(profile: FirmProfile, model: Model) -> np.ndarray:
    """c_i = pi_i / (rho - mu), value per unit production of firm i's profit stream."""
    return profile.pis * model.b


def payment_process(i: int, at_exit: bool, x, profile: FirmProfile, d: np.ndarray,
                    epsilon: float, model: Model):
    """Offer Y at level x while firms 1..i-1 have exited.

    Strictly inside the i-th interval the offer is c_i x + d_i x^m - epsilon;
    at the exit instant of firm i the epsilon gap is removed.
    """
    if not 1 <= i <= profile.n:
        raise ParameterError(f"regime index {i} outside 1..{profile.n}")
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    c = profile.pis[i - 1] * model.b
    x = np.asarray(x, dtype=float)
    y = c * x + d[i - 1] * x**model.m
    out = np.where(at_exit, y, y - epsilon)
    return out if out.ndim else float(out)


def expected_payments(profile: FirmProfile, x_hat: np.ndarray, d: np.ndarray, x0: float,
                      model: Model) -> tuple[np.ndarray, float]:
    """Per-firm E[e^{-rho tau_i} Y_{tau_i}] and the share-weighted total."""
    c = perpetuity_coeffs(profile, model)
    m = model.m
    waiting = x0 < x_hat
    per = np.where(waiting,
                   c * x_hat ** (1 - m) * x0**m + d * x0**m,
                   c * x0 + d * x0**m)
    return per, math.fsum(profile.lambdas * per)


def forgone_profit_payment(profile: FirmProfile, x_hat: np.ndarray, x0: float, model: Model) -> float:
    """Sum over firms of c_i E[e^{-rho tau_i} X_{tau_i}].

    This is the total plotted in the crude-oil figures: each firm is paid the
    perpetuity value of its per-unit profit at exit, without share weights and
    without the X^m top-up.
    """
    c = perpetuity_coeffs(profile, model)
    return math.fsum(ci * discounted_level(x0, xh, model.m) for ci, xh in zip(c, x_hat))


def regulator_value(profile: FirmProfile, x_hat: np.ndarray, x0: float, model: Model) -> float:
    """Regulator value v(x0) assembled term by term from the three-indicator formula."""
    lam, pi, lt, pb = profile.lambdas, profile.pis, profile.lam_tilde, profile.pi_bar
    a, b, m, g, ell = model.a, model.b, model.m, model.gamma, model.ell
    w = profile.damage_weights(g)
    terms = []
    for k in range(profile.n):
        i = k + 1
        xh = x_hat[k]
        pi_prev = pi[k - 1] if k else 0.0
        x_prev = x_hat[k - 1] if k else 0.0
        if x0 < xh:
            terms.append((-2 * pi[k] * lam[k] * b * xh - lt[i - 1] * (pi[k] - pi_prev) * b * xh
                          - a * ell * w[k] * xh**g) * (x0 / xh) ** m)
        if x_prev <= x0 < xh:
            terms.append(b * pb[i] * x0 + a * ell * (1 - lt[i - 1]) ** g * x0**g)
        if x0 >= xh:
            terms.append(-(pi[k] * lt[i] - pi_prev * lt[i - 1]) * b * x0)
    return math.fsum(terms)


def stopping_value(profile: FirmProfile, levels, x0: float, model: Model,
                   d: np.ndarray | None = None) -> float:
    """Regulator objective when firm i exits at the hitting time of levels[i].

    Profits minus damages minus the share-weighted payments c_i X + d_i X^m,
    evaluated with the hitting-time expectations directly. With the optimal
    thresholds this reproduces ``regulator_value``.
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) < 0):
        raise ParameterError("exit levels must be non-decreasing")
    if d is None:
        d = payment_coeffs(profile, levels, x0, model)
    lam, pi = profile.lambdas, profile.pis
    w = profile.damage_weights(model.gamma)
    c = perpetuity_coeffs(profile, model)
    parts = []
    for k, y in enumerate(levels):
        parts.append(pi[k] * lam[k] * profit_integral(x0, y, model))
        parts.append(-model.ell * w[k] * damage_integral(x0, y, model))
        parts.append(-lam[k] * (c[k] * discounted_level(x0, y, model.m) + d[k] * x0**model.m))
    return math.fsum(parts)


def claim_value(y: float, x, profile: FirmProfile, x_hat: np.ndarray, d: np.ndarray,
                epsilon: float, model: Model):
    """Offer a deviating firm collects when it exits at the hitting time of y.

    At that instant the running maximum equals y, so the firms with thresholds
    below y have left. If y is itself a threshold the exit value of that regime
    applies, otherwise the epsilon-reduced interior offer; past the last
    threshold nothing is offered.
    """
    exact = np.isclose(x_hat, y, rtol=1e-12, atol=0.0)
    if exact.any():
        return payment_process(int(np.argmax(exact)) + 1, True, x, profile, d, epsilon, model)
    j = int(np.searchsorted(x_hat, y))
    if j >= profile.n:
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
    return payment_process(j + 1, False, x, profile, d, epsilon, model)


def agent_objective(i: int, y, profile: FirmProfile, x_hat: np.ndarray, d: np.ndarray,
                    epsilon: float, model: Model, x0: float | None = None):
    """Expected payoff of firm i when it claims the offer at the hitting time of y.

    Profits lambda_i pi_i X accrue until exit, then lambda_i times the offer in
    force (see ``claim_value``) is collected.
    """
    x0 = model.x0 if x0 is None else x0
    k = i - 1
    lam_i, pi_i = profile.lambdas[k], profile.pis[k]
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(ys)
    for n, yy in enumerate(ys):
        lvl = max(yy, x0)
        disc = discounted_level(x0, lvl, model.m) / lvl
        pay = claim_value(lvl, lvl, profile, x_hat, d, epsilon, model)
        out[n] = lam_i * (pi_i * profit_integral(x0, lvl, model) + pay * disc)
    return out if np.ndim(y) else float(out[0])


@dataclass(frozen=True, eq=False)
class FirmOutcome:
    expected_payment: float
    expected_exit_time: float
    immediate_exit: bool


@dataclass(frozen=True, eq=False)
class SingleMarketSolution:
    profile: FirmProfile
    model: Model
    thresholds: np.ndarray
    d_coeffs: np.ndarray
    per_firm: tuple[FirmOutcome, ...]
    total_payment: float
    value: float
    epsilon: float

    def payment(self, i: int, at_exit: bool, x):
        return payment_process(i, at_exit, x, self.profile, self.d_coeffs, self.epsilon, self.model)


def solve(profile: FirmProfile, model: Model, epsilon: float | None = None) -> SingleMarketSolution:
    x0 = model.x0
    x_hat = thresholds(profile, model)
    if np.any(np.diff(x_hat) <= 0):
        k = int(np.argmax(np.diff(x_hat) <= 0)) + 1
        raise ParameterError(
            f"exit thresholds are not increasing for this profile (x_hat_{k} = {x_hat[k - 1]:.6g} >= "
            f"x_hat_{k + 1} = {x_hat[k]:.6g}); the closed-form solution assumes firms exit in index order")
    d = payment_coeffs(profile, x_hat, x0, model)
    per, total = expected_payments(profile, x_hat, d, x0, model)
    if epsilon is None:
        epsilon = 1e-9 * profile.pis[0] * model.b * x0
    firms = tuple(
        FirmOutcome(float(p), 0.0 if x0 >= xh else expected_hitting_time(model.gbm, xh), bool(x0 >= xh))
        for p, xh in zip(per, x_hat))
    return SingleMarketSolution(profile, model, x_hat, d, firms, total,
                                regulator_value(profile, x_hat, x0, model), float(epsilon))


def first_best(model: Model, pi: float) -> tuple[float, float]:
    """Planner's exit level and value for a single firm, no compensation paid."""
    a, b, m, g, ell, x0 = model.a, model.b, model.m, model.gamma, model.ell, model.x0
    x_bar = ((m - 1) / (g - m) * b / a * pi / ell) ** (1 / (g - 1))
    if x0 >= x_bar:
        return x_bar, 0.0
    u = b * pi * x0 + a * ell * x0**g + (-b * pi * x_bar - a * ell * x_bar**g) * (x0 / x_bar) ** m
    return x_bar, u


@dataclass(frozen=True)
class AggregateReport:
    n_firms: int
    immediate_fraction: float
    immediate_share: float
    total_payment: float
    forgone_profit_payment: float
    closure_time: float


def aggregate_report(sol: SingleMarketSolution) -> AggregateReport:
    x0 = sol.model.x0
    leaving = sol.thresholds <= x0
    last = sol.thresholds[-1]
    return AggregateReport(
        n_firms=sol.profile.n,
        immediate_fraction=float(leaving.mean()),
        immediate_share=math.fsum(sol.profile.lambdas[leaving]),
        total_payment=sol.total_payment,
        forgone_profit_payment=forgone_profit_payment(sol.profile, sol.thresholds, x0, sol.model),
        closure_time=0.0 if last <= x0 else expected_hitting_time(sol.model.gbm, last),
    )
