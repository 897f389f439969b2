"""Optimal stopping with power payoffs under GBM: closed form and numeric oracles.

The problem is

    u(x) = sup_tau E[ int_0^tau e^{-rho t} (alpha X - beta X^gamma) dt
                      + e^{-rho tau} (a1 X + a2 X^m + a3 X^gamma) ]

whose optimal rule is to stop the first time X reaches a level x_star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Model, ParameterError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class StoppingSpec:
    alpha: float
    beta: float
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0

    def running(self, x, gamma):
        return self.alpha * x - self.beta * np.power(x, gamma)

    def terminal(self, x, m, gamma):
        return self.a1 * x + self.a2 * np.power(x, m) + self.a3 * np.power(x, gamma)

    def check(self, model: Model) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError("alpha and beta must be positive")
        if self.a1 > 0:
            raise ParameterError(f"a1 must be <= 0 (got {self.a1})")
        if not self.beta * model.a - self.a3 > 0:
            raise ParameterError("beta*a - a3 must be positive")


@dataclass(frozen=True)
class FreeBoundarySolution:
    x_star: float
    coeff: float  # multiplier of (x/x_star)^m on the continuation branch
    spec: StoppingSpec
    model: Model

    def value_at(self, x):
        """Piecewise value: continuation below x_star, payoff at and above."""
        x = np.asarray(x, dtype=float)
        m, g = self.model.m, self.model.gamma
        s = self.spec
        cont = (s.alpha * self.model.b * x + s.beta * self.model.a * np.power(x, g)
                + self.coeff * np.power(x / self.x_star, m))
        out = np.where(x < self.x_star, cont, s.terminal(x, m, g))
        return out if out.ndim else float(out)

    def payoff(self, x):
        return self.spec.terminal(np.asarray(x, dtype=float), self.model.m, self.model.gamma)


def optimal_level(spec: StoppingSpec, model: Model) -> float:
    m, g = model.m, model.gamma
    ratio = (model.b * spec.alpha - spec.a1) / (model.a * spec.beta - spec.a3)
    return ((m - 1.0) / (g - m) * ratio) ** (1.0 / (g - 1.0))


def assemble(spec: StoppingSpec, model: Model, x_star: float) -> FreeBoundarySolution:
    """Build the two-branch value for an arbitrary boundary (optimal or not)."""
    m, g = model.m, model.gamma
    g_star = spec.terminal(x_star, m, g)
    coeff = g_star - spec.alpha * model.b * x_star - spec.beta * model.a * x_star**g
    return FreeBoundarySolution(float(x_star), float(coeff), spec, model)


def solve_stopping(spec: StoppingSpec, model: Model) -> FreeBoundarySolution:
    spec.check(model)
    return assemble(spec, model, optimal_level(spec, model))


def reduced_payoff(spec: StoppingSpec, model: Model) -> Callable:
    """g_v(y) = (a1 - b alpha) y + (a3 - beta a) y^gamma: the payoff left once the
    running reward is absorbed into the value."""
    a, b, g = model.a, model.b, model.gamma

    def g_v(y):
        y = np.asarray(y, dtype=float)
        return (spec.a1 - b * spec.alpha) * y + (spec.a3 - spec.beta * a) * np.power(y, g)

    return g_v


@dataclass(frozen=True)
class OracleResult:
    y_star: float
    value: float
    at_edge: bool
    evaluations: int


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8,
               max_iter: int = 500) -> tuple[float, float, int]:
    """Golden-section maximisation of a unimodal f on [lo, hi] to absolute width tol."""
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    n = 2
    while hi - lo > tol and n < max_iter:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        n += 1
    x = 0.5 * (lo + hi)
    return x, f(x), n + 1


def threshold_oracle(g_v: Callable, x0: float, m: float, y_lo: float | None = None,
                     y_hi: float | None = None, tol: float = 1e-8,
                     n_scan: int = 1024) -> OracleResult:
    """Maximise y -> g_v(y) (x0/y)^m over hitting levels by brute force.

    A log-spaced scan locates the best cell; golden-section search in log y
    then refines it to relative tolerance ``tol``. ``at_edge`` is set when the
    maximiser sits on the bracket boundary, i.e. the bracket is too small.
    """
    y_lo = x0 if y_lo is None else y_lo
    y_hi = 50.0 * x0 if y_hi is None else y_hi
    if not (0 < x0 <= y_lo < y_hi):
        raise ParameterError("need 0 < x0 <= y_lo < y_hi")

    def obj(log_y):
        y = math.exp(log_y)
        return float(g_v(y)) * (x0 / y) ** m

    grid = np.linspace(math.log(y_lo), math.log(y_hi), n_scan)
    ys = np.exp(grid)
    vals = np.asarray(g_v(ys), dtype=float) * (x0 / ys) ** m
    k = int(np.argmax(vals))
    if k == 0 or k == n_scan - 1:
        return OracleResult(float(ys[k]), float(vals[k]), True, n_scan)
    s, v, n = golden_max(obj, grid[k - 1], grid[k + 1], tol=tol)
    return OracleResult(math.exp(s), v, False, n_scan + n)


@dataclass(frozen=True)
class VerificationReport:
    dominance: float      # max(g - value) over the grid, scaled
    pde_continuation: float  # max |rho phi - L phi - f| below x_star, scaled
    pde_stopped: float    # max(-(rho g - L g - f)) above x_star, scaled
    pasting: float        # |phi'(x*-) - phi'(x*+)| / scale
    h: float              # log-grid spacing
    tol: float

    @property
    def checks(self) -> dict[str, bool]:
        return {
            "dominance": self.dominance <= self.tol,
            "pde_continuation": self.pde_continuation <= self.tol,
            "pde_stopped": self.pde_stopped <= self.tol,
            "pasting": self.pasting <= self.tol,
        }

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _log_generator(phi, s, h, nu, sigma):
    """(rho-free) generator mu x phi' + sigma^2/2 x^2 phi'' in log coordinates."""
    d1 = (phi(np.exp(s + h)) - phi(np.exp(s - h))) / (2 * h)
    d2 = (phi(np.exp(s + h)) - 2 * phi(np.exp(s)) + phi(np.exp(s - h))) / (h * h)
    return nu * d1 + 0.5 * sigma**2 * d2


def verify_variational(sol: FreeBoundarySolution, grid=None, n: int = 2000,
                       tol: float | None = None) -> VerificationReport:
    """Finite-difference check of the variational inequality on a log grid.

    Residuals are divided by the largest closed-form term on the grid so that
    the tolerance is unit-free; the default tolerance is 50 h^2 (the FD truncation
    order) floored at 1e-8.
    """
    model, spec = sol.model, sol.spec
    mu, sigma, rho = model.gbm.mu, model.gbm.sigma, model.econ.rho
    g = model.gamma
    nu = mu - 0.5 * sigma**2
    if grid is None:
        grid = np.geomspace(sol.x_star / 20.0, 2.0 * sol.x_star, n)
    grid = np.asarray(grid, dtype=float)
    s = np.log(grid)
    h = float(np.min(np.diff(s)))
    if tol is None:
        tol = max(50.0 * h * h, 1e-8)

    phi = sol.value_at
    vals = phi(grid)
    payoff = sol.payoff(grid)
    # the closed form is a difference of large terms; scale by the largest of them
    terms = (vals, payoff, spec.alpha * model.b * grid, spec.beta * model.a * grid**g)
    scale = max(max(float(np.max(np.abs(t))) for t in terms), 1e-300)

    dominance = max(float(np.max(payoff - vals)), 0.0) / scale

    f = spec.running(grid, g)
    # keep stencils off the kink
    cont = grid * math.exp(h) < sol.x_star
    stop = grid * math.exp(-h) > sol.x_star
    res_c = rho * vals - _log_generator(phi, s, h, nu, sigma) - f
    pde_c = float(np.max(np.abs(res_c[cont]))) / scale if cont.any() else 0.0
    res_s = rho * payoff - _log_generator(sol.payoff, s, h, nu, sigma) - f
    pde_s = max(float(np.max(-res_s[stop])), 0.0) / scale if stop.any() else 0.0

    # one-sided second-order derivatives in log space at the boundary
    xs = sol.x_star
    ls = math.log(xs)
    left = (3 * phi(xs) - 4 * phi(math.exp(ls - h)) + phi(math.exp(ls - 2 * h))) / (2 * h)
    right = (-3 * phi(xs) + 4 * phi(math.exp(ls + h)) - phi(math.exp(ls + 2 * h))) / (2 * h)
    pasting = abs(left - right) / scale
    return VerificationReport(dominance, pde_c, pde_s, pasting, h, tol)
