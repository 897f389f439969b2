"""Brute-force Monte Carlo oracle for hitting-time functionals of GBM.

Every path draws its normals from its own counter-based stream keyed by
(seed, path index), so path k is identical whatever the path count or the
number of threads. One pass over a sorted list of levels records, per path and
level, the hitting time and the discounted integrals of X and X^gamma up to
it; all functionals are assembled from those arrays with numpy.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from numba import njit, prange

from .core import GbmParams, Model, ParameterError

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the portable layer; avoids probing TBB, which warns on older installs
    numba.config.THREADING_LAYER = "workqueue"

TRUNCATION_WARN = 1e-3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_BRIDGE_SALT = np.uint64(0xD1B54A32D192ED03)
_TWO53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _uniform(key, counter):
    """Uniform in (0, 1) from the stream `key` at position `counter`."""
    z = _mix(key + (np.uint64(counter) + np.uint64(1)) * _GOLDEN)
    return (float(z >> np.uint64(11)) + 0.5) * _TWO53


@njit(cache=True)
def _path_key(seed, path):
    return _mix(_mix(np.uint64(seed)) ^ (np.uint64(path) * _GOLDEN + _BRIDGE_SALT))


@njit(cache=True, parallel=True)
def _kernel(x0, mu, sigma, rho, gamma, log_levels, n_paths, dt, n_steps, seed, bridge,
            antithetic, want_x, want_xg, tau, int_x, int_xg, hit, log_end):
    n_lev = log_levels.size
    drift = (mu - 0.5 * sigma * sigma) * dt
    vol = sigma * math.sqrt(dt)
    inv_bridge = 2.0 / (sigma * sigma * dt)
    lx0 = math.log(x0)
    for p in prange(n_paths):
        stream = p // 2 if antithetic else p
        sign = -1.0 if (antithetic and (p % 2 == 1)) else 1.0
        key = _path_key(seed, stream)
        bkey = _mix(key ^ _BRIDGE_SALT)
        k = 0
        # levels at or below x0 are hit at time zero
        while k < n_lev and log_levels[k] <= lx0:
            tau[p, k] = 0.0
            hit[p, k] = True
            if want_x:
                int_x[p, k] = 0.0
            if want_xg:
                int_xg[p, k] = 0.0
            k += 1
        lx = lx0
        ix = 0.0
        ixg = 0.0
        f_x = x0
        f_xg = math.exp(gamma * lx0)
        z_spare = 0.0
        g_x = 0.0
        g_xg = 0.0
        step = 0
        while k < n_lev and step < n_steps:
            if step % 2 == 0:
                u1 = _uniform(key, step)
                u2 = _uniform(key, step + 1)
                r = math.sqrt(-2.0 * math.log(u1))
                z = r * math.cos(2.0 * math.pi * u2)
                z_spare = r * math.sin(2.0 * math.pi * u2)
            else:
                z = z_spare
            t0 = step * dt
            lxn = lx + drift + vol * sign * z
            t1 = t0 + dt
            if want_x:
                g_x = math.exp(lxn - rho * t1)
            if want_xg:
                g_xg = math.exp(gamma * lxn - rho * t1)
            u_b = -1.0
            while k < n_lev:
                ll = log_levels[k]
                if lxn >= ll:
                    frac = (ll - lx) / (lxn - lx)
                else:
                    if not bridge:
                        break
                    expo = (ll - lx) * (ll - lxn) * inv_bridge
                    if expo > 40.0:
                        break
                    if u_b < 0.0:
                        u_b = _uniform(bkey, step)
                    if u_b >= math.exp(-expo):
                        break
                    frac = 0.5
                th = t0 + frac * dt
                tau[p, k] = th
                hit[p, k] = True
                h = frac * dt
                if want_x:
                    int_x[p, k] = ix + 0.5 * h * (f_x + math.exp(ll - rho * th))
                if want_xg:
                    int_xg[p, k] = ixg + 0.5 * h * (f_xg + math.exp(gamma * ll - rho * th))
                k += 1
            if want_x:
                ix += 0.5 * dt * (f_x + g_x)
                f_x = g_x
            if want_xg:
                ixg += 0.5 * dt * (f_xg + g_xg)
                f_xg = g_xg
            lx = lxn
            step += 1
        while k < n_lev:
            tau[p, k] = step * dt
            hit[p, k] = False
            if want_x:
                int_x[p, k] = ix
            if want_xg:
                int_xg[p, k] = ixg
            k += 1
        log_end[p] = lx


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    dt: float = 1.0 / 365.0
    horizon_cap: float = 400.0
    seed: int = 20240601
    bridge_correction: bool = True
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ParameterError("n_paths must be at least 1")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if not self.horizon_cap >= self.dt:
            raise ParameterError("horizon_cap must be at least dt")
        if self.antithetic and self.n_paths % 2:
            raise ParameterError("antithetic sampling needs an even path count")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon_cap / self.dt - 1e-9))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_effective: int
    truncated_fraction: float

    def agrees(self, value: float, k: float = 3.0) -> bool:
        """|mean - value| <= k stderr (exact match needed when stderr is 0)."""
        return abs(self.mean - value) <= k * self.stderr + 1e-12 * max(abs(value), abs(self.mean))

    def z_score(self, value: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == value else math.inf
        return (self.mean - value) / self.stderr


@dataclass(frozen=True, eq=False)
class PathSample:
    """Per-path, per-level simulation output (levels sorted ascending)."""

    levels: np.ndarray
    tau: np.ndarray
    int_x: np.ndarray
    int_xg: np.ndarray
    hit: np.ndarray
    x_end: np.ndarray
    x0: float
    rho: float
    gamma: float
    cfg: McConfig

    def column(self, level: float) -> int:
        k = int(np.searchsorted(self.levels, level))
        if k >= self.levels.size or not np.isclose(self.levels[k], level, rtol=1e-14, atol=0):
            raise KeyError(f"level {level} was not simulated")
        return k

    def x_tau(self, k: int) -> np.ndarray:
        # a path started at or above the level exits at x0 itself
        return np.where(self.hit[:, k], max(self.levels[k], self.x0), self.x_end)

    def discount(self, k: int) -> np.ndarray:
        return np.exp(-self.rho * self.tau[:, k])

    def truncated_fraction(self, cols) -> float:
        cols = np.atleast_1d(cols)
        return float(np.mean(~np.all(self.hit[:, cols], axis=1)))


def _threads() -> int | None:
    env = os.environ.get("CARBONEXIT_THREADS")
    if not env:
        return None
    n = int(env)
    if n < 1:
        raise ParameterError("CARBONEXIT_THREADS must be a positive integer")
    return min(n, numba.config.NUMBA_NUM_THREADS)


def simulate_paths(gbm: GbmParams, levels, cfg: McConfig, rho: float = 0.0, gamma: float = 2.0,
                   integrals: str = "both", threads: int | None = None) -> PathSample:
    """Simulate cfg.n_paths paths until every level is hit or the horizon runs out.

    ``integrals`` selects which discounted integrals are accumulated: "none",
    "x" or "both" (X and X^gamma). ``threads`` overrides the worker count; the
    output does not depend on it.
    """
    if not (gbm.sigma > 0 and gbm.x0 > 0):
        raise ParameterError("need sigma > 0 and x0 > 0")
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size == 0 or np.any(levels <= 0):
        raise ParameterError("levels must be a non-empty 1-D array of positive numbers")
    order = np.argsort(levels, kind="stable")
    uniq = np.unique(levels[order])
    want_x = integrals in ("x", "both")
    want_xg = integrals == "both"
    if integrals not in ("none", "x", "both"):
        raise ParameterError(f"unknown integrals option {integrals!r}")
    n, lv = cfg.n_paths, uniq.size
    tau = np.empty((n, lv))
    hit = np.empty((n, lv), dtype=np.bool_)
    int_x = np.empty((n, lv) if want_x else (n, 0))
    int_xg = np.empty((n, lv) if want_xg else (n, 0))
    log_end = np.empty(n)
    threads = threads if threads is not None else _threads()
    previous = numba.get_num_threads()
    if threads is not None:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    try:
        _kernel(float(gbm.x0), float(gbm.mu), float(gbm.sigma), float(rho), float(gamma),
                np.log(uniq), n, float(cfg.dt), cfg.n_steps, np.uint64(cfg.seed),
                bool(cfg.bridge_correction), bool(cfg.antithetic), want_x, want_xg,
                tau, int_x, int_xg, hit, log_end)
    finally:
        numba.set_num_threads(previous)
    return PathSample(uniq, tau, int_x, int_xg, hit, np.exp(log_end), float(gbm.x0), float(rho), float(gamma), cfg)


def summarize(values: np.ndarray, cfg: McConfig, truncated_fraction: float = 0.0,
              label: str = "estimate") -> McEstimate:
    """Mean and standard error of per-path values; antithetic pairs are averaged first."""
    values = np.asarray(values, dtype=float)
    if cfg.antithetic:
        values = 0.5 * (values[0::2] + values[1::2])
    n = values.size
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    if truncated_fraction > TRUNCATION_WARN:
        warnings.warn(f"{label}: {truncated_fraction:.3%} of paths reached the horizon cap",
                      RuntimeWarning, stacklevel=3)
    return McEstimate(mean, stderr, n, truncated_fraction)


def estimate_hitting(gbm: GbmParams, x_hat, rho: float, cfg: McConfig) -> list[tuple[McEstimate, McEstimate]]:
    """(E[exp(-rho tau)], E[tau]) for each level in ``x_hat`` from one shared set of paths."""
    levels = np.atleast_1d(np.asarray(x_hat, dtype=float))
    if np.any(levels <= gbm.x0):
        raise ParameterError("hitting levels must exceed x0")
    sample = simulate_paths(gbm, levels, cfg, rho=rho, integrals="none")
    out = []
    for lvl in levels:
        k = sample.column(lvl)
        tf = sample.truncated_fraction(k)
        out.append((summarize(sample.discount(k), cfg, tf, f"E[exp(-rho tau)] at {lvl:g}"),
                    summarize(sample.tau[:, k], cfg, tf, f"E[tau] at {lvl:g}")))
    return out


@dataclass(frozen=True, eq=False)
class AgentSearch:
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    argmax: float
    at_edge: bool
    truncated_fraction: float


def estimate_agent_value(model: Model, profit_rate: float, share: float,
                         payment: Callable[[float, np.ndarray], np.ndarray],
                         threshold_grid, cfg: McConfig) -> AgentSearch:
    """Grid search of a firm's exit level against a payment offer.

    For each candidate y the firm earns share*profit_rate*X until the hitting
    time of y and then claims share*payment(y, X_tau). Paths are common to all
    candidates, so differences between neighbouring levels are sharp.
    """
    grid = np.asarray(threshold_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("threshold grid must be strictly increasing")
    sample = simulate_paths(model.gbm, grid, cfg, rho=model.econ.rho, integrals="x")
    vals = np.empty(grid.size)
    errs = np.empty(grid.size)
    for k, y in enumerate(grid):
        xt = sample.x_tau(k)
        claim = np.where(sample.hit[:, k], payment(y, xt), 0.0)
        per_path = share * (profit_rate * sample.int_x[:, k] + sample.discount(k) * claim)
        est = summarize(per_path, cfg, 0.0)
        vals[k], errs[k] = est.mean, est.stderr
    j = int(np.argmax(vals))
    tf = sample.truncated_fraction(np.arange(grid.size))
    if tf > TRUNCATION_WARN:
        warnings.warn(f"agent search: {tf:.3%} of paths reached the horizon cap", RuntimeWarning, stacklevel=2)
    return AgentSearch(grid, vals, errs, float(grid[j]), j in (0, grid.size - 1), tf)


def _single_values(sample: PathSample, profile, x_hat, d, model: Model) -> np.ndarray:
    lam, pi = profile.lambdas, profile.pis
    c = pi * model.b
    w = profile.damage_weights(model.gamma)
    total = np.zeros(sample.tau.shape[0])
    for i, lvl in enumerate(x_hat):
        k = sample.column(lvl)
        xt = sample.x_tau(k)
        pay = np.where(sample.hit[:, k], c[i] * xt + d[i] * xt**model.m, 0.0)
        total += pi[i] * lam[i] * sample.int_x[:, k]
        total -= model.ell * w[i] * sample.int_xg[:, k]
        total -= lam[i] * sample.discount(k) * pay
    return total


def _duopoly_values(sample: PathSample, spec, levels, model: Model, mode: str) -> np.ndarray:
    x1, x2 = levels
    k1, k2 = sample.column(x1), sample.column(x2)
    dmg = _damage_paths(sample, spec, x1, x2, model)
    parts = []
    for i, k in ((1, k1), (2, k2)):
        pl = spec.pi(i) * spec.lam(i)
        exit_val = np.where(sample.hit[:, k], pl * model.b * sample.x_tau(k), 0.0) * sample.discount(k)
        parts.append((pl * sample.int_x[:, k], exit_val))
    if mode == "duopoly-J1":
        return parts[0][0] - parts[0][1] - 0.5 * dmg
    if mode == "duopoly-J2":
        return parts[1][0] - parts[1][1] - 0.5 * dmg
    if mode in ("duopoly-nash", "duopoly-individual"):
        return parts[0][0] - parts[0][1] + parts[1][0] - parts[1][1] - dmg
    if mode == "duopoly-central":
        return parts[0][0] + parts[1][0] - dmg
    raise ParameterError(f"unknown mode {mode!r}")


def _damage_paths(sample: PathSample, spec, x1: float, x2: float, model: Model) -> np.ndarray:
    k1, k2 = sample.column(x1), sample.column(x2)
    # the later exiter keeps producing alone between the two hitting times
    first_1 = sample.tau[:, k1] <= sample.tau[:, k2]
    g = model.gamma
    w_late = np.where(first_1, spec.lambda2**g, spec.lambda1**g)
    i_first = np.where(first_1, sample.int_xg[:, k1], sample.int_xg[:, k2])
    i_second = np.where(first_1, sample.int_xg[:, k2], sample.int_xg[:, k1])
    return model.ell * ((1.0 - w_late) * i_first + w_late * i_second)


MODES = ("single", "duopoly-J1", "duopoly-J2", "duopoly-nash", "duopoly-individual", "duopoly-central")


def estimate_regulator_value(model: Model, market, thresholds, cfg: McConfig, mode: str = "single",
                             d=None) -> McEstimate:
    """Pathwise profit - damage - compensation at the hitting times of ``thresholds``.

    ``market`` is a FirmProfile for mode "single" (with optional payment
    coefficients ``d``; computed from the thresholds when omitted) and a
    DuopolySpec otherwise, with thresholds = (x1, x2).
    """
    from . import singlemarket

    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    levels = np.asarray(thresholds, dtype=float)
    sample = simulate_paths(model.gbm, levels, cfg, rho=model.econ.rho, gamma=model.gamma)
    if mode == "single":
        if d is None:
            d = singlemarket.payment_coeffs(market, levels, model.x0, model)
        vals = _single_values(sample, market, levels, d, model)
    else:
        vals = _duopoly_values(sample, market, levels, model, mode)
    cols = [sample.column(v) for v in levels]
    return summarize(vals, cfg, sample.truncated_fraction(cols), f"regulator value ({mode})")


def damage_estimate(model: Model, spec, tau1_threshold: float, tau2_threshold: float,
                    cfg: McConfig) -> McEstimate:
    """D(x0, tau_1, tau_2) for the hitting times of the two thresholds."""
    if not (tau1_threshold > 0 and tau2_threshold > 0):
        raise ParameterError("thresholds must be positive")
    sample = simulate_paths(model.gbm, [tau1_threshold, tau2_threshold], cfg,
                            rho=model.econ.rho, gamma=model.gamma)
    vals = _damage_paths(sample, spec, tau1_threshold, tau2_threshold, model)
    cols = [sample.column(tau1_threshold), sample.column(tau2_threshold)]
    return summarize(vals, cfg, sample.truncated_fraction(cols), "damage")


def moment_estimate(gbm: GbmParams, t: float, power: float, cfg: McConfig) -> McEstimate:
    """E[X_t^power] from the simulator's own stepping, a check on the generator."""
    steps = int(round(t / cfg.dt))
    if steps < 1 or abs(steps * cfg.dt - t) > 1e-9 * max(t, 1.0):
        raise ParameterError("t must be a positive multiple of dt")
    sub = McConfig(cfg.n_paths, cfg.dt, steps * cfg.dt, cfg.seed, False, cfg.antithetic)
    # a level no path can reach keeps every path running to the horizon
    sample = simulate_paths(gbm, [1e300], sub, integrals="none")
    return summarize(sample.x_end**power, sub, 0.0)
