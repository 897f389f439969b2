"""Acceptance gate: one test per criterion, each recording a pass/fail line.

The lines are printed in the terminal summary. Tolerances are the stated ones;
criteria that the model does not reproduce fail here rather than being relaxed.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np

from carbonexit import duopoly as du
from carbonexit import montecarlo as mc
from carbonexit import singlemarket as sm
from carbonexit.cli import main
from carbonexit.core import EconomyParams, GbmParams, Model, expected_discount_factor, expected_hitting_time
from carbonexit.freeboundary import (StoppingSpec, reduced_payoff, solve_stopping, threshold_oracle,
                                     verify_variational)
from carbonexit.runners import run_figures, run_single
from carbonexit.scenario import preset

from conftest import ACCEPTANCE

SEED = 20240601
NU = 0.02 - 0.5 * 0.08**2


def record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, f"criterion {k}: {detail}"


def within(value, target, tol, relative=True):
    return abs(value - target) <= (tol * abs(target) if relative else tol)


def random_model(rng, gamma=None, x0=None):
    """A parameter set strictly inside every model constraint."""
    sigma = rng.uniform(0.02, 0.3)
    mu = rng.uniform(0.55, 3.0) * sigma**2 + rng.uniform(0.001, 0.03)
    g = gamma if gamma is not None else rng.uniform(2.0, 6.0)
    big_m = g * mu + 0.5 * sigma**2 * (g * g - g)
    rho = mu + rng.uniform(0.05, 0.95) * (big_m - mu)
    x0 = x0 if x0 is not None else 10 ** rng.uniform(0, 3)
    return Model(GbmParams(mu, sigma, x0), EconomyParams(rho, g, 10 ** rng.uniform(-3, 5)))


def random_profile(rng, max_n=50):
    n = int(rng.integers(1, max_n + 1))
    if n == 1:
        return sm.FirmProfile.from_arrays([1.0], [10 ** rng.uniform(-2, 3)])
    raw = rng.uniform(0.05, 1.0, n)
    lam = raw / math.fsum(raw)
    lam[-1] = 1.0 - math.fsum(lam[:-1])
    pi = np.cumsum(rng.uniform(0.01, 2.0, n)) * 10 ** rng.uniform(-2, 3)
    return sm.FirmProfile.from_arrays(lam, pi)


def random_spec(rng):
    lam1 = rng.uniform(0.05, 0.95)
    return du.DuopolySpec(lam1, 1.0 - lam1, 10 ** rng.uniform(-1, 2), 10 ** rng.uniform(-1, 2))


# ----------------------------------------------------------------------------

def test_criterion_01_single_firm_indicators():
    start = time.perf_counter()
    rows = [run_single(cfg).rows[0] for cfg in preset("table1")]
    elapsed = time.perf_counter() - start
    T = 1e12
    targets = [
        # (x_bar, abs), (x_hat, abs), (u, rel), (v, rel), (payment, rel), (E tau_bar, rel), (E tau_hat, rel)
        [(112, 1, False), (141, 1, False), (1.2 * T, 0.10, True), (-164 * T, 0.02, True),
         (159 * T, 0.02, True), (6.5, 0.10, True), (20, 0.05, True)],
        [(109, 1, False), (138, 1, False), (0.6 * T, 0.10, True), (-13 * T, 0.05, True),
         (10 * T, 0.05, True), (5, 0.10, True), (19, 0.05, True)],
    ]
    keys = ["x_bar", "x_hat", "u", "value", "expected_payment", "E_tau_bar", "E_tau_hat"]
    misses = []
    for row, tgt in zip(rows, targets):
        for key, (t, tol, relative) in zip(keys, tgt):
            if not within(row[key], t, tol, relative):
                misses.append(f"{row['scenario']} {key}={row[key]:.4g} vs {t:.4g}")
    ok = not misses and elapsed < 1.0
    detail = (f"14 indicators in {elapsed:.3f} s; E[tau_bar] = {rows[0]['E_tau_bar']:.2f} / "
              f"{rows[1]['E_tau_bar']:.2f} y" + ("" if not misses else "; misses: " + ", ".join(misses)))
    record(1, ok, detail)


def test_criterion_02_hitting_oracles():
    cfg = mc.McConfig(n_paths=100_000, dt=1 / 365, horizon_cap=400.0, seed=SEED)
    gbm = GbmParams(0.02, 0.08, 100.0)
    levels = {112.0: 0.03, 141.0: 0.03, 119.0: 0.10, 292.0: 0.10}
    start = time.perf_counter()
    sample = mc.simulate_paths(gbm, list(levels), cfg, integrals="none")
    elapsed = time.perf_counter() - start
    worst, bad = 0.0, []
    for lvl, rho in levels.items():
        k = sample.column(lvl)
        tf = sample.truncated_fraction(k)
        disc = mc.summarize(np.exp(-rho * sample.tau[:, k]), cfg, tf)
        tau = mc.summarize(sample.tau[:, k], cfg, tf)
        for est, exact, name in ((disc, expected_discount_factor(gbm, rho, lvl), "discount"),
                                 (tau, expected_hitting_time(gbm, lvl), "E[tau]")):
            z = est.z_score(exact)
            worst = max(worst, abs(z))
            if abs(z) > 3:
                bad.append(f"{name}@{lvl:g} z={z:.2f}")
    ok = not bad and elapsed < 120
    record(2, ok, f"8 comparisons at 1e5 paths, max |z| = {worst:.2f}, {elapsed:.0f} s"
                  + ("" if not bad else "; " + ", ".join(bad)))


def test_criterion_03_incentive_compatibility():
    cfg = mc.McConfig(n_paths=20_000, dt=1 / 365, horizon_cap=400.0, seed=SEED)
    start = time.perf_counter()
    parts, ok = [], True
    for name in ("table1", "crude-n2"):
        for sc in preset(name):
            model, profile = sc.model, sc.profile()
            eps = 0.02 * profile.pis[-1] * model.b * model.x0
            sol = sm.solve(profile, model, epsilon=eps)
            for i in range(1, profile.n + 1):
                x_hat = sol.thresholds[i - 1]
                grid = x_hat * (1.0 + 0.01 * np.arange(-10, 11))
                offer = (lambda y, x: sm.claim_value(y, x, profile, sol.thresholds, sol.d_coeffs, eps, model))
                res = mc.estimate_agent_value(model, profile.pis[i - 1], profile.lambdas[i - 1], offer, grid, cfg)
                closed = grid[int(np.argmax(sm.agent_objective(i, grid, profile, sol.thresholds, sol.d_coeffs,
                                                               eps, model)))]
                off_mc = res.argmax / x_hat - 1
                off_cf = closed / x_hat - 1
                good = abs(off_mc) <= 0.02 + 1e-12 and abs(off_cf) <= 0.02 + 1e-12 and not res.at_edge
                ok = ok and good
                parts.append(f"{sc.name}/firm{i}: {off_mc:+.0%} (closed form {off_cf:+.0%})")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 300
    record(3, ok, "argmax offset from x_hat on a 1% grid: " + "; ".join(parts) + f"; {elapsed:.0f} s")


def test_criterion_04_threshold_ordering():
    rng = np.random.default_rng(SEED)
    violations = 0
    for _ in range(1000):
        profile = random_profile(rng)
        model = random_model(rng)
        if np.any(np.diff(sm.thresholds(profile, model)) <= 0):
            violations += 1
    family = 0
    for _ in range(1000):
        p = sm.share_generator(int(rng.integers(2, 51)), rng.uniform(0.05, 3.0), 10 ** rng.uniform(-2, 3))
        family += bool(np.any(np.diff(sm.thresholds(p, random_model(rng))) <= 0))
    record(4, violations == 0,
           f"{violations}/1000 random valid profiles violate increasing thresholds "
           f"(power-law share family: {family}/1000)")


def test_criterion_05_free_boundary():
    rng = np.random.default_rng(SEED + 5)
    worst_rel, worst_paste, fails = 0.0, 0.0, 0
    for _ in range(100):
        model = random_model(rng, x0=1.0)
        alpha = 10 ** rng.uniform(-1, 2)
        spec = StoppingSpec(alpha, model.ell, -rng.uniform(0, 3) * alpha * model.b,
                            rng.uniform(-1, 1) * alpha, rng.uniform(-1.0, 0.9) * model.ell * model.a)
        sol = solve_stopping(spec, model)
        lo = min(model.x0, sol.x_star / 10)
        res = threshold_oracle(reduced_payoff(spec, model), lo, model.m, y_lo=lo, y_hi=50 * sol.x_star)
        rel = abs(res.y_star / sol.x_star - 1)
        rep = verify_variational(sol)
        worst_rel = max(worst_rel, rel)
        worst_paste = max(worst_paste, rep.pasting / rep.h)
        if res.at_edge or rel > 1e-3 or rep.pasting > rep.h or not rep.ok:
            fails += 1
    record(5, fails == 0, f"100 specs: max |oracle/closed - 1| = {worst_rel:.1e}, "
                          f"max pasting residual / h = {worst_paste:.1e}, {fails} failures")


def test_criterion_06_duopoly_structure():
    (cfg,) = preset("table2")
    model = cfg.model
    spec = du.DuopolySpec(cfg.duopoly.lambda1, cfg.duopoly.lambda2, cfg.duopoly.pi1, cfg.duopoly.pi2)
    nash = du.classify_nash(spec, model)
    two = len(nash.equilibria) == 2 and {e.first_exit for e in nash.equilibria} == {1, 2}

    life = lambda x: math.log(x / 100.0) / NU
    pairs = {(119, 292): (10, 63), (135, 339): (17, 72)}
    lifetimes_ok = all(within(life(a), ta, 1, False) and within(life(b), tb, 1, False)
                       for (a, b), (ta, tb) in pairs.items())
    central = du.central_solution(spec, model, allow_immediate=True)
    central_ok = central.immediate == (2,) and within(life(184), 36, 1, False)

    # reference values; the exit-indifference entries of the central block repeat the Nash ones
    reference = {"nash": [135, 175, 292, 119, 160, 339], "central": [85, None, 184, 75, None, 213]}
    ratios = []
    for regime, values in reference.items():
        ours = du.duopoly_thresholds(spec, model, regime).as_array()
        ratios += [v / o for v, o in zip(values, ours) if v is not None]
    z_ok = all(abs(r - 1) <= 0.10 for r in ratios)
    ours_central = life(central.equilibria[0].levels[0])
    detail = (f"Nash equilibria: {len(nash.equilibria)}; lifetimes from reference thresholds "
              f"{'match' if lifetimes_ok else 'differ'}; central: country 2 immediate = "
              f"{central.immediate == (2,)}, country 1 at 36.3 y from the reference level "
              f"({ours_central:.1f} y from ours); z reference/ours in "
              f"[{min(ratios):.3f}, {max(ratios):.3f}] vs +-10%")
    record(6, two and lifetimes_ok and central_ok and z_ok, detail)


def test_criterion_07_regime_scalings():
    rng = np.random.default_rng(SEED + 7)
    worst = 0.0
    for _ in range(1000):
        model = random_model(rng)
        spec = random_spec(rng)
        g = model.gamma
        nash = du.duopoly_thresholds(spec, model, "nash").as_array()
        for regime, factor in (("individual", 2.0), ("central", 4.0)):
            z = du.duopoly_thresholds(spec, model, regime).as_array()
            worst = max(worst, float(np.max(np.abs(z / (factor ** (-1 / (g - 1)) * nash) - 1))))
    record(7, worst <= 1e-12, f"1000 specs x 6 thresholds x 2 regimes, max relative error {worst:.1e}")


def test_criterion_08_equilibrium_soundness():
    rng = np.random.default_rng(SEED + 8)
    not_fixed, extra, missing, total = 0, 0, 0, 0
    for _ in range(200):
        spec = random_spec(rng)
        model = random_model(rng)
        th = du.duopoly_thresholds(spec, model)
        model = model.with_x0(0.5 * min(th.country1.z_low, th.country2.z_low))
        out = du.classify_nash(spec, model)
        for eq in out.equilibria:
            total += 1
            x1, x2 = eq.levels
            if x1 not in du.best_response(1, x2, out.thresholds, model.x0) or \
                    x2 not in du.best_response(2, x1, out.thresholds, model.x0):
                not_fixed += 1
        z = out.thresholds.as_array()
        base = np.geomspace(model.x0 * 1.001, 3 * float(np.max(z)), 300)
        # lattice points crowding a threshold would tie with it on a flat payoff
        crowded = np.any(np.abs(base[:, None] / z[None, :] - 1) < 1e-2, axis=1)
        grid = np.unique(np.concatenate([base[~crowded], z]))
        found = set(du.lattice_equilibria(spec, model, grid))
        expected = {e.levels for e in out.equilibria}
        extra += len(found - expected)
        missing += len(expected - found)
    record(8, not_fixed == 0 and extra == 0 and missing == 0,
           f"200 specs, {total} equilibria: {not_fixed} not fixed points, lattice scan found "
           f"{extra} extra and missed {missing}")


def test_criterion_09_utility_ordering():
    rng = np.random.default_rng(SEED + 9)
    violations = 0
    for _ in range(100):
        model = random_model(rng, gamma=2.0)
        spec = du.DuopolySpec.proportional(rng.uniform(0.05, 0.5), 10 ** rng.uniform(-1, 2))
        th = du.duopoly_thresholds(spec, model, "central")
        model = model.with_x0(0.5 * min(th.country1.z_low, th.country2.z_low))
        rep = du.compare_regimes(spec, model)
        violations += not rep.orderings["utility"]
    record(9, violations == 0, f"{violations}/100 gamma=2 proportional specs violate u_Nash <= u_hat <= u_bar")


def test_criterion_10_figure_series():
    start = time.perf_counter()
    (f1,) = preset("fig1")
    (f2,) = preset("fig2")
    ns = run_figures(f1)
    thetas = run_figures(f2)
    n100 = run_figures(f1, "n", [100]).rows[0]
    elapsed = time.perf_counter() - start

    n = np.array(ns.column("n"), dtype=float)
    pay = np.array(ns.column("forgone_profit_payment"))
    closure = np.array(ns.column("closure_time"))
    slope = np.diff(pay) / np.diff(n)
    n_ok = bool(np.all(np.diff(pay) > 0) and np.all(np.diff(slope) <= 0) and np.all(np.diff(closure) > 0))

    # the same property on consecutive integers, reported for information
    step = np.array(run_figures(f1, "n", list(range(1, 101))).column("forgone_profit_payment"))
    int_sign_changes = int(np.sum(np.diff(np.sign(np.diff(np.diff(step)))) != 0))

    tp = thetas.column("forgone_profit_payment")
    tc = thetas.column("closure_time")
    theta_ok = (within(tp[0], 21e12, 0.15) and within(tp[-1], 16.5e12, 0.15)
                and within(tc[0] / tc[-1], 3.0, 0.20))
    frac_ok = within(n100["immediate_fraction"], 0.7, 0.1, False)
    ok = n_ok and theta_ok and frac_ok and elapsed < 60
    record(10, ok,
           f"N-sweep increasing with decreasing marginal payment per firm: {n_ok} "
           f"(integer-step second differences change sign {int_sign_changes} times); "
           f"theta-sweep {tp[0] / 1e12:.2f}T -> {tp[-1] / 1e12:.2f}T, closure factor {tc[0] / tc[-1]:.2f}; "
           f"N=100 immediate fraction {n100['immediate_fraction']:.2f} vs 0.7 +- 0.1; {elapsed:.1f} s")


def _csv(tmp_path, name, threads=None):
    path = tmp_path / name
    argv = ["mc-verify", "--preset", "crude-n2", "--paths", "4000", "--seed", "7", "--csv", str(path), "--quiet"]
    if threads is None:
        assert main(argv) == 0
    else:
        env = dict(os.environ, NUMBA_NUM_THREADS="4", CARBONEXIT_THREADS=str(threads))
        subprocess.run([sys.executable, "-m", "carbonexit", *argv], env=env, check=True)
    return path.read_bytes()


def test_criterion_11_determinism(tmp_path):
    same = _csv(tmp_path, "a.csv") == _csv(tmp_path, "b.csv")
    threads = _csv(tmp_path, "t1.csv", 1) == _csv(tmp_path, "t4.csv", 4)
    closed = [tmp_path / f"p{i}.csv" for i in range(2)]
    for path in closed:
        assert main(["preset", "table2", "--csv", str(path), "--quiet"]) == 0
    same_closed = closed[0].read_bytes() == closed[1].read_bytes()
    record(11, same and threads and same_closed,
           f"repeat runs byte-identical: {same and same_closed}; 1 vs 4 worker threads identical: {threads} "
           f"({os.cpu_count()} CPU visible)")
