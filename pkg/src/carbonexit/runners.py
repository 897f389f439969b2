"""Scenario runners: turn a parsed ScenarioConfig into a ResultTable.

Each runner is pure given its config (Monte Carlo uses the configured seed),
so two runs of the same scenario emit byte-identical CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import duopoly as du
from . import montecarlo as mc
from . import singlemarket as sm
from .core import Model, NumericalError, ParameterError, expected_discount_factor, expected_hitting_time
from .scenario import ConfigError, ResultTable, ScenarioConfig

#: cap on simulated (path, level) cells so verification stays within memory
MAX_MC_CELLS = 40_000_000

SINGLE_COLUMNS = [
    "scenario", "firm", "lambda", "pi", "x_hat", "immediate_exit", "discount_factor", "E_tau_hat",
    "expected_payment", "x_bar", "u", "E_tau_bar", "value", "total_payment", "forgone_profit_payment",
    "immediate_fraction", "immediate_share", "closure_time",
]
SINGLE_MC_COLUMNS = [
    "mc_discount_factor", "mc_discount_factor_stderr", "mc_E_tau_hat", "mc_E_tau_hat_stderr",
    "mc_value", "mc_value_stderr",
]
DUOPOLY_COLUMNS = [
    "scenario", "record", "regime", "country", "z_low", "z_mid", "z_high", "first_exit", "x1", "x2",
    "utility", "lifetime1", "lifetime2", "immediate1", "immediate2", "check", "holds",
]
FIGURE_COLUMNS = [
    "scenario", "vary", "n", "theta", "immediate_fraction", "immediate_share", "total_payment",
    "forgone_profit_payment", "value", "closure_time",
]
VERIFY_COLUMNS = ["scenario", "quantity", "level", "closed_form", "mc_mean", "mc_stderr", "z_score", "pass"]


def _finite(table: ResultTable) -> ResultTable:
    for row in table.rows:
        for key, val in row.items():
            if isinstance(val, float) and not math.isfinite(val):
                raise NumericalError(f"non-finite {key} in scenario {row.get('scenario')!r}")
    return table


def _exit_time(model: Model, level: float) -> float:
    return 0.0 if level <= model.x0 else expected_hitting_time(model.gbm, level)


def _check_cells(cfg: mc.McConfig, n_levels: int) -> None:
    if cfg.n_paths * n_levels > MAX_MC_CELLS:
        raise ParameterError(
            f"Monte Carlo over {n_levels} levels with {cfg.n_paths} paths exceeds "
            f"{MAX_MC_CELLS} path-level cells; reduce [mc] paths")


def _require(cfg: ScenarioConfig, kind: str) -> None:
    if kind == "single" and cfg.kind != "single":
        raise ConfigError(f"{cfg.name}: a single-market run needs a firm list or generator, not [duopoly]")
    if kind == "duopoly" and cfg.kind != "duopoly":
        raise ConfigError(f"{cfg.name}: a duopoly run needs a [duopoly] section")


# ----------------------------------------------------------------------------
# single market

def run_single(cfg: ScenarioConfig) -> ResultTable:
    """One row per firm; scenario-wide indicators repeat on every row.

    x_bar, u and E_tau_bar (the no-compensation benchmark) are filled for a
    single firm only. When the config has an [mc] block, simulated discount
    factors and exit times are added per firm and the simulated regulator
    value on every row, each with its standard error.
    """
    _require(cfg, "single")
    model = cfg.model
    profile = cfg.profile()
    sol = sm.solve(profile, model)
    rep = sm.aggregate_report(sol)
    cols = list(SINGLE_COLUMNS) + (SINGLE_MC_COLUMNS if cfg.mc is not None else [])
    table = ResultTable(cols, notes=["values from closed-form expressions"])
    bench = {}
    if profile.n == 1:
        x_bar, u = sm.first_best(model, float(profile.pis[0]))
        bench = {"x_bar": x_bar, "u": u, "E_tau_bar": _exit_time(model, x_bar)}
    sim = _simulate_single(cfg, sol) if cfg.mc is not None else None
    for i in range(profile.n):
        xh = float(sol.thresholds[i])
        out = sol.per_firm[i]
        row = {
            "scenario": cfg.name, "firm": i + 1, "lambda": float(profile.lambdas[i]),
            "pi": float(profile.pis[i]), "x_hat": xh, "immediate_exit": out.immediate_exit,
            "discount_factor": expected_discount_factor(model.gbm, model.econ.rho, xh),
            "E_tau_hat": out.expected_exit_time, "expected_payment": out.expected_payment,
            "value": sol.value, "total_payment": sol.total_payment,
            "forgone_profit_payment": rep.forgone_profit_payment,
            "immediate_fraction": rep.immediate_fraction, "immediate_share": rep.immediate_share,
            "closure_time": rep.closure_time, **bench,
        }
        if sim is not None:
            row.update(sim[i])
        table.add(**row)
    if sim is not None:
        table.notes.append(f"monte carlo: {cfg.mc.n_paths} paths, dt={cfg.mc.dt:g}, seed={cfg.mc.seed}")
    return _finite(table)


def _simulate_single(cfg: ScenarioConfig, sol: sm.SingleMarketSolution) -> list[dict]:
    model = cfg.model
    _check_cells(cfg.mc, sol.thresholds.size)
    sample = mc.simulate_paths(model.gbm, sol.thresholds, cfg.mc, rho=model.econ.rho, gamma=model.gamma)
    cols = [sample.column(x) for x in sol.thresholds]
    value = mc.summarize(mc._single_values(sample, sol.profile, sol.thresholds, sol.d_coeffs, model),
                         cfg.mc, sample.truncated_fraction(cols), "regulator value")
    rows = []
    for xh, k in zip(sol.thresholds, cols):
        tf = sample.truncated_fraction(k)
        disc = mc.summarize(sample.discount(k), cfg.mc, tf, f"discount factor at {xh:g}")
        tau = mc.summarize(sample.tau[:, k], cfg.mc, tf, f"exit time at {xh:g}")
        rows.append({
            "mc_discount_factor": disc.mean, "mc_discount_factor_stderr": disc.stderr,
            "mc_E_tau_hat": tau.mean, "mc_E_tau_hat_stderr": tau.stderr,
            "mc_value": value.mean, "mc_value_stderr": value.stderr,
        })
    return rows


# ----------------------------------------------------------------------------
# duopoly

@dataclass(frozen=True)
class DuopolyRun:
    """Solved regimes of a duopoly scenario, shared by the table and the verifier."""

    spec: du.DuopolySpec
    model: Model
    nash: du.EquilibriumOutcome | None
    individual: du.EquilibriumOutcome | None
    central: du.EquilibriumOutcome | None
    uniform: sm.SingleMarketSolution | None
    uniform_order: tuple[int, int]
    orderings: dict[str, bool]
    notes: tuple[str, ...]


def _uniform(spec: du.DuopolySpec, model: Model):
    """Uniform contract with the firms relabelled by increasing unit profit."""
    if spec.pi1 == spec.pi2:
        return None, (1, 2)
    order = (1, 2) if spec.pi1 < spec.pi2 else (2, 1)
    lam = [spec.lam(i) for i in order]
    pi = [spec.pi(i) for i in order]
    return sm.solve(sm.FirmProfile.from_arrays(lam, pi), model), order


def solve_duopoly(cfg: ScenarioConfig) -> DuopolyRun:
    _require(cfg, "duopoly")
    b = cfg.duopoly
    model = cfg.model
    try:
        spec = du.DuopolySpec(b.lambda1, b.lambda2, b.pi1, b.pi2)
    except ParameterError as exc:
        raise ConfigError(f"{cfg.name}: {exc}") from exc
    want = ("nash", "individual", "uniform", "central") if b.regime == "all" else (b.regime,)
    notes = []
    nash = du.classify_nash(spec, model) if "nash" in want else None
    # an explicitly requested planner regime must be admissible as stated
    allow = b.regime == "all"
    ind = du.individual_solution(spec, model, allow_immediate=allow) if "individual" in want else None
    cen = du.central_solution(spec, model, allow_immediate=allow) if "central" in want else None
    uni, order = (None, (1, 2))
    if "uniform" in want:
        uni, order = _uniform(spec, model)
        if uni is None:
            if b.regime == "uniform":
                raise ParameterError("the uniform scheme needs distinct unit profits")
            notes.append("uniform scheme skipped: equal unit profits")
        elif order == (2, 1):
            notes.append("uniform scheme: firms relabelled so that unit profits increase")
    for name, out in (("individual", ind), ("central", cen)):
        if out is not None and out.immediate:
            notes.append(f"{name}: immediate exit of country {', '.join(map(str, out.immediate))}")
    orderings = {}
    if b.regime == "all":
        rep = du.compare_regimes(spec, model, allow_immediate=True)
        orderings = dict(rep.orderings)
        if uni is not None:
            orderings["individual_beats_uniform"] = ind.equilibria[0].utility >= uni.value - 1e-12 * abs(uni.value)
    return DuopolyRun(spec, model, nash, ind, cen, uni, order, orderings, tuple(notes))


def _eq_row(name: str, run: DuopolyRun, eq: du.Equilibrium, x0: float) -> dict:
    x1, x2 = eq.levels
    t1, t2 = du.lifetimes(eq, run.model)
    return {"record": "equilibrium", "regime": name, "first_exit": eq.first_exit, "x1": x1, "x2": x2,
            "utility": eq.utility, "lifetime1": t1, "lifetime2": t2,
            "immediate1": x1 <= x0, "immediate2": x2 <= x0}


def run_duopoly(cfg: ScenarioConfig) -> ResultTable:
    """Thresholds, equilibria, utilities and expected lifetimes per regime.

    Rows are tagged by ``record``: ``threshold`` (one per regime and country),
    ``equilibrium`` (one per equilibrium, levels in country order), and under
    regime ``all`` also ``ordering`` rows from the regime comparison.
    """
    run = solve_duopoly(cfg)
    x0 = run.model.x0
    table = ResultTable(list(DUOPOLY_COLUMNS), notes=["values from closed-form expressions", *run.notes])
    for outcome in (run.nash, run.individual, run.central):
        if outcome is None:
            continue
        name = outcome.regime.value
        for i in (1, 2):
            c = outcome.thresholds[i]
            table.add(scenario=cfg.name, record="threshold", regime=name, country=i,
                      z_low=c.z_low, z_mid=c.z_mid, z_high=c.z_high)
        for eq in outcome.equilibria:
            table.add(scenario=cfg.name, **_eq_row(name, run, eq, x0))
    if run.uniform is not None:
        lv = dict(zip(run.uniform_order, run.uniform.thresholds))
        eq_like = du.Equilibrium(1 if lv[1] <= lv[2] else 2, min(lv.values()), max(lv.values()),
                                 run.uniform.value)
        table.add(scenario=cfg.name, **_eq_row("uniform", run, eq_like, x0))
    for key, holds in run.orderings.items():
        table.add(scenario=cfg.name, record="ordering", check=key, holds=holds)
    return _finite(table)


# ----------------------------------------------------------------------------
# figure series

def run_figures(cfg: ScenarioConfig, vary: str | None = None, values=None) -> ResultTable:
    """Aggregate indicators along a sweep of the firm count or the share decay.

    ``vary`` and ``values`` default to the config's [figures] block. The
    generator's other parameters stay fixed.
    """
    if cfg.generator is None:
        raise ConfigError(f"{cfg.name}: a figure sweep needs a generator market (n, theta, alpha)")
    if vary is None or values is None:
        if cfg.figures is None:
            raise ConfigError(f"{cfg.name}: no sweep given; add a [figures] block or pass vary and values")
        vary = vary or cfg.figures.vary
        values = cfg.figures.values if values is None else values
    if vary not in ("n", "theta"):
        raise ConfigError(f"vary must be 'n' or 'theta' (got {vary!r})")
    model = cfg.model
    table = ResultTable(list(FIGURE_COLUMNS), notes=["values from closed-form expressions"])
    for v in values:
        g = cfg.generator
        if vary == "n":
            if v != int(v) or v < 1:
                raise ConfigError(f"firm counts must be positive integers (got {v})")
            g = replace(g, n=int(v))
        else:
            g = replace(g, theta=float(v))
        sol = sm.solve(sm.share_generator(g.n, g.theta, g.alpha), model)
        rep = sm.aggregate_report(sol)
        table.add(scenario=cfg.name, vary=vary, n=g.n, theta=g.theta,
                  immediate_fraction=rep.immediate_fraction, immediate_share=rep.immediate_share,
                  total_payment=rep.total_payment, forgone_profit_payment=rep.forgone_profit_payment,
                  value=sol.value, closure_time=rep.closure_time)
    return _finite(table)


# ----------------------------------------------------------------------------
# Monte Carlo verification

@dataclass
class _Verifier:
    cfg: ScenarioConfig
    table: ResultTable
    k: float = 3.0

    def add(self, quantity: str, level, exact: float, est: mc.McEstimate) -> None:
        self.table.add(scenario=self.cfg.name, quantity=quantity, level=level, closed_form=exact,
                       mc_mean=est.mean, mc_stderr=est.stderr, z_score=est.z_score(exact),
                       **{"pass": est.agrees(exact, self.k)})

    def hitting(self, sample: mc.PathSample, true_level: float, sim_level: float) -> None:
        model = self.cfg.model
        if true_level <= model.x0:
            return
        k = sample.column(sim_level)
        tf = sample.truncated_fraction(k)
        self.add("discount_factor", true_level,
                 expected_discount_factor(model.gbm, model.econ.rho, true_level),
                 mc.summarize(sample.discount(k), sample.cfg, tf, f"discount factor at {true_level:g}"))
        self.add("exit_time", true_level, expected_hitting_time(model.gbm, true_level),
                 mc.summarize(sample.tau[:, k], sample.cfg, tf, f"exit time at {true_level:g}"))


def run_mc_verify(cfg: ScenarioConfig, threshold_scale: float = 1.0) -> tuple[ResultTable, bool]:
    """Closed forms next to Monte Carlo estimates for every quantity the scenario defines.

    A comparison passes when the closed form lies within three standard
    errors of the simulated mean. ``threshold_scale`` multiplies the levels
    handed to the simulator only; any value other than 1 must make the
    comparison fail, which checks that the harness can detect an error.
    Returns the table and whether every comparison passed.
    """
    if cfg.mc is None:
        raise ConfigError(f"{cfg.name}: Monte Carlo verification needs an [mc] block")
    if not threshold_scale > 0:
        raise ParameterError("threshold scale must be positive")
    table = ResultTable(list(VERIFY_COLUMNS),
                        notes=[f"monte carlo: {cfg.mc.n_paths} paths, dt={cfg.mc.dt:g}, seed={cfg.mc.seed}"])
    ver = _Verifier(cfg, table)
    if cfg.kind == "duopoly":
        _verify_duopoly(cfg, ver, threshold_scale)
    else:
        _verify_single(cfg, ver, threshold_scale)
    _finite(table)
    return table, all(table.column("pass"))


def _verify_single(cfg: ScenarioConfig, ver: _Verifier, scale: float) -> None:
    model = cfg.model
    sol = sm.solve(cfg.profile(), model)
    levels = list(sol.thresholds)
    bench = None
    if sol.profile.n == 1:
        bench = sm.first_best(model, float(sol.profile.pis[0]))
        levels.append(bench[0])
    uniq = np.unique(levels)
    _check_cells(cfg.mc, uniq.size)
    sample = mc.simulate_paths(model.gbm, uniq * scale, cfg.mc, rho=model.econ.rho, gamma=model.gamma)
    sim = {float(x): float(x) * scale for x in uniq}
    for x in uniq:
        ver.hitting(sample, float(x), sim[float(x)])
    sim_hat = np.array([sim[float(x)] for x in sol.thresholds])
    cols = [sample.column(x) for x in sim_hat]
    vals = mc._single_values(sample, sol.profile, sim_hat, sol.d_coeffs, model)
    ver.add("regulator_value", None, sol.value,
            mc.summarize(vals, cfg.mc, sample.truncated_fraction(cols), "regulator value"))
    if bench is not None:
        x_bar, u = bench
        k = sample.column(sim[float(x_bar)])
        pi = float(sol.profile.pis[0])
        vals = pi * sample.int_x[:, k] - model.ell * sample.int_xg[:, k]
        ver.add("first_best_value", x_bar, u,
                mc.summarize(vals, cfg.mc, sample.truncated_fraction(k), "first-best value"))


_MODE = {"nash": "duopoly-nash", "individual": "duopoly-individual", "central": "duopoly-central"}


def _verify_duopoly(cfg: ScenarioConfig, ver: _Verifier, scale: float) -> None:
    run = solve_duopoly(cfg)
    model = run.model
    # (label, regime, equilibrium)
    cases = []
    for outcome in (run.nash, run.individual, run.central):
        if outcome is not None:
            for eq in outcome.equilibria:
                cases.append((outcome.regime.value, eq))
    uni_levels = None
    if run.uniform is not None:
        lv = dict(zip(run.uniform_order, run.uniform.thresholds))
        uni_levels = (lv[1], lv[2])
    levels = [lvl for _, eq in cases for lvl in eq.levels]
    if uni_levels is not None:
        levels.extend(uni_levels)
    uniq = np.unique(levels)
    _check_cells(cfg.mc, uniq.size)
    sample = mc.simulate_paths(model.gbm, uniq * scale, cfg.mc, rho=model.econ.rho, gamma=model.gamma)
    for x in uniq:
        ver.hitting(sample, float(x), float(x) * scale)

    def est(levels_true, mode, label):
        sim = tuple(float(x) * scale for x in levels_true)
        vals = mc._duopoly_values(sample, run.spec, sim, model, mode)
        tf = sample.truncated_fraction([sample.column(s) for s in sim])
        return mc.summarize(vals, cfg.mc, tf, label)

    for regime, eq in cases:
        tag = f"{regime}[first={eq.first_exit}]"
        ver.add(f"{tag}.utility", None, eq.utility, est(eq.levels, _MODE[regime], f"{tag} utility"))
        if regime == "nash":
            for i in (1, 2):
                exact = du.regulator_value(i, *eq.levels, run.spec, model)
                ver.add(f"{tag}.J{i}", None, exact, est(eq.levels, f"duopoly-J{i}", f"{tag} J{i}"))
    if uni_levels is not None:
        order = run.uniform_order
        prof = run.uniform.profile
        sim_hat = np.array([uni_levels[i - 1] * scale for i in order])
        vals = mc._single_values(sample, prof, sim_hat, run.uniform.d_coeffs, model)
        tf = sample.truncated_fraction([sample.column(s) for s in sim_hat])
        ver.add("uniform.utility", None, run.uniform.value, mc.summarize(vals, cfg.mc, tf, "uniform utility"))
