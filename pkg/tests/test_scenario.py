import csv
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonexit import runners
from carbonexit.scenario import (PRESETS, ConfigError, ResultTable, calibrate_ell, format_number,
                                 parse_config, parse_number, preset)

BASE = """\
[gbm]
mu = 0.02
sigma = 0.08
x0 = 100
[economy]
rho = {rho}
gamma = 4
ell = 1.825e4
"""


def config(market="[market]\nfirm = 1, 1.825e10\n", rho="0.03", extra=""):
    return BASE.format(rho=rho) + market + extra


def test_minimal_single_market():
    cfg = parse_config(config())
    assert cfg.kind == "single"
    assert cfg.firms == ((1.0, 1.825e10),)
    assert cfg.model.ell == 1.825e4
    assert cfg.mc is None and cfg.precision == 10


def test_calibration_from_price():
    text = config().replace("ell = 1.825e4", "calibrate = true\nprice = 1.825e10")
    cfg = parse_config(text)
    assert cfg.model.ell == pytest.approx(1.825e4, rel=1e-15)
    assert cfg.calibrated_price == 1.825e10
    assert calibrate_ell(1.825e10, 100, 4) == pytest.approx(1.825e4, rel=1e-15)


def test_fraction_and_product_literals():
    assert parse_number("13/23") == 13 / 23
    assert parse_number("1.825e10*13/23") == 1.825e10 * 13 / 23
    assert parse_number(" -2.5E-3 ") == -2.5e-3
    for bad in ("", "abc", "1/", "1e", "2**3"):
        with pytest.raises(ValueError):
            parse_number(bad)


def test_duopoly_block():
    cfg = parse_config(config("[duopoly]\nlambda1 = 13/23\nlambda2 = 10/23\npi1 = 1\npi2 = 2\n"))
    assert cfg.kind == "duopoly"
    assert cfg.duopoly.lambda1 == 13 / 23 and cfg.duopoly.regime == "all"


@pytest.mark.parametrize("text, line, fragment", [
    (config(rho="0.02"), 6, "rho must exceed mu"),
    (config(rho="0.5"), 6, "rho"),
    (config() + "bogus = 1\n", 11, "unknown key 'bogus'"),
    (config("[market]\nfirm = 1\n"), 10, "firm must be 'lambda, pi'"),
    (config("[market]\nfirm = 0.5, 1\n"), 10, "sum"),
    (config(extra="[mc]\npaths = 0\n"), 12, "n_paths"),
    (config(extra="[output]\nprecision = 40\n"), 12, "precision"),
    (config() + "[gbm]\n", 11, "appears twice"),
    (config().replace("mu = 0.02", "mu = x"), 2, "not a number"),
    (config().replace("sigma = 0.08", "sigma = -1"), 3, "sigma"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "s.cfg")
    msg = str(err.value)
    assert msg.startswith(f"s.cfg:{line}:"), msg
    assert fragment in msg


def test_exactly_one_market_kind():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(config(""))
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(config("[market]\nfirm = 1, 1\n[duopoly]\nlambda1=0.5\nlambda2=0.5\npi1=1\npi2=1\n"))


def test_comments_and_blank_lines_are_ignored():
    text = "# header\n\n" + config().replace("x0 = 100", "x0 = 100   # start level")
    assert parse_config(text).gbm.x0 == 100


def test_presets_parse():
    assert set(PRESETS) == {"table1", "table2", "fig1", "fig2", "crude-n2"}
    assert [c.econ.rho for c in preset("table1")] == [0.03, 0.10]
    (t2,) = preset("table2")
    assert t2.duopoly.pi1 == pytest.approx(1.825e10 * 13 / 23)
    (f1,) = preset("fig1")
    assert f1.figures.vary == "n" and f1.figures.values[-1] == 1000
    with pytest.raises(ConfigError):
        preset("nope")


def test_seed_override():
    cfg = parse_config(config(extra="[mc]\npaths = 10\nseed = 5\n"))
    assert cfg.with_seed(None) is cfg
    assert cfg.with_seed(9).mc.seed == 9 and cfg.with_seed(9).mc.n_paths == 10
    assert parse_config(config()).with_seed(3).mc.seed == 3


@pytest.mark.parametrize("x, text", [
    (0.0, "0"), (1.0, "1"), (3, "3"), (True, "true"), (None, ""), ("a", "a"),
    (1.825e10, "18250000000"), (1 / 3, "0.3333333333"), (1e-4, "0.0001"),
    (1.234e-5, "1.234e-05"), (2e15, "2e+15"), (-5.5e16, "-5.5e+16"), (float("nan"), "nan"),
])
def test_format_number(x, text):
    assert format_number(x) == text


@settings(max_examples=300)
@given(st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300),
       st.integers(1, 17))
def test_format_round_trip_at_precision(x, precision):
    back = float(format_number(x, precision))
    assert back == pytest.approx(x, rel=10.0 ** (1 - precision), abs=1e-300)


def test_table_csv_and_extend():
    a = ResultTable(["k", "v"], notes=["n1"])
    a.add(k="x", v=1.5)
    b = ResultTable(["k", "w"], notes=["n1", "n2"])
    b.add(k="y", w=2)
    a.extend(b)
    rows = list(csv.reader(io.StringIO(a.to_csv())))
    assert rows == [["k", "v", "w"], ["x", "1.5", ""], ["y", "", "2"]]
    assert a.notes == ["n1", "n2"]
    with pytest.raises(KeyError):
        a.add(z=1)


def test_single_runner_table1_columns():
    table = runners.run_single(preset("table1")[0])
    (row,) = table.rows
    assert row["x_hat"] == pytest.approx(140.6684, rel=1e-6)
    assert row["x_bar"] == pytest.approx(111.6486, rel=1e-6)
    assert row["E_tau_bar"] == pytest.approx(6.5587, rel=1e-4)


def test_figures_first_point_matches_single_runner():
    (f1,) = preset("fig1")
    fig = runners.run_figures(f1, "n", [1])
    single = runners.run_single(f1)
    assert fig.rows[0]["total_payment"] == pytest.approx(single.rows[0]["total_payment"], rel=1e-12)
    assert fig.rows[0]["value"] == pytest.approx(single.rows[0]["value"], rel=1e-12)


def test_explicit_inadmissible_regime_is_an_error():
    from carbonexit.core import ParameterError
    from dataclasses import replace
    (t2,) = preset("table2")
    cfg = replace(t2, duopoly=replace(t2.duopoly, regime="central"))
    with pytest.raises(ParameterError):
        runners.run_duopoly(cfg)
