"""Scenario files, unit calibration, embedded presets and result tables.

A scenario file is line oriented::

    # comment
    [gbm]
    mu = 0.02
    sigma = 0.08
    x0 = 100
    [economy]
    rho = 0.03
    gamma = 4
    calibrate = true
    price = 1.825e10
    [market]
    firm = 1, 1.825e10

Numbers accept scientific notation and literal products or fractions such as
13/23.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core import EconomyParams, GbmParams, Model, ParameterError, validate
from .montecarlo import McConfig


class ConfigError(ValueError):
    """Malformed or invalid scenario file; the message carries the line number."""


#: per-unit annual profit for 50 $/bbl: 50 $/bbl x 1e6 bbl/Mb x 365 d/y, per Mb/d
PI_EFF_CRUDE = 50.0 * 1e6 * 365.0

SECTIONS: dict[str, tuple[str, ...]] = {
    "scenario": ("name",),
    "gbm": ("mu", "sigma", "x0"),
    "economy": ("rho", "gamma", "ell", "calibrate", "price"),
    "market": ("firm", "n", "theta", "alpha"),
    "duopoly": ("lambda1", "lambda2", "pi1", "pi2", "regime"),
    "mc": ("paths", "dt", "seed", "horizon_cap", "bridge", "antithetic"),
    "figures": ("vary", "values"),
    "output": ("csv_path", "precision"),
}
# where to point when a model constraint fails
_CHECK_KEYS = {
    "sigma": ("gbm", "sigma"), "x0": ("gbm", "x0"), "drift": ("gbm", "mu"),
    "gamma": ("economy", "gamma"), "ell": ("economy", "ell"),
    "rho_low": ("economy", "rho"), "rho_high": ("economy", "rho"),
}
REGIMES = ("nash", "individual", "uniform", "central", "all")


def calibrate_ell(pi_effective: float, x0: float, gamma: float) -> float:
    """Damage scale making damages equal profits at x0: pi x0 = ell x0^gamma."""
    if not (pi_effective > 0 and x0 > 0 and gamma > 0):
        raise ParameterError("calibration inputs must be positive")
    return pi_effective * x0 ** (1.0 - gamma)


_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def parse_number(text: str) -> float:
    """A number, or a product/quotient of numbers evaluated left to right (13/23, 1.825e10*13/23)."""
    parts = re.split(r"([*/])", text.strip())
    values = []
    for tok in parts[0::2]:
        tok = tok.strip()
        if not _NUMBER.match(tok):
            raise ValueError(f"not a number: {text.strip()!r}")
        values.append(float(tok))
    result = values[0]
    for op, v in zip(parts[1::2], values[1:]):
        result = result * v if op == "*" else result / v
    return result


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Generator:
    n: int
    theta: float
    alpha: float


@dataclass(frozen=True)
class DuopolyBlock:
    lambda1: float
    lambda2: float
    pi1: float
    pi2: float
    regime: str = "all"


@dataclass(frozen=True)
class FigureBlock:
    vary: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    gbm: GbmParams
    econ: EconomyParams
    firms: tuple[tuple[float, float], ...] | None = None
    generator: Generator | None = None
    duopoly: DuopolyBlock | None = None
    mc: McConfig | None = None
    figures: FigureBlock | None = None
    csv_path: str | None = None
    precision: int = 10
    name: str = "scenario"
    calibrated_price: float | None = None

    @property
    def model(self) -> Model:
        return Model(self.gbm, self.econ)

    @property
    def kind(self) -> str:
        if self.duopoly is not None:
            return "duopoly"
        return "single"

    def profile(self):
        from . import singlemarket

        if self.generator is not None:
            g = self.generator
            return singlemarket.share_generator(g.n, g.theta, g.alpha)
        lam, pi = zip(*self.firms)
        return singlemarket.FirmProfile.from_arrays(lam, pi)

    def with_seed(self, seed: int | None) -> "ScenarioConfig":
        if seed is None:
            return self
        mc = self.mc or McConfig()
        return _replace(self, mc=McConfig(mc.n_paths, mc.dt, mc.horizon_cap, seed,
                                          mc.bridge_correction, mc.antithetic))


def _replace(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


@dataclass
class _Entry:
    value: str
    line: int


def _tokenize(text: str, source: str) -> dict[str, dict[str, list[_Entry]]]:
    sections: dict[str, dict[str, list[_Entry]]] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{no}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ConfigError(f"{source}:{no}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{source}:{no}: section [{current}] appears twice")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"{source}:{no}: key outside of any section")
        key, _, value = (part.strip() for part in line.partition("="))
        key = key.lower()
        if key not in SECTIONS[current]:
            raise ConfigError(f"{source}:{no}: unknown key {key!r} in [{current}]")
        entries = sections[current].setdefault(key, [])
        if entries and key != "firm":
            raise ConfigError(f"{source}:{no}: duplicate key {key!r} in [{current}]")
        entries.append(_Entry(value, no))
    return sections


class _Reader:
    def __init__(self, sections, source):
        self.sections = sections
        self.source = source

    def has(self, section: str) -> bool:
        return section in self.sections

    def entry(self, section, key):
        items = self.sections.get(section, {}).get(key)
        return items[0] if items else None

    def first_line(self, section) -> int:
        lines = [e.line for es in self.sections.get(section, {}).values() for e in es]
        return min(lines) if lines else 0

    def fail(self, line: int, msg: str):
        raise ConfigError(f"{self.source}:{line}: {msg}")

    def number(self, section, key, default=None, required=True):
        e = self.entry(section, key)
        if e is None:
            if default is not None or not required:
                return default
            self.fail(self.first_line(section), f"[{section}] is missing {key!r}")
        try:
            return parse_number(e.value)
        except (ValueError, ZeroDivisionError) as exc:
            self.fail(e.line, f"{key}: {exc}")

    def integer(self, section, key, default=None, required=True):
        e = self.entry(section, key)
        if e is not None and e.value.strip().isdigit():
            return int(e.value.strip())
        val = self.number(section, key, default, required)
        if val is None:
            return None
        if val != int(val):
            self.fail(self.entry(section, key).line, f"{key} must be an integer")
        return int(val)

    def boolean(self, section, key, default):
        e = self.entry(section, key)
        if e is None:
            return default
        try:
            return _parse_bool(e.value)
        except ValueError as exc:
            self.fail(e.line, f"{key}: {exc}")

    def text(self, section, key, default=None):
        e = self.entry(section, key)
        return default if e is None else e.value


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate a scenario; raises ConfigError with a line number."""
    r = _Reader(_tokenize(text, source), source)
    for required in ("gbm", "economy"):
        if not r.has(required):
            raise ConfigError(f"{source}:0: missing [{required}] section")
    gbm = GbmParams(r.number("gbm", "mu"), r.number("gbm", "sigma"), r.number("gbm", "x0"))
    gamma = r.number("economy", "gamma")
    rho = r.number("economy", "rho")
    calibrate = r.boolean("economy", "calibrate", False)
    price = r.number("economy", "price", required=False)
    ell_entry = r.entry("economy", "ell")
    eco_line = r.first_line("economy")
    if calibrate:
        if ell_entry is not None:
            r.fail(ell_entry.line, "give either ell or calibrate = true, not both")
        if price is None:
            r.fail(eco_line, "calibrate = true needs price (profit per unit of production per year)")
        try:
            ell = calibrate_ell(price, gbm.x0, gamma)
        except ParameterError as exc:
            r.fail(r.entry("economy", "price").line, str(exc))
    else:
        if ell_entry is None:
            r.fail(eco_line, "[economy] needs ell, or calibrate = true with price")
        ell = r.number("economy", "ell")
    econ = EconomyParams(rho, gamma, ell)
    report = validate(gbm, econ)
    if not report.ok:
        first = report.failures[0]
        section, key = _CHECK_KEYS[first.name]
        e = r.entry(section, key)
        r.fail(e.line if e else r.first_line(section), "; ".join(c.message for c in report.failures))

    firms = generator = duo = None
    market_kinds = []
    if r.has("market"):
        sec = r.sections["market"]
        if "firm" in sec:
            market_kinds.append("firm list")
            parsed = []
            for e in sec["firm"]:
                parts = e.value.split(",")
                if len(parts) != 2:
                    r.fail(e.line, "firm must be 'lambda, pi'")
                try:
                    parsed.append((parse_number(parts[0]), parse_number(parts[1])))
                except (ValueError, ZeroDivisionError) as exc:
                    r.fail(e.line, f"firm: {exc}")
            firms = tuple(parsed)
        if any(k in sec for k in ("n", "theta", "alpha")):
            market_kinds.append("generator")
            generator = Generator(r.integer("market", "n"), r.number("market", "theta"),
                                  r.number("market", "alpha", default=price, required=price is None))
    if r.has("duopoly"):
        market_kinds.append("duopoly")
        regime = r.text("duopoly", "regime", "all").lower()
        if regime not in REGIMES:
            r.fail(r.entry("duopoly", "regime").line, f"regime must be one of {', '.join(REGIMES)}")
        duo = DuopolyBlock(r.number("duopoly", "lambda1"), r.number("duopoly", "lambda2"),
                           r.number("duopoly", "pi1"), r.number("duopoly", "pi2"), regime)
    if len(market_kinds) != 1:
        raise ConfigError(f"{source}:0: exactly one of firm list, generator or [duopoly] is required "
                          f"(found {', '.join(market_kinds) or 'none'})")

    # check the market now so errors point at the file
    try:
        if firms is not None:
            lam, pi = zip(*firms)
            from .singlemarket import FirmProfile
            FirmProfile.from_arrays(lam, pi)
        elif generator is not None:
            from .singlemarket import share_generator
            share_generator(generator.n, generator.theta, generator.alpha)
        else:
            from .duopoly import DuopolySpec
            DuopolySpec(duo.lambda1, duo.lambda2, duo.pi1, duo.pi2)
    except ParameterError as exc:
        sec = "duopoly" if duo is not None else "market"
        r.fail(r.first_line(sec), str(exc))

    mc = None
    if r.has("mc"):
        d = McConfig()
        try:
            mc = McConfig(
                n_paths=r.integer("mc", "paths", d.n_paths),
                dt=r.number("mc", "dt", d.dt),
                horizon_cap=r.number("mc", "horizon_cap", d.horizon_cap),
                seed=r.integer("mc", "seed", d.seed),
                bridge_correction=r.boolean("mc", "bridge", d.bridge_correction),
                antithetic=r.boolean("mc", "antithetic", d.antithetic),
            )
        except ParameterError as exc:
            r.fail(r.first_line("mc"), str(exc))

    figures = None
    if r.has("figures"):
        vary = (r.text("figures", "vary") or "").lower()
        if vary not in ("n", "theta"):
            e = r.entry("figures", "vary")
            r.fail(e.line if e else r.first_line("figures"), "vary must be 'n' or 'theta'")
        ve = r.entry("figures", "values")
        if ve is None:
            r.fail(r.first_line("figures"), "[figures] needs values")
        try:
            values = tuple(parse_number(v) for v in ve.value.split(","))
        except (ValueError, ZeroDivisionError) as exc:
            r.fail(ve.line, f"values: {exc}")
        figures = FigureBlock(vary, values)

    precision = r.integer("output", "precision", 10)
    if not 1 <= precision <= 17:
        r.fail(r.entry("output", "precision").line, "precision must be between 1 and 17")
    return ScenarioConfig(gbm, econ, firms, generator, duo, mc, figures,
                          r.text("output", "csv_path"), precision,
                          r.text("scenario", "name", "scenario"), price if calibrate else None)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read file ({exc.strerror})") from exc
    return parse_config(text, str(path))


# ----------------------------------------------------------------------------
# presets

_CRUDE = """\
[gbm]
mu = 0.02
sigma = 0.08
x0 = 100
[economy]
rho = {rho}
gamma = 4
calibrate = true
price = 1.825e10
"""

PRESETS: dict[str, tuple[str, ...]] = {
    "table1": (
        "[scenario]\nname = rho=3%\n" + _CRUDE.format(rho=0.03) + "[market]\nfirm = 1, 1.825e10\n",
        "[scenario]\nname = rho=10%\n" + _CRUDE.format(rho=0.10) + "[market]\nfirm = 1, 1.825e10\n",
    ),
    "table2": (
        "[scenario]\nname = usa-saudi\n" + _CRUDE.format(rho=0.10)
        + "[duopoly]\nlambda1 = 13/23\nlambda2 = 10/23\npi1 = 1.825e10*13/23\npi2 = 1.825e10*10/23\n"
          "regime = all\n",
    ),
    "fig1": (
        "[scenario]\nname = n-sweep\n" + _CRUDE.format(rho=0.10)
        + "[market]\nn = 1\ntheta = 0.1\nalpha = 1.825e10\n"
          "[figures]\nvary = n\nvalues = 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000\n",
    ),
    "fig2": (
        "[scenario]\nname = theta-sweep\n" + _CRUDE.format(rho=0.10)
        + "[market]\nn = 1000\ntheta = 0.1\nalpha = 1.825e10\n"
          "[figures]\nvary = theta\nvalues = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0\n",
    ),
    "crude-n2": (
        "[scenario]\nname = two-firms\n" + _CRUDE.format(rho=0.03)
        + "[market]\nfirm = 0.5, 1.825e10\nfirm = 0.5, 3.65e10\n",
    ),
}


def preset(name: str) -> tuple[ScenarioConfig, ...]:
    if name not in PRESETS:
        raise ConfigError(f"<preset>:0: unknown preset {name!r} (available: {', '.join(sorted(PRESETS))})")
    return tuple(parse_config(text, f"<preset {name}>") for text in PRESETS[name])


# ----------------------------------------------------------------------------
# result tables

def format_number(x: Any, precision: int = 10) -> str:
    """Fixed-point with `precision` significant digits inside [1e-4, 1e15], scientific outside."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        return "0"
    if 1e-4 <= abs(x) <= 1e15:
        return np.format_float_positional(x, precision=precision, unique=False, fractional=False, trim="-")
    mantissa, _, exponent = f"{x:.{precision - 1}e}".partition("e")
    if "." in mantissa:
        mantissa = mantissa.rstrip("0").rstrip(".")
    return f"{mantissa}e{exponent}"


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, **row) -> None:
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [row.get(name) for row in self.rows]

    def extend(self, other: "ResultTable") -> None:
        for c in other.columns:
            if c not in self.columns:
                self.columns.append(c)
        self.rows.extend(other.rows)
        self.notes.extend(n for n in other.notes if n not in self.notes)

    def to_csv(self, precision: int = 10) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_number(row.get(c), precision) for c in self.columns])
        return buf.getvalue()

    def write(self, path: str | Path, precision: int = 10) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv(precision))
