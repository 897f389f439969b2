"""Shared hypothesis strategies for firm profiles and duopoly specs."""

import math

import numpy as np
from hypothesis import strategies as st

from carbonexit.duopoly import DuopolySpec
from carbonexit.singlemarket import FirmProfile


@st.composite
def profiles(draw, max_n=50, min_n=1):
    n = draw(st.integers(min_n, max_n))
    if n == 1:
        return FirmProfile.from_arrays([1.0], [10 ** draw(st.floats(-2, 3))])
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    lam = raw / math.fsum(raw)
    lam[-1] = 1.0 - math.fsum(lam[:-1])
    steps = np.array(draw(st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n)))
    pi = np.cumsum(steps) * 10 ** draw(st.floats(-2, 3))
    return FirmProfile.from_arrays(lam, pi)


@st.composite
def duopoly_specs(draw):
    lam1 = draw(st.floats(0.05, 0.95))
    return DuopolySpec(lam1, 1.0 - lam1, 10 ** draw(st.floats(-1, 2)), 10 ** draw(st.floats(-1, 2)))


@st.composite
def proportional_specs(draw, max_lambda1=0.5):
    lam1 = draw(st.floats(0.05, max_lambda1, exclude_max=True))
    return DuopolySpec.proportional(lam1, 10 ** draw(st.floats(-1, 2)))


@st.composite
def ordered_profiles(draw, max_n=6):
    """Profiles whose formula thresholds are increasing: power-law shares, any two-firm market, or one firm."""
    kind = draw(st.sampled_from(["generator", "pair", "single"]))
    if kind == "single":
        return draw(profiles(max_n=1))
    if kind == "pair":
        return draw(profiles(min_n=2, max_n=2))
    from carbonexit.singlemarket import share_generator
    return share_generator(draw(st.integers(2, max_n)), draw(st.floats(0.05, 3.0)), 10 ** draw(st.floats(-2, 3)))
