import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1perturb.algebra import build_algebra, random_suite
from l1perturb.generators import generate_sequence
from l1perturb.measure import DEFAULT_GRID, exceedance, exceedance_profile, gauge, tau_null_evidence
from oracles import eigen_count_above

SH = build_algebra([2, 3, 1], [0.5, 1.5, 0.25])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 3.0))
def test_exceedance_matches_eigen_count(seed, eps):
    x = random_suite(SH, "generic", seed)
    assert exceedance(x, eps) == pytest.approx(eigen_count_above(x, eps), abs=1e-12)


def test_exceedance_rejects_nonpositive_level():
    with pytest.raises(ValueError):
        exceedance(SH.identity(), 0.0)


def test_profile_is_monotone():
    x = random_suite(SH, "generic", 4)
    prof = exceedance_profile(x)
    assert list(prof.thresholds) == sorted(DEFAULT_GRID)
    assert all(a >= b for a, b in zip(prof.masses, prof.masses[1:]))


def _gauge_brute(x, grid):
    return min(e for e in grid if exceedance(x, e) <= e + 1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_gauge_is_infimum(seed, scale):
    x = random_suite(SH, "generic", seed) * scale
    g = gauge(x)
    assert exceedance(x, g + 1e-12) <= g + 1e-12
    grid = np.linspace(1e-6, 20, 4001)
    assert g <= _gauge_brute(x, grid) + 1e-12
    if g > 1e-3:
        assert exceedance(x, 0.999 * g) > 0.999 * g


def test_gauge_of_zero_and_scalar():
    assert gauge(SH.zeros()) == 0.0
    sh = build_algebra([1], [1.0])
    assert gauge(sh.diagonal([0.5])) == pytest.approx(0.5)
    assert gauge(sh.diagonal([5.0])) == pytest.approx(1.0)


def test_remark1_exceedance():
    xs = generate_sequence("remark1", {"N": 1 << 20, "indices": [16]})
    x = xs[0]
    assert x.norm(1) == pytest.approx(1.0)
    assert exceedance(x, 1.0) == pytest.approx(1 / 16)


def test_evidence_report_csv_and_flags():
    xs = list(generate_sequence("remark1", {"N": 1 << 12, "indices": [1, 4, 16, 64, 256]}))
    rep = tau_null_evidence(xs, threshold=0.05)
    # above level 1 the spike of x_4 has mass 1/4 while x_1 has none
    assert rep.final_below and not rep.monotone_trend
    shrinking = tau_null_evidence([SH.identity() * 2.0 ** -k for k in range(6)], threshold=0.05)
    assert shrinking.monotone_trend and shrinking.final_below
    lines = rep.to_csv().splitlines()
    assert lines[0] == "n,epsilon,mass,norm1,gauge"
    assert len(lines) == 1 + 5 * len(DEFAULT_GRID)
    with pytest.raises(ValueError):
        tau_null_evidence([])
