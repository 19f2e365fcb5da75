import pytest

from l1perturb.algebra import build_algebra, is_orthogonal_elements
from l1perturb.generators import generate_sequence
from l1perturb.orthogonalize import (
    VERDICTS,
    almost_isometric_orthogonalize,
    default_eta,
    tau_null_orthogonalize,
    trichotomy_probe,
)
from l1perturb.predual import are_orthogonal


def test_tau_null_on_matrix_corners():
    xs = generate_sequence("matrix_corner", {"d": 32, "length": 6}, seed=2)
    led = tau_null_orthogonalize(xs, depth=3)
    assert led.certified and led.depth >= 2
    ys = led.outputs
    assert all(is_orthogonal_elements(ys[i], ys[j], 1e-9) for i in range(len(ys)) for j in range(i + 1, len(ys)))
    for l, (d, b) in enumerate(zip(led.distances, led.bounds), start=1):
        assert d <= b + 1e-9 and d <= 2.0 ** -(l - 1) + 1e-9


def test_tau_null_ledger_csv_columns():
    xs = generate_sequence("remark1", {"N": 1 << 12, "dyadic": True})
    led = tau_null_orthogonalize(xs, depth=4)
    lines = led.to_csv().splitlines()
    assert lines[0] == "l,index,bound,measured_distance,gauge"
    assert len(lines) == 1 + led.depth
    assert led.to_json()["depth"] == led.depth


def test_tau_null_zero_prefix():
    sh = build_algebra([2], [1.0])
    led = tau_null_orthogonalize([sh.zeros()] * 3, depth=2)
    assert led.depth == 2 and all(d == 0 for d in led.distances)
    with pytest.raises(ValueError):
        tau_null_orthogonalize([])


def test_tau_null_partial_depth_reported():
    xs = generate_sequence("remark1", {"N": 1 << 8, "length": 4})
    led = tau_null_orthogonalize(xs, depth=10)
    assert led.partial and any("exhausted" in d for d in led.diagnostics)


def test_almost_isometric_small():
    phis = list(generate_sequence("orthogonal_plus_noise", {"length": 4, "noise": 1e-4}, seed=5))
    eta = default_eta(0.1)
    led = almost_isometric_orthogonalize(phis, eta=eta, depth=4)
    assert led.certified and led.depth == 4
    outs = led.outputs
    assert all(are_orthogonal(outs[i], outs[j], 1e-8) for i in range(4) for j in range(i + 1, 4))
    for k, m in enumerate(led.indices, start=1):
        assert phis[m - 1].distance(outs[k - 1]) <= 2 * eta(k) + 1e-6


def test_probe_norm_null():
    sh = build_algebra([2], [1.0])
    xs = [sh.identity() * 4.0 ** -k for k in range(6)]
    rep = trichotomy_probe(xs)
    assert rep.verdict == VERDICTS[0]
    assert rep.gauge_decreasing


def test_probe_orthogonal_family_is_l1():
    xs = list(generate_sequence("disjoint_supports", {"length": 6}))
    rep = trichotomy_probe(xs)
    assert rep.verdict == "l1-evidence"
    assert rep.norm_floor == pytest.approx(1.0)
    assert set(rep.to_json()) >= {"verdict", "norms", "gauges", "tail_delta"}


def test_probe_empty():
    with pytest.raises(ValueError):
        trichotomy_probe([])
