import numpy as np
import pytest

from quasiloc.lattice import make_box
from quasiloc.msa import (ScaleSchedule, classify_box, double_resonance_probe,
                          initial_scale, msa_run, reference_schrodinger_census,
                          regularity_probability, schedule)
from quasiloc.operators import OperatorSpec, sample_disorder
from quasiloc.util import spawn_seeds


def test_initial_scale_frozen_values():
    # ln(3e-6) = -12.7169..., squared and floored
    assert initial_scale(1e-6, 3.0, 0.5) == 162
    assert initial_scale(0.01, 3.0, 0.5) == 13
    assert initial_scale(0.33, 1.0, 0.5) == 2  # c*delta near 1: |ln| small


def test_initial_scale_rejects_large_product():
    with pytest.raises(ValueError):
        initial_scale(0.5, 3.0, 0.5)


def test_schedule_growth_rules():
    sched = schedule(0.01, 3.0, 0.5, 2.0, 2, dim=2, site_cap=2_000_000)
    assert sched.scales == (13, 170)
    vdk = schedule(0.01, 3.0, 0.5, 2.0, 2, mode="mild", alpha=1.5, dim=2)
    assert vdk.scales == (13, 47)
    single = schedule(0.01, 3.0, 0.5, 2.0, 1, dim=2)
    assert single.scales == (13,)


def test_schedule_site_cap_truncates():
    sched = schedule(0.01, 3.0, 0.5, 2.0, 3, n0=8, dim=2)
    assert sched.scales == (8, 65)  # third rung would need ~7e7 sites
    assert sched.levels == 2


def test_schedule_cap_error_at_first_growth():
    with pytest.raises(ValueError):
        schedule(0.01, 3.0, 0.5, 2.0, 2, n0=200, dim=2)


def test_schedule_deterministic_strictly_increasing():
    a = schedule(0.003, 3.0, 0.5, 1.6, 4, dim=2)
    b = schedule(0.003, 3.0, 0.5, 1.6, 4, dim=2)
    assert a.scales == b.scales
    assert all(x < y for x, y in zip(a.scales, a.scales[1:]))


def test_classify_box_layered_matches_dense_route(golden):
    # zero drive: mode layers decouple; the layered route must agree with a
    # full-matrix classification run at a vanishing drive amplitude
    box = make_box((0, 0), 6, d=1, nu=1)
    spec0 = OperatorSpec(d=1, nu=1, eps=0.01, delta=0.0)
    spec_eps = OperatorSpec(d=1, nu=1, eps=0.01, delta=1e-13)
    for seed in (3, 4, 5):
        sample = sample_disorder(spec0.g, ((-6, 6),), seed)
        rep_l = classify_box(spec0, box, sample, golden, 0.31, 0.0, 6, 1.0, 0.5)
        rep_d = classify_box(spec_eps, box, sample, golden, 0.31, 0.0, 6, 1.0, 0.5)
        assert rep_l.verdict == rep_d.verdict
        assert rep_l.op_norm == pytest.approx(rep_d.op_norm, rel=1e-6)


def test_msa_run_zero_drive_bit_identical_to_reference(golden):
    spec0 = OperatorSpec(d=1, nu=1, eps=0.01, delta=0.0)
    sched = ScaleSchedule(8, 2.0, 1.5, 0.5, 1.0, 1, "steep", (8,), 2)
    thetas = (np.arange(4) + 0.5) / 4
    censuses = msa_run(spec0, sched, golden, 1, thetas, 0.0, master_seed=42)
    box = make_box((0, 0), 8, d=1, nu=1)
    pad = sched.sub_scale(0)
    window = ((-8 - pad, 8 + pad),)
    sample = sample_disorder(spec0.g, window, spawn_seeds(42, 1)[0])
    ref_rows = []
    for t in thetas:
        rep = reference_schrodinger_census(spec0, box, sample, golden, float(t),
                                           0.0, 8, 1.0, 0.5)
        ref_rows.append([8, 0, float(t), rep.verdict, rep.op_norm, rep.gamma_fit])
    assert ref_rows == censuses[0].rows


def test_msa_run_worker_count_invariance(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.01, delta=0.01)
    sched = ScaleSchedule(6, 2.0, 1.5, 0.5, 1.0, 1, "steep", (6,), 2)
    thetas = (np.arange(4) + 0.5) / 4
    c1 = msa_run(spec, sched, golden, 2, thetas, 0.0, master_seed=42, workers=1)
    c3 = msa_run(spec, sched, golden, 2, thetas, 0.0, master_seed=42, workers=3)
    assert c1[0].rows == c3[0].rows
    assert c1[0].good_fraction == c3[0].good_fraction


def test_msa_run_rerun_reproducible(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.01, delta=0.01)
    sched = ScaleSchedule(5, 2.0, 1.5, 0.5, 1.0, 1, "steep", (5,), 2)
    thetas = np.array([0.2, 0.7])
    a = msa_run(spec, sched, golden, 1, thetas, 0.0, master_seed=3)
    b = msa_run(spec, sched, golden, 1, thetas, 0.0, master_seed=3)
    assert a[0].rows == b[0].rows


def test_msa_census_fields(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.01, delta=0.01)
    sched = ScaleSchedule(5, 2.0, 1.5, 0.5, 1.0, 2, "steep", (5, 26), 2)
    thetas = np.array([0.25, 0.75])
    censuses = msa_run(spec, sched, golden, 1, thetas, 0.0, master_seed=4)
    assert [c.scale for c in censuses] == [5, 26]
    for c in censuses:
        assert 0.0 <= c.good_fraction <= 1.0
        assert c.trials == 2
        assert c.max_disjoint_bad <= 1


def test_regularity_probability_uncoupled_closed_form():
    tau = 0.05
    est = regularity_probability(OperatorSpec(d=1, nu=1, eps=0.0), 4, 1.0,
                                 np.array([0.1]), 3000, singular_tol=tau,
                                 master_seed=2)
    # a box fails regularity iff some site value lands within tau of E
    q = 1.0 - (1.0 - 2 * tau * 0.5) ** 9
    expect = 1.0 - q * q
    assert est.ci_lo - 0.01 <= expect <= est.ci_hi + 0.01


def test_regularity_probability_small_hopping(golden):
    est = regularity_probability(OperatorSpec(d=1, nu=1, eps=0.01), 6, 1.0,
                                 np.array([0.0, 0.2]), 300, singular_tol=1e-6,
                                 master_seed=1)
    assert est.probability >= 0.85  # calibrated desk-scale floor


def test_regularity_rejects_zero_trials():
    with pytest.raises(ValueError):
        regularity_probability(OperatorSpec(d=1, nu=1), 4, 1.0,
                               np.array([0.0]), 0)


def test_double_resonance_independence_uncoupled(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.0)
    rep = double_resonance_probe(spec, golden, 3, 9, 500, 0.3, rho_small=0.05,
                                 rho_big=0.02, master_seed=3)
    # disjoint spatial projections: joint = product of marginals within CI
    sigma3 = 3 * np.sqrt(max(rep.product * (1 - rep.product), 1e-4) / rep.trials)
    assert abs(rep.joint - rep.product) <= sigma3 + 0.01


def test_double_resonance_rejects_inverted_scales(golden):
    with pytest.raises(ValueError):
        double_resonance_probe(OperatorSpec(d=1, nu=1), golden, 9, 3, 10, 0.0)
