import numpy as np
import pytest

from quasiloc.errors import WindowMismatchError
from quasiloc.lattice import make_box
from quasiloc.operators import (DisorderSample, FrequencyVector, GDistribution,
                                OperatorSpec, assemble, sample_disorder,
                                spectrum_support_check, theta_derivative_check,
                                window_for_region)


def test_sample_support_and_determinism():
    g = GDistribution()
    s1 = sample_disorder(g, ((-5, 5),), 99)
    s2 = sample_disorder(g, ((-5, 5),), 99)
    assert s1.values == s2.values
    assert all(-1.0 <= v <= 1.0 for v in s1.values.values())
    s3 = sample_disorder(g, ((-5, 5),), 100)
    assert s1.values != s3.values


def test_sample_mean_matches_uniform_law():
    g = GDistribution()
    s = sample_disorder(g, ((0, 99999),), 7)
    vals = np.array(list(s.values.values()))
    # variance of uniform[-1,1] is 1/3
    assert abs(vals.mean()) <= 3.0 * (1.0 / np.sqrt(3.0)) / np.sqrt(vals.size)


def test_unsupported_distribution_rejected():
    with pytest.raises(ValueError):
        GDistribution(kind="gaussian")
    with pytest.raises(ValueError):
        GDistribution(lo=-2.0, hi=1.0)


def test_assemble_against_hand_built_nine_by_nine(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.1, delta=0.0)
    box = make_box((0, 0), 1, d=1, nu=1)
    sample = sample_disorder(spec.g, ((-1, 1),), 42)
    theta = 0.2
    h = assemble(spec, box, sample, golden, theta).dense()
    w = golden.omega[0]
    # hand assembly over the lexicographic site order (j, n)
    sites = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1),
             (1, -1), (1, 0), (1, 1)]
    expect = np.zeros((9, 9))
    for i, (j, n) in enumerate(sites):
        expect[i, i] = n * w + theta + sample.values[(j,)]
        for k, (j2, n2) in enumerate(sites):
            if abs(j - j2) == 1 and n == n2:
                expect[i, k] = 0.1
    assert np.abs(h - expect).max() == 0.0


def test_wave_diagonal_value():
    spec = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.0, model="wave")
    om = FrequencyVector((0.7,))
    sample = DisorderSample(values={(0,): 0.3}, seed=0, window=((0, 0),),
                            g=GDistribution())
    box = make_box((0, 1), 0, d=1, nu=1)  # single site with n = 1
    h = assemble(spec, box, sample, om, theta=0.2).dense()
    assert h[0, 0] == pytest.approx((0.7 + 0.2) ** 2 + 0.3, abs=1e-15)


def test_symmetry_and_nearest_neighbor_sparsity(golden, small_spec):
    box = make_box((0, 0), 3, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 1)
    h = assemble(small_spec, box, sample, golden, 0.3).dense()
    assert np.abs(h - h.T).max() == 0.0
    dist = np.abs(box.sites[:, None, :] - box.sites[None, :, :]).sum(axis=2)
    off = ~np.eye(box.n_sites, dtype=bool)
    assert np.all(h[off & (dist != 1)] == 0.0)
    assert np.all(h[dist == 1] != 0.0)


def test_shift_covariance_entrywise(golden, small_spec):
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 2)
    h0 = assemble(small_spec, box, sample, golden, 0.1).dense()
    h1 = assemble(small_spec, box, sample, golden, 0.1 + 0.47).dense()
    assert np.abs(h1 - (h0 + 0.47 * np.eye(box.n_sites))).max() < 1e-14


def test_drive_block_norm_bound_gershgorin(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.05, b=0.7)
    box = make_box((0, 0), 4, d=1, nu=1)
    sample = sample_disorder(spec.g, window_for_region(box), 3)
    h = assemble(spec, box, sample, golden, 0.0).dense()
    off = h - np.diag(np.diag(h))
    for i, row in enumerate(box.sites):
        j = abs(int(row[0]))
        radius = np.abs(off[i]).sum()
        assert radius <= 2 * spec.nu * spec.delta * np.exp(-spec.b * j) + 1e-15


def test_monotone_truncation(golden, small_spec):
    amb = make_box((0, 0), 4, d=1, nu=1)
    sub = make_box((1, -1), 2, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(amb), 4)
    h_amb = assemble(small_spec, amb, sample, golden, 0.33).dense()
    h_sub = assemble(small_spec, sub, sample, golden, 0.33).dense()
    idx = amb.site_index()
    take = [idx[tuple(r)] for r in sub.sites]
    assert np.abs(h_amb[np.ix_(take, take)] - h_sub).max() == 0.0


def test_window_mismatch_raises(golden, small_spec):
    box = make_box((0, 0), 3, d=1, nu=1)
    sample = sample_disorder(small_spec.g, ((-1, 1),), 5)
    with pytest.raises(WindowMismatchError):
        assemble(small_spec, box, sample, golden, 0.0)


def test_spectrum_support_uncoupled(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.0)
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(spec.g, window_for_region(box), 6)
    chk = spectrum_support_check(spec, box, [sample], golden, theta=0.0)
    assert chk.ok
    # n = 0 slice of the uncoupled diagonal stays inside the disorder support
    n0_vals = [golden.omega[0] * 0 + sample.values[(j,)] for j in (-2, -1, 0, 1, 2)]
    assert all(-1 <= v <= 1 for v in n0_vals)


def test_spectrum_support_sweep(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.05, delta=0.01)
    box = make_box((0, 0), 3, d=1, nu=1)
    samples = [sample_disorder(spec.g, window_for_region(box), k) for k in range(30)]
    chk = spectrum_support_check(spec, box, samples, golden, theta=0.3)
    assert chk.ok and chk.violations == 0
    assert chk.observed_lo >= chk.bound_lo and chk.observed_hi <= chk.bound_hi


def test_theta_derivative_exactness(golden, small_spec):
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 7)
    dev_s = theta_derivative_check(small_spec, box, sample, golden, 0.3, h=0.1)
    assert dev_s < 1e-13
    wave = small_spec.with_(model="wave")
    dev_w = theta_derivative_check(wave, box, sample, golden, 0.3, h=0.5)
    assert dev_w < 1e-12
    dev_one = theta_derivative_check(wave, box, sample, golden, 0.3, h=0.3,
                                     one_sided=True)
    assert dev_one == pytest.approx(0.3, abs=1e-10)


def test_custom_profile_envelope_enforced(golden):
    bad = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.01, b=1.0,
                       drive_profile=lambda k, j: 1.0)
    box = make_box((0, 0), 1, d=1, nu=1)
    sample = sample_disorder(bad.g, ((-1, 1),), 0)
    with pytest.raises(ValueError):
        assemble(bad, box, sample, golden, 0.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        OperatorSpec(d=0)
    with pytest.raises(ValueError):
        OperatorSpec(model="dirac")
    with pytest.raises(ValueError):
        FrequencyVector((1.5,))


def test_sparse_assembly_matches_dense(golden):
    box = make_box((0, 0), 3, d=1, nu=1)
    dense_spec = OperatorSpec(d=1, nu=1, eps=0.04, delta=0.02)
    sparse_spec = dense_spec.with_(dense_cap=10)  # force the sparse path
    sample = sample_disorder(dense_spec.g, window_for_region(box), 13)
    h_dense = assemble(dense_spec, box, sample, golden, 0.3)
    h_sparse = assemble(sparse_spec, box, sample, golden, 0.3)
    assert h_sparse.is_sparse and not h_dense.is_sparse
    assert np.abs(h_sparse.dense() - h_dense.dense()).max() == 0.0
