import numpy as np
import pytest
import scipy.linalg as la

from quasiloc.errors import NearSingularError
from quasiloc.greens import (auxiliary_matrix, classify, green,
                             poisson_residual, resolvent_expansion_residual,
                             resolvent_identity_residual, sandwich_check,
                             sym_opnorm)
from quasiloc.lattice import Region, _lex_sorted, make_box
from quasiloc.operators import (OperatorSpec, assemble, sample_disorder,
                                window_for_region)
from quasiloc.spectral import eigensolve


def subset_region(box, rows):
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, box.dim)
    sites = _lex_sorted(map(tuple, rows)) if len(rows) else rows
    return Region(kind="elementary", d=box.d, nu=box.nu,
                  descriptor={"subset_of": box.descriptor}, sites=sites)


def test_green_scalar():
    assert green(np.array([[2.0]]), 1.0)[0, 0] == pytest.approx(1.0)


def test_green_two_by_two_closed_form():
    h = np.array([[1.0, 0.1], [0.1, -1.0]])
    g = green(h, 0.0)
    det = -1.01
    expect = np.array([[-1.0, -0.1], [-0.1, 1.0]]) / det
    assert np.abs(g - expect).max() < 1e-14


def test_green_diagonal_case(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.0)
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(spec.g, window_for_region(box), 1)
    h = assemble(spec, box, sample, golden, 0.3)
    e = 5.0
    g = green(h, e)
    diag = h.diagonal()
    assert np.abs(np.diag(g) - 1.0 / (diag - e)).max() < 1e-12
    assert np.abs(g - np.diag(np.diag(g))).max() == 0.0


def test_green_residual_validation(golden, small_spec):
    box = make_box((0, 0), 3, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 2)
    h = assemble(small_spec, box, sample, golden, 0.2)
    g = green(h, 4.0, validate=True)
    a = h.dense() - 4.0 * np.eye(box.n_sites)
    assert np.abs(a @ g - np.eye(box.n_sites)).max() < 1e-10


def test_green_near_singular_raises():
    h = np.diag([0.0, 1.0, 2.0])
    with pytest.raises(NearSingularError):
        green(h, 1.0 + 1e-15)


def test_green_symmetry(golden, small_spec):
    box = make_box((0, 0), 3, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 3)
    g = green(assemble(small_spec, box, sample, golden, 0.1), 3.7)
    assert np.abs(g - g.T).max() < 1e-12


def test_classify_diagonal_good():
    box = make_box((0, 0), 2, d=1, nu=1)
    g = np.diag(np.linspace(0.1, 0.9, box.n_sites))
    rep = classify(g, box, scale=2, gamma=5.0, sigma=0.5)
    assert rep.good


def test_classify_single_large_entry_bad():
    box = make_box((0, 0), 2, d=1, nu=1)
    g = np.zeros((box.n_sites, box.n_sites))
    # pick a pair at l1 distance 4 > N/4
    idx = box.site_index()
    a, b = idx[(-2, -2)], idx[(2, 2)]
    g[a, b] = g[b, a] = 1.0
    rep = classify(g, box, scale=2, gamma=0.1, sigma=0.9)
    assert not rep.good


def test_classify_relabel_invariance(golden, small_spec, rng):
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 4)
    h = assemble(small_spec, box, sample, golden, 0.4)
    g = green(h, 3.3)
    rep = classify(g, box, scale=2, gamma=1.0, sigma=0.5)
    perm = rng.permutation(box.n_sites)
    box_p = Region(kind=box.kind, d=box.d, nu=box.nu, descriptor=box.descriptor,
                   sites=box.sites[perm])
    rep_p = classify(g[np.ix_(perm, perm)], box_p, scale=2, gamma=1.0, sigma=0.5)
    assert rep.verdict == rep_p.verdict
    assert rep.gamma_fit == pytest.approx(rep_p.gamma_fit, rel=1e-9)


def test_expansion_zero_drive_zero_residual(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.05, delta=0.0)
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(spec.g, window_for_region(box), 5)
    h = assemble(spec, box, sample, golden, 0.2)
    for order in (0, 1, 3):
        assert resolvent_expansion_residual(h, h, 4.0, order) < 1e-12


def test_expansion_order_zero_is_difference(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.05, delta=0.01)
    spec0 = spec.with_(delta=0.0)
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(spec.g, window_for_region(box), 6)
    h = assemble(spec, box, sample, golden, 0.2)
    h0 = assemble(spec0, box, sample, golden, 0.2)
    r0 = resolvent_expansion_residual(h, h0, 4.0, 0)
    g = green(h, 4.0)
    g0 = green(h0, 4.0)
    assert r0 == pytest.approx(float(np.abs(g - g0).sum(axis=1).max()), rel=1e-12)


def test_resolvent_identity_trivial_and_random(rng):
    m = rng.normal(size=(50, 50))
    m = (m + m.T) / 2
    assert resolvent_identity_residual(m, 0.0, 0.0 + 1e-9) < 1e-9
    assert resolvent_identity_residual(m, 0.0, 0.3) < 1e-10


def test_resolvent_identity_near_resonant_conditioning(rng):
    m = rng.normal(size=(40, 40))
    m = (m + m.T) / 2
    vals = np.linalg.eigvalsh(m)
    lam = float(vals[20]) + 1e-6
    a_norm = sym_opnorm(green(m, lam))
    resid = resolvent_identity_residual(m, 0.0, lam)
    assert resid <= 1e-6 * a_norm


def test_poisson_no_coupling_zero(golden):
    spec = OperatorSpec(d=1, nu=1, eps=0.0, delta=0.0)
    amb = make_box((0, 0), 3, d=1, nu=1)
    sample = sample_disorder(spec.g, window_for_region(amb), 7)
    h = assemble(spec, amb, sample, golden, 0.1)
    pairs = eigensolve(h)
    sub = make_box((0, 0), 1, d=1, nu=1)
    sub_keys = set(map(tuple, sub.sites))
    outside = [p for p in pairs if tuple(p.loc_center.coords) not in sub_keys]
    resid = poisson_residual(h, outside[0].value, outside[0].vector, sub)
    assert resid < 1e-12


def test_poisson_random_instance(golden, small_spec):
    amb = make_box((0, 0), 8, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(amb), 8)
    h = assemble(small_spec, amb, sample, golden, 0.37)
    pairs = eigensolve(h)
    sub = make_box((0, 0), 3, d=1, nu=1)
    idx = amb.site_index()
    take = [idx[tuple(r)] for r in sub.sites]
    sub_vals = np.linalg.eigvalsh(h.dense()[np.ix_(take, take)])
    checked = 0
    for pair in pairs[:: len(pairs) // 10]:
        if np.abs(sub_vals - pair.value).min() < 1e-4:
            continue
        assert poisson_residual(h, pair.value, pair.vector, sub) < 1e-8
        checked += 1
    assert checked >= 5


def test_poisson_sub_equal_ambient_rejected(golden, small_spec):
    amb = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(amb), 9)
    h = assemble(small_spec, amb, sample, golden, 0.2)
    pair = eigensolve(h)[4]
    with pytest.raises(NearSingularError):
        poisson_residual(h, pair.value, pair.vector, amb)


def test_auxiliary_empty_star_is_full_shift(golden, small_spec):
    wave = small_spec.with_(model="wave")
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(wave.g, window_for_region(box), 10)
    h = assemble(wave, box, sample, golden, 0.3)
    e = float(np.linalg.eigvalsh(h.dense()).max()) + 1.0
    star = subset_region(box, np.empty((0, 2), dtype=np.int64))
    aux = auxiliary_matrix(h, star, 0.3, e)
    g = green(h, e)
    a_inv = la.solve(aux.a, np.eye(aux.dim), assume_a="sym")
    assert np.abs(a_inv - g).max() < 1e-10
    assert sym_opnorm(a_inv) == pytest.approx(sym_opnorm(g), rel=1e-9)


def test_auxiliary_block_diagonal_no_correction():
    h_mat = np.block([[np.diag([1.0, 2.0]), np.zeros((2, 3))],
                      [np.zeros((3, 2)), np.diag([5.0, 6.0, 7.0])]])
    box = make_box((0, 0), 1, d=1, nu=1)  # 9 sites; build a fake 5-site region
    region = subset_region(box, box.sites[:5])
    from quasiloc.operators import HamiltonianMatrix, OperatorSpec as OS
    h = HamiltonianMatrix(region=region, entries=h_mat, spec=OS(model="wave"),
                          theta=0.0, omega=None, sample=None)
    star = subset_region(box, region.sites[2:])
    aux = auxiliary_matrix(h, star, 0.0, 0.5)
    expect = np.diag([1.0, 2.0]) - 0.5 * np.eye(2)
    assert np.abs(aux.a - expect).max() == 0.0


def test_schur_identity_and_sandwich_sweep(golden, rng):
    wave = OperatorSpec(d=1, nu=1, eps=0.05, delta=0.02, model="wave")
    box = make_box((0, 0), 2, d=1, nu=1)
    n = box.n_sites
    passed = 0
    for trial in range(50):
        sample = sample_disorder(wave.g, window_for_region(box), 600 + trial)
        h = assemble(wave, box, sample, golden, float(rng.uniform(0, 1)))
        vals = np.linalg.eigvalsh(h.dense())
        gaps = np.diff(vals)
        k = int(np.argmax(gaps))
        e = float(0.5 * (vals[k] + vals[k + 1]))
        star = subset_region(box, box.sites[rng.permutation(n)[: n // 2]])
        try:
            aux = auxiliary_matrix(h, star, h.theta, e)
            g = green(h, e)
        except NearSingularError:
            continue
        a_inv = la.solve(aux.a, np.eye(aux.dim), assume_a="sym")
        block = g[np.ix_(aux.complement_idx, aux.complement_idx)]
        assert np.abs(a_inv - block).max() < 1e-9 * max(1.0, np.abs(g).max())
        assert sandwich_check(aux, g, n0=2)
        passed += 1
    assert passed >= 40


def test_green_report_csv(golden, small_spec):
    from quasiloc.greens import reports_to_csv
    box = make_box((0, 0), 2, d=1, nu=1)
    sample = sample_disorder(small_spec.g, window_for_region(box), 11)
    h = assemble(small_spec, box, sample, golden, 0.4)
    rep = classify(green(h, 3.3), box, scale=2, gamma=1.0, sigma=0.5,
                   theta=0.4, e=3.3)
    text = reports_to_csv([rep])
    header, row = text.strip().splitlines()
    assert header == "region,theta,E,op_norm,gamma_fit,verdict"
    assert row.endswith(rep.verdict)


def test_sandwich_near_resonant_star(golden):
    # star block nearly singular at E: its resolvent norm ~ e^{n0}, still
    # within the e^{2 n0} slack of the two-sided comparison
    n0 = 3
    d = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    h_mat = np.diag(d) + 0.01 * (np.eye(5, k=1) + np.eye(5, k=-1))
    e = 1.0 + np.exp(-n0)  # distance e^{-n0} from the first star eigenvalue
    box = make_box((0, 0), 1, d=1, nu=1)
    region = subset_region(box, box.sites[:5])
    from quasiloc.operators import HamiltonianMatrix, OperatorSpec as OS
    h = HamiltonianMatrix(region=region, entries=h_mat, spec=OS(model="wave"),
                          theta=0.0, omega=None, sample=None)
    star = subset_region(box, region.sites[:1])  # contains the resonant level
    aux = auxiliary_matrix(h, star, 0.0, e)
    g = green(h, e)
    assert sandwich_check(aux, g, n0=n0)
