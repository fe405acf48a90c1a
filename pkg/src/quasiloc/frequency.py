"""Frequency arithmetic: Diophantine verification, Melnikov exclusion sets,
and the disjoint-resonant-box census.

Resonances between distinct boxes turn, after eliminating the phase, into
small-divisor constraints on the frequency vector: linear ones
|m.omega + lambda| <= eta for the first-order model, and cubic ones
|(m.omega)(m'.omega)((m-m').omega) + (lambda m' - lambda' m).omega| <= eta
for the wave model, with lambda running over eigenvalue differences of the
spatial blocks.  For nu = 1 excluded sets are computed exactly as interval
unions; for nu >= 2 a low-discrepancy grid estimates their measure.

Threshold convention: a box is resonant when a diagonal candidate sits
within 2t of the probe energy, and the pair exclusion uses 4t (the
difference of two resonances), keeping the 2:4 ratio of the derivation.
The scale map t = exp(-n0^sigma) is the default but t can be pinned
directly: at desk scales the asymptotic formula is far too fat to leave
any admissible frequency, so experiments pin a small t instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operators import (DisorderSample, FrequencyVector, OperatorSpec, WAVE,
                        assemble)
from .util import binomial_halfwidth, interval_union

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
SQRT2M1 = np.sqrt(2.0) - 1.0


def standard_frequency(name: str, nu: int = 1) -> FrequencyVector:
    """Reproducible quadratic-irrational frequency vectors for experiments."""
    pool = {"golden": GOLDEN, "sqrt2": SQRT2M1, "mixed": None}
    if name == "mixed" and nu == 2:
        return FrequencyVector((GOLDEN, SQRT2M1))
    if name not in pool or pool[name] is None:
        raise ValueError(f"unknown frequency generator {name!r} for nu={nu}")
    base = pool[name]
    comps = tuple((base ** (k + 1)) % 1.0 or base for k in range(nu))
    return FrequencyVector(comps)


@dataclass(frozen=True)
class DiophantineParams:
    """Quantitative irrationality: |n.omega|_T >= c / |n|^A for 0 < |n| <= M."""

    a: float = 2.0
    c: float = 0.1
    m_cutoff: int = 100

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0 or self.m_cutoff < 1:
            raise ValueError("need A > 0, c > 0, M >= 1")


def _integer_vectors(nu: int, bound: int) -> np.ndarray:
    axes = [np.arange(-bound, bound + 1)] * nu
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nu)
    return grid[np.any(grid != 0, axis=1)]

def diophantine_check(omega: FrequencyVector, params: DiophantineParams) -> bool:
    """Exhaustive small-divisor scan up to the cutoff.

    Monotone in the cutoff: enlarging M only adds constraints, so a failure
    at M persists at every larger cutoff.
    """
    n = _integer_vectors(omega.nu, params.m_cutoff)
    vals = n @ omega.as_array()
    dist = np.abs(vals - np.round(vals))
    norms = np.abs(n).sum(axis=1).astype(float)
    return bool(np.all(dist >= params.c / norms ** params.a))


@dataclass
class ExclusionReport:
    """Excluded-frequency bookkeeping for one constraint family."""

    kind: str                 # "pair" | "triple"
    eta: float
    constraint_count: int
    excluded_measure: float
    ci_halfwidth: float
    component_count: int
    method: str               # "interval" | "qmc"
    intervals: np.ndarray | None = None
    m_values: np.ndarray | None = field(default=None, repr=False)
    lambda_values: np.ndarray | None = field(default=None, repr=False)
    qmc_points: int = 0

    def constraints(self, limit: int | None = 10000) -> list:
        """Materialized (m, lambda, eta) triples for audit; `limit=None`
        dumps everything (can be large)."""
        if self.m_values is None or self.lambda_values is None:
            return []
        out = []
        for m in np.atleast_2d(self.m_values):
            for lam in self.lambda_values:
                out.append((tuple(int(x) for x in np.atleast_1d(m)), float(lam), self.eta))
                if limit is not None and len(out) >= limit:
                    return out
        return out

    def to_json_dict(self, constraint_limit: int | None = 10000) -> dict:
        return {
            "kind": self.kind,
            "eta": self.eta,
            "constraint_count": self.constraint_count,
            "excluded_measure": self.excluded_measure,
            "ci_halfwidth": self.ci_halfwidth,
            "component_count": self.component_count,
            "method": self.method,
            "constraints": self.constraints(constraint_limit),
        }


def _lambda_differences(spectra: Sequence[np.ndarray]) -> np.ndarray:
    """All eigenvalue differences a - b across distinct spectra lists plus
    distinct entries of the same list (boxes sharing a spatial window but
    separated in the mode direction carry identical block spectra)."""
    arrays = [np.asarray(s, dtype=float) for s in spectra]
    flat = np.concatenate(arrays)
    diffs = (flat[:, None] - flat[None, :]).ravel()
    return diffs


def default_pair_eta(n0: int, sigma: float) -> float:
    return 4.0 * np.exp(-float(n0) ** sigma)


def default_triple_eta(n0: int, sigma: float) -> float:
    return np.exp(-float(n0) ** sigma / 2.0)


def melnikov_pair_constraints(spectra: Sequence[np.ndarray], n_scale: int, n0: int,
                              sigma: float, *, nu: int = 1, eta: float | None = None,
                              qmc_points: int = 1 << 20) -> ExclusionReport:
    """Excluded frequencies for coincident pairs of box resonances.

    Enumerates mode differences m in [-2N, 2N]^nu minus zero against all
    eigenvalue differences; reports the measure of
    {omega in (0,1]^nu : some |m.omega + lambda| <= eta} and, for nu = 1,
    the exact merged-interval decomposition.
    """
    if eta is None:
        eta = default_pair_eta(n0, sigma)
    lam = _lambda_differences(spectra)
    m = _integer_vectors(nu, 2 * n_scale)
    count = m.shape[0] * lam.size
    if nu == 1:
        mm = m[:, 0].astype(float)
        lo = (-lam[None, :] - eta) / mm[:, None]
        hi = (-lam[None, :] + eta) / mm[:, None]
        swap = lo > hi
        lo2 = np.where(swap, hi, lo).ravel()
        hi2 = np.where(swap, lo, hi).ravel()
        total, comps, merged = interval_union(lo2, hi2, clip=(0.0, 1.0))
        return ExclusionReport(kind="pair", eta=float(eta), constraint_count=count,
                               excluded_measure=total, ci_halfwidth=0.0,
                               component_count=comps, method="interval",
                               intervals=merged, m_values=m, lambda_values=lam)
    measure, ci, n_pts = _qmc_excluded_measure(m, lam, eta, nu, qmc_points)
    return ExclusionReport(kind="pair", eta=float(eta), constraint_count=count,
                           excluded_measure=measure, ci_halfwidth=ci,
                           component_count=count, method="qmc",
                           m_values=m, lambda_values=lam, qmc_points=n_pts)


def _qmc_excluded_measure(m: np.ndarray, lam: np.ndarray, eta: float, nu: int,
                          qmc_points: int) -> tuple[float, float, int]:
    from scipy.stats import qmc

    n_pts = int(2 ** np.ceil(np.log2(max(qmc_points, 1024))))
    sampler = qmc.Sobol(d=nu, scramble=False)
    pts = sampler.random(n_pts)
    pts = np.where(pts == 0.0, 1.0, pts)  # fold origin into (0,1]
    excluded = np.zeros(n_pts, dtype=bool)
    lam_sorted = np.sort(lam)
    for row in m:
        vals = pts @ row.astype(float)
        # |vals + lambda| <= eta for some lambda  <=>  a lambda in [-vals-eta, -vals+eta]
        left = np.searchsorted(lam_sorted, -vals - eta, side="left")
        right = np.searchsorted(lam_sorted, -vals + eta, side="right")
        excluded |= right > left
        if excluded.all():
            break
    p = float(excluded.mean())
    return p, binomial_halfwidth(p, n_pts), n_pts


def pair_margin(omega: FrequencyVector, spectra: Sequence[np.ndarray],
                n_scale: int) -> float:
    """Smallest |m.omega + lambda| over the pair-constraint family; the
    acceptance margin of a concrete frequency vector."""
    lam = np.sort(_lambda_differences(spectra))
    m = _integer_vectors(omega.nu, 2 * n_scale)
    vals = m @ omega.as_array()
    best = np.inf
    for v in vals:
        k = np.searchsorted(lam, -v)
        for kk in (k - 1, k):
            if 0 <= kk < lam.size:
                best = min(best, abs(v + lam[kk]))
    return float(best)


def melnikov_triple_constraints(spectra: Sequence[np.ndarray], n_scale: int, n0: int,
                                sigma: float, *, nu: int = 1, eta: float | None = None,
                                qmc_points: int = 1 << 18,
                                combo_cap: int = 50_000_000) -> ExclusionReport:
    """Excluded frequencies for the cubic three-box constraint of the wave
    model.  nu = 1 measures by cubic root bracketing (exact up to root
    refinement); nu >= 2 falls back to the low-discrepancy grid."""
    if eta is None:
        eta = default_triple_eta(n0, sigma)
    arrays = [np.asarray(s, dtype=float) for s in spectra]
    flat = np.concatenate(arrays)
    s = flat.size
    m = _integer_vectors(nu, 2 * n_scale)
    n_m_pairs = m.shape[0] * (m.shape[0] - 1)
    count = n_m_pairs * s * s * s
    if count > combo_cap:
        raise ValueError(f"triple constraint family too large ({count:.2e} combos); "
                         "reduce the spectra or the scale")
    # lambda = mu - mu', lambda' = mu - mu'' share the first eigenvalue
    mu = flat[:, None, None]
    lam = (mu - flat[None, :, None]).ravel()
    lamp = np.broadcast_to(mu - flat[None, None, :], (s, s, s)).ravel()
    lam_pairs = np.stack([np.broadcast_to((mu - flat[None, :, None]), (s, s, s)).ravel(), lamp])
    if nu == 1:
        total, comps, intervals = _triple_intervals_1d(m[:, 0], lam_pairs, eta)
        return ExclusionReport(kind="triple", eta=float(eta), constraint_count=count,
                               excluded_measure=total, ci_halfwidth=0.0,
                               component_count=comps, method="interval",
                               intervals=intervals, m_values=m,
                               lambda_values=np.unique(lam))
    measure, ci, n_pts = _qmc_triple_measure(m, lam_pairs, eta, nu, qmc_points)
    return ExclusionReport(kind="triple", eta=float(eta), constraint_count=count,
                           excluded_measure=measure, ci_halfwidth=ci,
                           component_count=count, method="qmc",
                           m_values=m, lambda_values=np.unique(lam),
                           qmc_points=n_pts)


def _cubic_excluded_interval(a: float, c: float, eta: float) -> list[tuple[float, float]]:
    """{omega in (0,1] : |a w^3 + c w| <= eta} by root bracketing of the
    two shifted cubics."""
    roots = []
    for shift in (-eta, eta):
        rr = np.roots([a, 0.0, c, shift]) if a != 0 else (np.roots([c, shift]) if c != 0 else [])
        for r in np.atleast_1d(rr):
            if abs(r.imag) < 1e-12:
                roots.append(float(r.real))
    pts = sorted({0.0, 1.0, *[r for r in roots if 0.0 < r < 1.0]})
    out = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (lo + hi)
        if abs(a * mid ** 3 + c * mid) <= eta:
            out.append((lo, hi))
    return out


def _triple_intervals_1d(m_vals: np.ndarray, lam_pairs: np.ndarray, eta: float):
    lam, lamp = lam_pairs
    lo_list, hi_list = [], []
    for m in m_vals:
        for mp in m_vals:
            if m == mp:
                continue
            a = float(m * mp * (m - mp))
            cs = np.unique(np.round(lam * mp - lamp * m, 15))
            for c in cs:
                for lo, hi in _cubic_excluded_interval(a, float(c), eta):
                    lo_list.append(lo)
                    hi_list.append(hi)
    total, comps, merged = interval_union(np.array(lo_list), np.array(hi_list),
                                          clip=(0.0, 1.0))
    return total, comps, merged


def _qmc_triple_measure(m: np.ndarray, lam_pairs: np.ndarray, eta: float, nu: int,
                        qmc_points: int) -> tuple[float, float, int]:
    from scipy.stats import qmc

    lam, lamp = lam_pairs
    n_pts = int(2 ** np.ceil(np.log2(max(qmc_points, 1024))))
    sampler = qmc.Sobol(d=nu, scramble=False)
    pts = sampler.random(n_pts)
    pts = np.where(pts == 0.0, 1.0, pts)
    excluded = np.zeros(n_pts, dtype=bool)
    omega_dot_m = pts @ m.T.astype(float)
    for i in range(m.shape[0]):
        for k in range(m.shape[0]):
            if i == k:
                continue
            cubic = omega_dot_m[:, i] * omega_dot_m[:, k] * (omega_dot_m[:, i] - omega_dot_m[:, k])
            # linear coefficient vector: lam * m_k - lam' * m_i
            coeff = lam[:, None] * m[k][None, :] - lamp[:, None] * m[i][None, :]
            lin = pts @ coeff.T  # (n_pts, n_lam)
            excluded |= np.any(np.abs(cubic[:, None] + lin) <= eta, axis=1)
            if excluded.all():
                break
    p = float(excluded.mean())
    return p, binomial_halfwidth(p, n_pts), n_pts


def triple_margin(omega: FrequencyVector, spectra: Sequence[np.ndarray],
                  n_scale: int) -> float:
    """Smallest |(m.w)(m'.w)((m-m').w) + (lam m' - lam' m).w| over the whole
    triple family, for scalar frequencies.

    Exploits that for fixed (m, m'), the linear coefficient is
    (m'-m) mu - m' mu' + m mu'': a nearest-neighbor search over mu'' in a
    sorted array replaces the cubic-size enumeration.
    """
    if omega.nu != 1:
        raise ValueError("triple_margin implemented for nu = 1")
    w = float(omega.omega[0])
    flat = np.sort(np.concatenate([np.asarray(s, float) for s in spectra]))
    s = flat.size
    mu_g, mup_g = np.meshgrid(flat, flat, indexing="ij")
    best = np.inf
    m_vals = np.arange(-2 * n_scale, 2 * n_scale + 1)
    m_vals = m_vals[m_vals != 0]
    for m in m_vals:
        for mp in m_vals:
            if m == mp:
                continue
            cubic = (m * w) * (mp * w) * ((m - mp) * w)
            # need (m'-m) mu - m' mu' + m mu'' close to -cubic / w
            target = (-cubic / w - (mp - m) * mu_g + mp * mup_g) / m
            t = target.ravel()
            k = np.clip(np.searchsorted(flat, t), 1, s - 1)
            nearest = np.minimum(np.abs(flat[k] - t), np.abs(flat[k - 1] - t))
            cand = np.abs(m * w) * nearest.min()
            if cand < best:
                best = cand
    return float(best)


def frequency_excluded(omega: FrequencyVector, report: ExclusionReport) -> bool:
    """Membership of a concrete frequency in the excluded set (nu = 1 uses
    the merged intervals; otherwise re-evaluates the constraints)."""
    if report.method == "interval" and report.intervals is not None:
        w = float(omega.omega[0])
        iv = report.intervals
        if iv.size == 0:
            return False
        k = np.searchsorted(iv[:, 0], w, side="right") - 1
        return bool(k >= 0 and w <= iv[k, 1])
    raise NotImplementedError("membership test available for interval reports only")


@dataclass
class CensusResult:
    """Disjoint resonant-box census inside an ambient box."""

    max_disjoint: int
    witness: list[tuple[int, ...]]
    resonant_total: int
    resonance_eta: float


def _max_separated(centers: np.ndarray, min_sep: int) -> tuple[int, list]:
    """Largest k <= 3 pairwise sup-norm-separated subset, with a witness.

    Counts are exact for 0, 1, 2 and saturate at 3 (the claims under test
    bound them by 1 and 2).  Triple existence is decided through the boolean walk
    matrix: a separated triple exists iff some separated pair also admits a
    common separated partner."""
    n = centers.shape[0]
    if n == 0:
        return 0, []
    if n > 3000:
        raise ValueError(f"resonant set too large for an exact census ({n} centers)")
    diff = np.abs(centers[:, None, :] - centers[None, :, :]).max(axis=2)
    sep = diff > min_sep
    pairs = np.argwhere(np.triu(sep, k=1))
    if pairs.size == 0:
        return 1, [tuple(int(x) for x in centers[0])]
    walk2 = sep.astype(np.float32) @ sep.astype(np.float32)
    tri = sep & (walk2 > 0)
    tri_pairs = np.argwhere(np.triu(tri, k=1))
    if tri_pairs.size:
        i, k = int(tri_pairs[0, 0]), int(tri_pairs[0, 1])
        j = int(np.where(sep[i] & sep[k])[0][0])
        return 3, [tuple(int(x) for x in centers[p]) for p in (i, j, k)]
    i, j = int(pairs[0, 0]), int(pairs[0, 1])
    return 2, [tuple(int(x) for x in centers[p]) for p in (i, j)]


def census_bad_boxes(spec: OperatorSpec, sample: DisorderSample,
                     omega: FrequencyVector, theta: float, e: float,
                     n0: int, ambient_n: int, *, sigma: float = 0.5,
                     resonance_eta: float | None = None) -> CensusResult:
    """Count pairwise-disjoint resonant n0-boxes inside the centered
    ambient box of radius ambient_n.

    A box is resonant when some diagonal candidate -- mode value plus an
    eigenvalue of the box's spatial block -- falls within the resonance
    threshold of the probe energy (the wave model squares the mode value).
    Boxes at center distance > 2 n0 (sup norm) are disjoint.
    """
    if ambient_n < n0:
        raise ValueError("ambient box must be at least as large as the sub-scale")
    if resonance_eta is None:
        resonance_eta = 2.0 * np.exp(-float(n0) ** sigma)
    d, nu = spec.d, spec.nu
    if d != 1 or nu != 1:
        raise NotImplementedError("census implemented for d = nu = 1")
    w = float(omega.omega[0])
    off = ambient_n - n0
    j_offsets = np.arange(-off, off + 1)
    n_vals = np.arange(-ambient_n, ambient_n + 1)
    phases = n_vals * w + theta
    diag_part = phases ** 2 if spec.model == WAVE else phases

    # per spatial offset: eigenvalues of the (2 n0 + 1)-site block
    site_hit = np.zeros((j_offsets.size, n_vals.size), dtype=bool)
    for a, ij in enumerate(j_offsets):
        mu = block_spectrum(spec, sample, int(ij), n0)
        # min over eigenvalues of |diag_part + mu - e| < eta
        dmat = np.abs(diag_part[:, None] + mu[None, :] - e)
        site_hit[a] = dmat.min(axis=1) < resonance_eta

    # box resonant iff a hit lies within n0 of its mode-center
    from scipy.ndimage import maximum_filter1d
    box_hit = maximum_filter1d(site_hit.astype(np.int8), size=2 * n0 + 1,
                               axis=1, mode="constant")[:, n0:-n0] if n0 else site_hit
    n_centers = np.arange(-off, off + 1)
    assert box_hit.shape == (j_offsets.size, n_centers.size)
    hits = np.argwhere(box_hit > 0)
    centers = np.stack([j_offsets[hits[:, 0]], n_centers[hits[:, 1]]], axis=1) \
        if hits.size else np.empty((0, 2), dtype=int)
    count, witness = _max_separated(centers, 2 * n0)
    return CensusResult(max_disjoint=count, witness=witness,
                        resonant_total=int(centers.shape[0]),
                        resonance_eta=float(resonance_eta))


def block_spectrum(spec: OperatorSpec, sample: DisorderSample, j_offset: int,
                   n0: int) -> np.ndarray:
    """Eigenvalues of the spatial block eps*Lap + V on [-n0, n0] + j_offset."""
    n_sites = 2 * n0 + 1
    v = np.array([sample.values[(j,)] for j in range(j_offset - n0, j_offset + n0 + 1)])
    h = np.diag(v)
    idx = np.arange(n_sites - 1)
    h[idx, idx + 1] = spec.eps
    h[idx + 1, idx] = spec.eps
    return np.linalg.eigvalsh(h)


def ambient_block_spectra(spec: OperatorSpec, sample: DisorderSample, n0: int,
                          ambient_n: int) -> list[np.ndarray]:
    """Spectra of all sliding spatial blocks inside the ambient box; the
    natural input for the exclusion builders."""
    off = ambient_n - n0
    return [block_spectrum(spec, sample, ij, n0) for ij in range(-off, off + 1)]
