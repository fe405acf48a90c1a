"""Assembly of the finite-volume quasi-energy matrices.

The lattice model couples a random on-site potential v_j (i.i.d., bounded
density, support inside [-1, 1]) on Z^d to a quasi-periodic drive carried by
nu extra mode directions.  After the Fourier lift the operator acts on
l2(Z^(d+nu)):

    schrodinger:  diag(n.omega + theta + v_j) + eps * Lap_j + drive
    wave:         diag((n.omega + theta)^2 + v_j) + eps * Lap_j + drive

where Lap_j is the adjacency Laplacian (matrix element 1 between l1-adjacent
spatial sites) and the drive hops n -> n +/- e_k at amplitude W_k(j).  The
drive profile obeys sum_k |W_k(j)| <= 2 nu delta exp(-b|j|); the default
profile W_k(j) = delta exp(-b|j|) sits inside that envelope with slack.

Truncation to a finite region is Dirichlet: couplings leaving the region are
dropped.  Matrices are dense up to `dense_cap` sites and CSR-sparse above.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import WindowMismatchError
from .lattice import Region

SCHRODINGER = "schrodinger"
WAVE = "wave"


@dataclass(frozen=True)
class GDistribution:
    """Single-site disorder law.  Only bounded-density laws supported; the
    default is uniform on [-1, 1] with density bound 1/2."""

    kind: str = "uniform"
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind != "uniform":
            raise ValueError(f"unsupported distribution kind: {self.kind!r}")
        if not (-1.0 <= self.lo < self.hi <= 1.0):
            raise ValueError("support must be a nonempty interval inside [-1, 1]")

    @property
    def density_bound(self) -> float:
        return 1.0 / (self.hi - self.lo)

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=count)


@dataclass(frozen=True)
class OperatorSpec:
    """All model parameters.

    eps: spatial hopping strength; delta: drive strength; b: spatial decay
    rate of the drive envelope; model: 'schrodinger' or 'wave'.  A custom
    drive profile maps (k, j_tuple) -> W_k(j) and is validated against the
    decay envelope at assembly time.
    """

    d: int = 1
    nu: int = 1
    eps: float = 0.0
    delta: float = 0.0
    b: float = 1.0
    model: str = SCHRODINGER
    g: GDistribution = field(default_factory=GDistribution)
    drive_profile: Callable[[int, tuple[int, ...]], float] | None = None
    dense_cap: int = 4000

    def __post_init__(self):
        if self.d < 1 or self.nu < 1:
            raise ValueError("d and nu must be positive")
        if self.eps < 0 or self.delta < 0 or self.b <= 0:
            raise ValueError("eps, delta >= 0 and b > 0 required")
        if self.model not in (SCHRODINGER, WAVE):
            raise ValueError(f"unknown model {self.model!r}")

    def drive_amplitude(self, k: int, j: tuple[int, ...]) -> float:
        absj = sum(abs(c) for c in j)
        if self.drive_profile is None:
            return self.delta * np.exp(-self.b * absj)
        w = self.drive_profile(k, j)
        return w

    def drive_envelope(self, j: tuple[int, ...]) -> float:
        absj = sum(abs(c) for c in j)
        return 2.0 * self.nu * self.delta * np.exp(-self.b * absj)

    def with_(self, **kw) -> "OperatorSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class FrequencyVector:
    """Drive frequency vector with components in (0, 1]."""

    omega: tuple[float, ...]

    def __post_init__(self):
        if not all(0.0 < w <= 1.0 for w in self.omega):
            raise ValueError("frequency components must lie in (0, 1]")

    @property
    def nu(self) -> int:
        return len(self.omega)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)


@dataclass(frozen=True)
class DisorderSample:
    """One realization of the i.i.d. potential on a finite spatial window.

    Regenerating with the same (seed, window, g) gives bit-identical values:
    draws happen in one vectorized call over the lexicographic site order.
    """

    values: dict[tuple[int, ...], float]
    seed: int
    window: tuple[tuple[int, int], ...]
    g: GDistribution

    def value_array(self, j_sites: np.ndarray) -> np.ndarray:
        try:
            return np.array([self.values[tuple(row)] for row in j_sites])
        except KeyError as exc:
            raise WindowMismatchError(
                f"site {exc.args[0]} outside disorder window {self.window}") from exc


def window_sites(window: tuple[tuple[int, int], ...]) -> list[tuple[int, ...]]:
    axes = [range(lo, hi + 1) for lo, hi in window]
    out = [()]
    for ax in axes:
        out = [p + (x,) for p in out for x in ax]
    return out


def sample_disorder(g: GDistribution, window: tuple[tuple[int, int], ...],
                    seed: int) -> DisorderSample:
    """Draw one i.i.d. disorder realization on the window, reproducibly."""
    window = tuple((int(lo), int(hi)) for lo, hi in window)
    for lo, hi in window:
        if hi < lo:
            raise ValueError("empty window axis")
    sites = window_sites(window)
    rng = np.random.default_rng(seed)
    draws = g.sample(rng, len(sites))
    return DisorderSample(values=dict(zip(sites, draws)), seed=int(seed),
                          window=window, g=g)


def window_for_region(region: Region, pad: int = 0) -> tuple[tuple[int, int], ...]:
    """Smallest spatial window covering the region's j-projection."""
    j = region.sites[:, : region.d]
    return tuple((int(j[:, a].min()) - pad, int(j[:, a].max()) + pad)
                 for a in range(region.d))


def zero_disorder(window: tuple[tuple[int, int], ...],
                  g: GDistribution | None = None) -> DisorderSample:
    """The V = 0 realization, for free-lattice comparisons."""
    g = g or GDistribution()
    return DisorderSample(values={s: 0.0 for s in window_sites(window)},
                          seed=0, window=tuple(window), g=g)


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """Finite-volume quasi-energy matrix with its provenance.

    `entries` is dense (ndarray) for small regions, CSR above the spec's
    dense cap.  Rows/columns follow the region's lexicographic site order.
    """

    region: Region
    entries: object
    spec: OperatorSpec
    theta: float
    omega: FrequencyVector
    sample: DisorderSample

    @property
    def n(self) -> int:
        return self.region.n_sites

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.entries)

    def dense(self) -> np.ndarray:
        return self.entries.toarray() if self.is_sparse else self.entries

    def diagonal(self) -> np.ndarray:
        return self.entries.diagonal() if self.is_sparse else np.diag(self.entries)

    def norm_bound(self) -> float:
        """Row-sum (infinity-norm) upper bound on the operator norm."""
        if self.is_sparse:
            return float(np.abs(self.entries).sum(axis=1).max())
        return float(np.abs(self.entries).sum(axis=1).max())


def _diag_values(spec: OperatorSpec, region: Region, sample: DisorderSample,
                 omega: FrequencyVector, theta: float) -> np.ndarray:
    d = spec.d
    j_sites = region.sites[:, :d]
    n_sites = region.sites[:, d:]
    phase = n_sites @ omega.as_array() + theta
    v = sample.value_array(j_sites)
    if spec.model == WAVE:
        return phase ** 2 + v
    return phase + v


def _hopping_lists(spec: OperatorSpec, region: Region):
    """COO triplets for the spatial Laplacian and the drive block (upper
    triangle only; symmetrized by caller)."""
    idx = region.site_index()
    d = spec.d
    dim = region.dim
    lap_r, lap_c = [], []
    drv_r, drv_c, drv_v = [], [], []
    for i, row in enumerate(region.sites):
        t = tuple(row)
        for axis in range(dim):
            nb = list(t)
            nb[axis] += 1
            jdx = idx.get(tuple(nb))
            if jdx is None:
                continue
            if axis < d:
                lap_r.append(i)
                lap_c.append(jdx)
            else:
                k = axis - d
                w = spec.drive_amplitude(k, t[:d])
                drv_r.append(i)
                drv_c.append(jdx)
                drv_v.append(w)
    return (np.array(lap_r), np.array(lap_c)), (np.array(drv_r), np.array(drv_c), np.array(drv_v))


def _validate_profile(spec: OperatorSpec, region: Region):
    if spec.drive_profile is None:
        return
    seen = set()
    for row in region.sites[:, : spec.d]:
        t = tuple(row)
        if t in seen:
            continue
        seen.add(t)
        total = sum(abs(spec.drive_amplitude(k, t)) for k in range(spec.nu))
        if total > spec.drive_envelope(t) + 1e-12:
            raise ValueError(f"drive profile violates decay envelope at j={t}")


def assemble_parts(spec: OperatorSpec, region: Region, sample: DisorderSample,
                   omega: FrequencyVector):
    """Pieces of the matrix: (mode phases n.omega, potential values,
    laplacian COO, drive COO).  Used by `assemble` and by the dynamics
    module, which applies its own scaling convention to the lift."""
    if omega.nu != spec.nu:
        raise ValueError("omega dimension must match spec.nu")
    _validate_profile(spec, region)
    d = spec.d
    phase = region.sites[:, d:] @ omega.as_array()
    v = sample.value_array(region.sites[:, :d])
    lap, drv = _hopping_lists(spec, region)
    return phase, v, lap, drv


def assemble(spec: OperatorSpec, region: Region, sample: DisorderSample,
             omega: FrequencyVector, theta: float) -> HamiltonianMatrix:
    """Build the truncated quasi-energy matrix for the given phase theta."""
    phase, v, (lr, lc), (dr, dc, dv) = assemble_parts(spec, region, sample, omega)
    ns = region.n_sites
    diag = (phase + theta) ** 2 + v if spec.model == WAVE else phase + theta + v
    if ns <= spec.dense_cap:
        h = np.zeros((ns, ns))
        h[np.arange(ns), np.arange(ns)] = diag
        if lr.size:
            h[lr, lc] += spec.eps
            h[lc, lr] += spec.eps
        if dr.size:
            h[dr, dc] += dv
            h[dc, dr] += dv
        entries = h
    else:
        rows = np.concatenate([np.arange(ns), lr, lc, dr, dc])
        cols = np.concatenate([np.arange(ns), lc, lr, dc, dr])
        vals = np.concatenate([diag, np.full(lr.size, spec.eps),
                               np.full(lc.size, spec.eps), dv, dv])
        entries = sp.csr_matrix((vals, (rows, cols)), shape=(ns, ns))
    return HamiltonianMatrix(region=region, entries=entries, spec=spec,
                             theta=float(theta), omega=omega, sample=sample)


@dataclass(frozen=True)
class SupportCheck:
    """Observed eigenvalue hull against the a-priori containment interval."""

    observed_lo: float
    observed_hi: float
    bound_lo: float
    bound_hi: float
    ok: bool
    violations: int


def spectrum_support_check(spec: OperatorSpec, region: Region,
                           samples: list[DisorderSample],
                           omega: FrequencyVector, theta: float = 0.0) -> SupportCheck:
    """Check that all finite-volume eigenvalues stay inside the diagonal
    sweep widened by the hopping norm 2 d eps and the drive norm 2 nu delta."""
    if not samples:
        raise ValueError("need at least one sample")
    widen = 2.0 * spec.d * spec.eps + 2.0 * spec.nu * spec.delta
    g_lo, g_hi = spec.g.support
    d = spec.d
    phases = region.sites[:, d:] @ omega.as_array() + theta
    if spec.model == WAVE:
        ph2 = phases ** 2
        diag_lo, diag_hi = float(ph2.min()) + g_lo, float(ph2.max()) + g_hi
    else:
        diag_lo, diag_hi = float(phases.min()) + g_lo, float(phases.max()) + g_hi
    lo_bound, hi_bound = diag_lo - widen, diag_hi + widen
    obs_lo, obs_hi = np.inf, -np.inf
    violations = 0
    for sample in samples:
        h = assemble(spec, region, sample, omega, theta)
        vals = np.linalg.eigvalsh(h.dense())
        obs_lo = min(obs_lo, float(vals.min()))
        obs_hi = max(obs_hi, float(vals.max()))
        violations += int(np.sum((vals < lo_bound - 1e-9) | (vals > hi_bound + 1e-9)))
    return SupportCheck(observed_lo=obs_lo, observed_hi=obs_hi, bound_lo=lo_bound,
                        bound_hi=hi_bound, ok=(violations == 0), violations=violations)


def theta_derivative_check(spec: OperatorSpec, region: Region, sample: DisorderSample,
                           omega: FrequencyVector, theta: float, h: float = 0.1,
                           one_sided: bool = False) -> float:
    """Finite-difference d/dtheta of the matrix against its exact value.

    The entries are affine (schrodinger) or quadratic (wave) in theta, so a
    central difference is exact; a one-sided difference on the wave model
    deviates by exactly h on the diagonal.
    """
    hp = assemble(spec, region, sample, omega, theta + h).dense()
    base = assemble(spec, region, sample, omega, theta).dense()
    if one_sided:
        fd = (hp - base) / h
    else:
        hm = assemble(spec, region, sample, omega, theta - h).dense()
        fd = (hp - hm) / (2.0 * h)
    ns = region.n_sites
    if spec.model == WAVE:
        d = spec.d
        phases = region.sites[:, d:] @ omega.as_array() + theta
        expected = np.diag(2.0 * phases)
    else:
        expected = np.eye(ns)
    return float(np.max(np.abs(fd - expected)))
