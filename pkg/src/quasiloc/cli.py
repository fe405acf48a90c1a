"""Experiment orchestration: validated configs, seeded reproducible runs,
CSV/JSON artifacts, and byte-exact replay.

Every artifact embeds the resolved config, its hash, the master seed, and
the package version; nothing time-stamped or machine-dependent is written,
so a replay under the same seeds reproduces every byte.  Trial scheduling
reduces results in trial-index order, which makes the outputs independent
of the worker count.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NearSingularError
from .frequency import (DiophantineParams, ambient_block_spectra, census_bad_boxes,
                        diophantine_check, melnikov_pair_constraints,
                        melnikov_triple_constraints, pair_margin,
                        standard_frequency, triple_margin)
from .greens import (auxiliary_matrix, green, poisson_residual,
                     resolvent_identity_residual, sandwich_check)
from .lattice import make_box
from .measure import counting_shift_check, wegner_theta, wegner_x
from .msa import msa_run, schedule
from .operators import (FrequencyVector, GDistribution, OperatorSpec, WAVE,
                        assemble, sample_disorder, theta_derivative_check,
                        window_for_region, zero_disorder)
from .spectral import (decay_profile, eigensolve, localization_census,
                       schnol_bound_check)
from .dynamics import (delta_packet, evolve_schrodinger, localization_contrast,
                       window_radius)

KINDS = ("identities", "wegner", "exclusion", "msa", "dynamics", "localization")


@dataclass
class ExperimentConfig:
    """Round-trippable description of one experiment run."""

    kind: str
    seed: int = 12345
    workers: int = 1
    trials: int = 100
    operator: dict = field(default_factory=lambda: {
        "d": 1, "nu": 1, "eps": 0.05, "delta": 0.01, "b": 1.0,
        "model": "schrodinger", "g": {"kind": "uniform", "lo": -1.0, "hi": 1.0}})
    frequency: dict = field(default_factory=lambda: {
        "generator": "golden", "diophantine": {"A": 2.0, "c": 0.1, "M": 100}})
    schedule: dict = field(default_factory=lambda: {
        "n0": 8, "C": 2.0, "sigma": 0.5, "gamma0": 1.0, "levels": 2,
        "mode": "steep", "alpha": 1.5})
    experiment: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind: must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed: must be a non-negative integer")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        op = self.operator
        for key in ("d", "nu"):
            if int(op.get(key, 0)) < 1:
                raise ConfigError(f"operator.{key}: must be a positive integer")
        for key in ("eps", "delta"):
            if float(op.get(key, 0.0)) < 0:
                raise ConfigError(f"operator.{key}: must be >= 0")
        if float(op.get("b", 1.0)) <= 0:
            raise ConfigError("operator.b: must be > 0")
        if op.get("model", "schrodinger") not in ("schrodinger", "wave"):
            raise ConfigError("operator.model: must be 'schrodinger' or 'wave'")
        g = op.get("g", {})
        lo, hi = float(g.get("lo", -1.0)), float(g.get("hi", 1.0))
        if not (-1.0 <= lo < hi <= 1.0):
            raise ConfigError("operator.g: support must be inside [-1, 1]")
        sch = self.schedule
        if not (0.0 < float(sch.get("sigma", 0.5)) < 1.0):
            raise ConfigError("schedule.sigma: must lie in (0, 1)")
        if float(sch.get("C", 2.0)) <= 1.0:
            raise ConfigError("schedule.C: must exceed 1")
        if not (1.0 < float(sch.get("alpha", 1.5)) < 2.0):
            raise ConfigError("schedule.alpha: must lie in (1, 2)")
        if int(sch.get("levels", 1)) < 1:
            raise ConfigError("schedule.levels: must be >= 1")
        if sch.get("mode", "steep") not in ("steep", "mild"):
            raise ConfigError("schedule.mode: must be 'steep' or 'mild'")
        freq = self.frequency
        if "omega" in freq:
            if not all(0.0 < float(w) <= 1.0 for w in freq["omega"]):
                raise ConfigError("frequency.omega: components must lie in (0, 1]")
        elif freq.get("generator") not in ("golden", "sqrt2", "mixed"):
            raise ConfigError("frequency.generator: unknown generator")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown config field")
        cfg = ExperimentConfig(**obj)
        cfg.validate()
        return cfg

    def build_spec(self) -> OperatorSpec:
        op = self.operator
        g = op.get("g", {})
        return OperatorSpec(d=int(op["d"]), nu=int(op["nu"]), eps=float(op["eps"]),
                            delta=float(op["delta"]), b=float(op.get("b", 1.0)),
                            model=op.get("model", "schrodinger"),
                            g=GDistribution(kind=g.get("kind", "uniform"),
                                            lo=float(g.get("lo", -1.0)),
                                            hi=float(g.get("hi", 1.0))))

    def build_frequency(self) -> FrequencyVector:
        if "omega" in self.frequency:
            return FrequencyVector(tuple(float(w) for w in self.frequency["omega"]))
        return standard_frequency(self.frequency["generator"], int(self.operator["nu"]))


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".toml", ".tml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        obj = tomllib.loads(text)
    else:
        obj = json.loads(text)
    return ExperimentConfig.from_dict(obj)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> object:
    return float(f"{x:.12g}") if isinstance(x, (float, np.floating)) else x


# --------------------------------------------------------------------------
# experiment bodies; each returns (checks, {csv_name: (header, rows)})

def _run_identities(cfg: ExperimentConfig):
    spec = cfg.build_spec()
    omega = cfg.build_frequency()
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst: dict[str, float] = {}

    def note(name: str, instance: int, residual: float):
        rows.append([name, instance, _fmt(residual)])
        worst[name] = max(worst.get(name, 0.0), abs(residual))

    n_inst = cfg.trials
    for i in range(n_inst):
        radius = int(rng.integers(2, 5))
        box = make_box((0,) * (spec.d + spec.nu), radius, d=spec.d, nu=spec.nu)
        window = window_for_region(box)
        sample = sample_disorder(spec.g, window, int(rng.integers(2 ** 31)))
        theta = float(rng.uniform(0, 1))
        sspec = spec.with_(model="schrodinger")
        h = assemble(sspec, box, sample, omega, theta)
        vals = np.linalg.eigvalsh(h.dense())

        s = float(rng.uniform(-1, 1))
        vals_s = np.linalg.eigvalsh(assemble(sspec, box, sample, omega, theta + s).dense())
        note("shift_covariance", i, float(np.abs(vals_s - (vals + s)).max()))

        e = _energy_away(vals, rng)
        lam = _energy_away(vals, rng)
        note("resolvent_identity", i, resolvent_identity_residual(h, e, lam))

        kappa = float(rng.uniform(0.01, 0.4))
        note("counting_shift", i,
             counting_shift_check(sspec, box, sample, omega, theta, e, kappa))

        note("theta_derivative_schrodinger", i,
             theta_derivative_check(sspec, box, sample, omega, theta, h=0.25))
        wspec = spec.with_(model="wave")
        note("theta_derivative_wave", i,
             theta_derivative_check(wspec, box, sample, omega, theta, h=0.25))

        # boundary representation of an eigenpair on an interior sub-box
        amb = make_box((0,) * (spec.d + spec.nu), radius + 2, d=spec.d, nu=spec.nu)
        amb_sample = sample_disorder(spec.g, window_for_region(amb),
                                     int(rng.integers(2 ** 31)))
        h_amb = assemble(sspec, amb, amb_sample, omega, theta)
        pairs = eigensolve(h_amb)
        pair = pairs[int(rng.integers(len(pairs)))]
        sub = make_box((0,) * (spec.d + spec.nu), radius, d=spec.d, nu=spec.nu)
        sub_idx = [h_amb.region.site_index()[tuple(r)] for r in sub.sites]
        sub_vals = np.linalg.eigvalsh(h_amb.dense()[np.ix_(sub_idx, sub_idx)])
        if np.abs(sub_vals - pair.value).min() > 1e-4:
            note("poisson_boundary", i,
                 poisson_residual(h_amb, pair.value, pair.vector, sub))

        # compression identity on the wave model
        hw = assemble(wspec, box, sample, omega, theta)
        wvals = np.linalg.eigvalsh(hw.dense())
        ew = _energy_away(wvals, rng)
        star_n = box.n_sites // 2
        star_rows = box.sites[rng.permutation(box.n_sites)[:star_n]]
        from .lattice import Region, _lex_sorted
        star = Region(kind="elementary", d=spec.d, nu=spec.nu,
                      descriptor={"subset_of": box.descriptor},
                      sites=_lex_sorted(map(tuple, star_rows)))
        try:
            aux = auxiliary_matrix(hw, star, theta, ew)
            g_full = green(hw, ew)
            import scipy.linalg as la
            a_inv = la.solve(aux.a, np.eye(aux.dim), assume_a="sym")
            block = g_full[np.ix_(aux.complement_idx, aux.complement_idx)]
            note("schur_compression", i, float(np.abs(a_inv - block).max()))
            if not sandwich_check(aux, g_full, n0=radius):
                note("schur_sandwich_violation", i, 1.0)
        except NearSingularError:
            pass
    checks = [{"name": k, "max_residual": _fmt(v), "tolerance": 1e-8,
               "pass": bool(v <= 1e-8)} for k, v in sorted(worst.items())]
    return checks, {"identities.csv": (["check", "instance", "residual"], rows)}


def _energy_away(vals: np.ndarray, rng: np.random.Generator,
                 min_dist: float = 0.05) -> float:
    lo, hi = float(vals.min()) - 1.0, float(vals.max()) + 1.0
    for _ in range(256):
        e = float(rng.uniform(lo, hi))
        if np.abs(vals - e).min() >= min_dist:
            return e
    return hi + 1.0


def _run_wegner(cfg: ExperimentConfig):
    spec = cfg.build_spec()
    omega = cfg.build_frequency()
    exp = cfg.experiment
    radius = int(exp.get("radius", 6))
    e = float(exp.get("E", 0.0))
    kappas = [float(k) for k in exp.get("kappas", [1e-1, 1e-2, 1e-3, 1e-4])]
    box = make_box((0,) * (spec.d + spec.nu), radius, d=spec.d, nu=spec.nu)
    sample = sample_disorder(spec.g, window_for_region(box), cfg.seed)
    rows = []
    ok = True
    for kappa in kappas:
        est = wegner_theta(spec.with_(model="schrodinger"), box, sample, omega,
                           e, kappa)
        rows.append(["theta", kappa, _fmt(est.value), _fmt(est.bound), est.passes])
        ok &= est.passes
        est_x = wegner_x(spec, box, omega, 0.25, e, kappa,
                         trials=int(exp.get("x_trials", 200)), master_seed=cfg.seed)
        rows.append(["x", kappa, _fmt(est_x.value), _fmt(est_x.bound), est_x.passes])
        ok &= est_x.passes
    checks = [{"name": "wegner_bounds", "pass": bool(ok)}]
    return checks, {"wegner.csv": (["variable", "kappa", "value", "bound", "pass"], rows)}


def _run_exclusion(cfg: ExperimentConfig):
    spec = cfg.build_spec()
    omega = cfg.build_frequency()
    exp = cfg.experiment
    n0 = int(exp.get("n0", 4))
    ambient = int(exp.get("ambient", 16))
    eta = exp.get("eta")
    census_eta = float(exp.get("census_eta", 1e-9))
    sample = sample_disorder(spec.g, ((-ambient - n0, ambient + n0),), cfg.seed)
    spectra = ambient_block_spectra(spec, sample, n0, ambient)
    pair_rep = melnikov_pair_constraints(spectra, ambient, n0, 0.5, nu=spec.nu,
                                         eta=float(eta) if eta else None)
    dio_ok = diophantine_check(omega, DiophantineParams(m_cutoff=2 * ambient))
    if spec.model == WAVE:
        margin = triple_margin(omega, spectra, ambient)
        accepted = dio_ok and margin > 16 * ambient * spec.nu * census_eta
    else:
        margin = pair_margin(omega, spectra, ambient)
        accepted = dio_ok and margin > 2.0 * census_eta
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = 0
    bound = 2 if spec.model == WAVE else 1
    for t in range(cfg.trials):
        theta = float(rng.uniform(0, 1))
        ij = int(rng.integers(-(ambient - n0), ambient - n0 + 1))
        mu = spectra[ij + ambient - n0]
        pick = float(mu[rng.integers(len(mu))])
        nn = int(rng.integers(-(ambient - n0), ambient - n0 + 1))
        base = (nn * omega.omega[0] + theta)
        diag = base ** 2 if spec.model == WAVE else base
        e = diag + pick + float(rng.uniform(-0.4, 0.4)) * census_eta
        res = census_bad_boxes(spec, sample, omega, theta, e, n0, ambient,
                               resonance_eta=census_eta)
        rows.append([t, _fmt(theta), _fmt(e), res.max_disjoint, res.resonant_total])
        worst = max(worst, res.max_disjoint)
    checks = [
        {"name": "frequency_accepted", "pass": bool(accepted),
         "diophantine": bool(dio_ok), "pair_margin": _fmt(margin)},
        {"name": "excluded_measure", "value": _fmt(pair_rep.excluded_measure),
         "components": pair_rep.component_count, "pass": True},
        {"name": "census_disjoint_bound", "max_seen": worst, "bound": bound,
         "pass": bool(not accepted or worst <= bound)},
    ]
    return checks, {"census.csv": (["trial", "theta", "E", "max_disjoint",
                                    "resonant_total"], rows)}


def _run_msa(cfg: ExperimentConfig):
    spec = cfg.build_spec()
    omega = cfg.build_frequency()
    sch = cfg.schedule
    exp = cfg.experiment
    sched = schedule(delta=spec.delta if spec.delta > 0 else 0.01,
                     c=float(sch.get("c_small", 3.0)), sigma=float(sch["sigma"]),
                     c_exp=float(sch["C"]), levels=int(sch["levels"]),
                     mode=sch.get("mode", "steep"), alpha=float(sch.get("alpha", 1.5)),
                     n0=int(sch["n0"]) if sch.get("n0") else None,
                     gamma0=float(sch.get("gamma0", 1.0)), dim=spec.d + spec.nu)
    thetas = (np.arange(int(exp.get("theta_points", 8))) + 0.5) / int(exp.get("theta_points", 8))
    censuses = msa_run(spec, sched, omega, int(exp.get("samples", 2)), thetas,
                       float(exp.get("E", 0.0)), master_seed=cfg.seed,
                       workers=cfg.workers)
    files = {}
    summary_rows = []
    for c in censuses:
        files[f"msa_scale_{c.scale}.csv"] = (
            ["scale", "sample", "theta", "verdict", "op_norm", "gamma_fit"],
            [[r[0], r[1], _fmt(r[2]), r[3], _fmt(r[4]), _fmt(r[5])] for r in c.rows])
        summary_rows.append([c.scale, c.trials, _fmt(c.good_fraction),
                             _fmt(c.gamma_mean), _fmt(c.gamma_degradation),
                             c.max_disjoint_bad])
    files["msa_summary.csv"] = (["scale", "trials", "good_fraction", "gamma_mean",
                                 "gamma_degradation", "max_disjoint_bad"], summary_rows)
    monotone = all(summary_rows[k][2] <= summary_rows[k + 1][2] + 1e-12
                   for k in range(len(summary_rows) - 1))
    checks = [{"name": "msa_census", "scales": [c.scale for c in censuses],
               "good_fraction_monotone": bool(monotone), "pass": True}]
    return checks, files


def _run_dynamics(cfg: ExperimentConfig):
    spec = cfg.build_spec()
    omega = cfg.build_frequency()
    exp = cfg.experiment
    t_free = float(exp.get("free_T", 40.0))
    dt = float(exp.get("dt", 0.05))
    r = window_radius(spec, t_free)
    packet = delta_packet(r, spec.d)
    free = evolve_schrodinger(spec.with_(delta=0.0, eps=float(exp.get("eps", spec.eps))),
                              packet, omega, 0.0, t_free, dt,
                              sample=zero_disorder(tuple((-r, r) for _ in range(spec.d)),
                                                   spec.g))
    expect = 2.0 * (spec.eps ** 2) * free.times ** 2
    rel = np.abs(free.second_moment - expect) / np.maximum(expect, 1e-12)
    free_err = float(rel[free.times > 1.0].max())
    traj_rows = [[_fmt(t), _fmt(m), _fmt(rp), _fmt(nd)] for t, m, rp, nd in
                 zip(free.times, free.second_moment, free.return_prob,
                     free.norm_drift)]
    oracle_rows = [[_fmt(t), _fmt(m), _fmt(x)] for t, m, x in
                   zip(free.times, free.second_moment, expect)]
    contrast = None
    if exp.get("contrast", False):
        contrast = localization_contrast(spec, omega, 0.0,
                                         float(exp.get("T", 200.0)),
                                         int(exp.get("contrast_trials", 5)),
                                         dt=float(exp.get("contrast_dt", 0.25)),
                                         master_seed=cfg.seed)
    checks = [{"name": "free_ballistic_oracle", "max_rel_err": _fmt(free_err),
               "tolerance": 0.01, "pass": bool(free_err <= 0.01),
               "dt": float(exp.get("dt", 0.05)), "window_radius": r}]
    if contrast is not None:
        checks.append({"name": "contrast", "free_growth": _fmt(contrast.free_growth),
                       "disordered_growth_max": _fmt(contrast.disordered_growth_max),
                       "pass": True})
    return checks, {
        "trajectory.csv": (["t", "second_moment", "return_prob", "norm_drift"],
                           traj_rows),
        "free_moment.csv": (["t", "second_moment", "ballistic"], oracle_rows),
    }


def _run_localization(cfg: ExperimentConfig):
    spec = cfg.build_spec()
    omega = cfg.build_frequency()
    exp = cfg.experiment
    radius = int(exp.get("radius", 8))
    box = make_box((0,) * (spec.d + spec.nu), radius, d=spec.d, nu=spec.nu)
    census = localization_census(spec, int(exp.get("samples", 5)), box, omega,
                                 theta=float(exp.get("theta", 0.25)),
                                 window=tuple(exp.get("window", (-0.5, 0.5))),
                                 gamma_min=float(exp.get("gamma_min", 1.0)),
                                 pr_max=float(exp.get("pr_max", 10.0)),
                                 master_seed=cfg.seed)
    sample = sample_disorder(spec.g, window_for_region(box), cfg.seed)
    pairs = eigensolve(assemble(spec, box, sample, omega, 0.25))
    schnol_ok = all(schnol_bound_check(p, 2.0) for p in pairs)
    pair_rows = []
    for p in pairs:
        try:
            rate, _ = decay_profile(p)
        except ValueError:
            rate = float("nan")
        pair_rows.append([_fmt(p.value), list(p.loc_center.coords), _fmt(rate),
                          _fmt(p.participation_ratio())])
    rows = [[census.total_pairs, census.localized_pairs, _fmt(census.fraction)]]
    checks = [{"name": "localization_census", "fraction": _fmt(census.fraction),
               "pass": True},
              {"name": "schnol_bound", "pass": bool(schnol_ok)}]
    return checks, {
        "localization.csv": (["pairs", "localized", "fraction"], rows),
        "eigenpairs.csv": (["value", "loc_center", "decay_rate",
                            "participation_ratio"], pair_rows),
    }


_RUNNERS = {
    "identities": _run_identities,
    "wegner": _run_wegner,
    "exclusion": _run_exclusion,
    "msa": _run_msa,
    "dynamics": _run_dynamics,
    "localization": _run_localization,
}


def run(cfg: ExperimentConfig, out_dir: str | Path) -> int:
    """Execute the configured experiment; returns a process exit status
    (nonzero iff a hard check failed)."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks, files = _RUNNERS[cfg.kind](cfg)
    digest = config_hash(cfg)
    (out / "config.json").write_text(
        json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    for name, (header, rows) in files.items():
        _write_csv(out / name, header, rows)
    summary = {
        "version": __version__,
        "config_hash": digest,
        "master_seed": cfg.seed,
        "kind": cfg.kind,
        "checks": checks,
        "artifacts": sorted(files),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return 0 if all(c.get("pass", True) for c in checks) else 1


def replay(artifact_dir: str | Path) -> dict:
    """Re-execute a recorded run and byte-compare every artifact.

    Raises ConfigError on a hash mismatch or missing artifacts; returns a
    report dict with any byte mismatches (empty list means exact replay).
    """
    src = Path(artifact_dir)
    cfg_path, summary_path = src / "config.json", src / "summary.json"
    if not cfg_path.exists() or not summary_path.exists():
        raise ConfigError("artifacts: config.json and summary.json required")
    cfg = ExperimentConfig.from_dict(json.loads(cfg_path.read_text()))
    summary = json.loads(summary_path.read_text())
    if config_hash(cfg) != summary.get("config_hash"):
        raise ConfigError("config_hash: artifact hash does not match its config")
    for name in summary.get("artifacts", []):
        if not (src / name).exists():
            raise ConfigError(f"artifacts: missing {name}")
    mismatches = []
    with tempfile.TemporaryDirectory() as tmp:
        run(cfg, tmp)
        for name in [*summary.get("artifacts", []), "summary.json"]:
            if (Path(tmp) / name).read_bytes() != (src / name).read_bytes():
                mismatches.append(name)
    return {"match": not mismatches, "mismatches": mismatches}


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="quasiloc",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, required=True)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
    pr = sub.add_parser("replay")
    pr.add_argument("artifact_dir", type=str)
    args = parser.parse_args(argv)
    if args.command == "replay":
        report = replay(args.artifact_dir)
        print(json.dumps(report, indent=1))
        sys.exit(0 if report["match"] else 1)
    cfg = load_config(args.config) if args.config else ExperimentConfig(kind=args.command)
    cfg.kind = args.command
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.trials is not None:
        cfg.trials = args.trials
    cfg.validate()
    sys.exit(run(cfg, args.out))


if __name__ == "__main__":
    main()
