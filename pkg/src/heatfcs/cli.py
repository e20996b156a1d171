"""Config-driven experiment runner.

    heatfcs run config.yaml [--output-dir DIR] [--workers N] [--seed S] [--format csv|json]
    heatfcs validate config.yaml
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from . import asymptotics as asy
from . import confined as cf
from . import models, quasifree
from .config import ConfigError, ExperimentConfig, load_yaml, parse_config
from .fock import DEFAULT_CAP
from .reports import CheckResult, fmt17

WORKERS_ENV = "HEATFCS_WORKERS"
CONFINED_TASKS = ("distribution", "sample", "bounds_suite")

S_PRESETS = {
    "zz": np.kron(models.SIGMA[3], models.SIGMA[3]),
    "xy": -0.25 * (np.kron(models.SIGMA[1], models.SIGMA[1]) + np.real(np.kron(models.SIGMA[2], models.SIGMA[2]))),
    "heisenberg": 0.25
    * (
        np.kron(models.SIGMA[1], models.SIGMA[1])
        + np.real(np.kron(models.SIGMA[2], models.SIGMA[2]))
        + np.kron(models.SIGMA[3], models.SIGMA[3])
    ),
}


@dataclass
class Realized:
    confined: cf.ConfinedMultisystem | None
    quasifree: models.QuasiFreeSystem | None
    chi_plus_family: Callable | None  # beta -> (alpha -> chi_+)
    ell: int


def _xy_closed_form_ok(p: dict) -> bool:
    return float(p.get("J", 1.0)) == 1.0 and float(p.get("lambda_field", 1.0)) == 1.0


def fock_modes_needed(cfg: ExperimentConfig) -> int | None:
    p = cfg.params
    if cfg.model == "ebb":
        return 1 + cfg.ell * int(p.get("L", 2))
    if cfg.model == "spin_fermion":
        return 1 + sum(int(n) for n in p.get("n_modes", [2] * cfg.ell))
    if cfg.model == "xy":
        return 2 * int(p.get("L", 2)) + 1
    if cfg.model == "spin_lattice":
        return int(p.get("n_sites", 4))
    return None


def _mode_cap(cfg) -> int:
    return models.SPIN_SITE_CAP if cfg.model in ("xy", "spin_lattice") else DEFAULT_CAP


def realize(cfg: ExperimentConfig) -> Realized:
    p, beta, ell = cfg.params, cfg.beta, cfg.ell
    if cfg.model == "xy":
        if ell != 2:
            raise ConfigError("beta", "the XY chain has two reservoirs")
        m = models.build_xy(int(p.get("L", 2)), int(p.get("M", 0)), float(p.get("J", 1.0)), float(p.get("lambda_field", 1.0)), beta)
        fam = (lambda b: (lambda a: quasifree.chi_plus_xy_closed_form(b, a))) if _xy_closed_form_ok(p) else None
        return Realized(m.spin, m.jw, fam, 2)
    if cfg.model == "ebb":
        q = models.build_ebb(int(p.get("L", 2)), ell, float(p.get("lam", 0.5)), float(p.get("eps0", 1.0)), beta)
        conf = models.to_fock(q) if q.one_particle_dim <= DEFAULT_CAP else None
        return Realized(conf, q, None, ell)
    if cfg.model == "spin_fermion":
        n = p.get("n_modes", [2] * ell)
        if len(n) != ell:
            raise ConfigError("model.n_modes", f"expected {ell} entries")
        return Realized(models.build_spin_fermion(n, float(p.get("lam", 0.5)), beta), None, None, ell)
    if cfg.model == "spin_lattice":
        s = p.get("S_local", "xy")
        s = S_PRESETS[s] if isinstance(s, str) else np.array(s, dtype=float)
        sys_ = models.build_spin_lattice_1d(
            int(p.get("n_sites", 4)), int(p.get("boundary", 2)), s, p.get("J_boundary", 1.0), beta
        )
        return Realized(sys_, None, None, 2)
    if cfg.model == "custom":
        if "path" not in p:
            raise ConfigError("model.path", "custom models need an .npz path")
        return Realized(models.load_custom_npz(p["path"], beta), None, None, ell)
    raise ConfigError("model.kind", f"unknown model {cfg.model}")


def _log_chi(r: Realized) -> Callable[[float, np.ndarray], float]:
    if r.confined is not None:
        return lambda t, a: cf.log_chi_trace(r.confined, t, a)
    return lambda t, a: quasifree.log_chi_quasifree(r.quasifree, t, a)


def _chi_plus_family(r: Realized, cfg: ExperimentConfig):
    """Limiting CGF family, or the finite-time surrogate at the largest time."""
    if r.chi_plus_family is not None:
        return r.chi_plus_family, "closed_form"
    t = max(cfg.t_list)
    if t <= 0:
        raise ConfigError("t_list", "the finite-time surrogate needs a positive time")
    if r.quasifree is not None:
        return (lambda b: (lambda a: quasifree.log_chi_quasifree(dataclasses.replace(r.quasifree, beta=np.asarray(b)), t, a) / t)), f"finite_time(t={t:g})"
    return (lambda b: (lambda a: cf.log_chi_trace(dataclasses.replace(r.confined, beta=np.asarray(b)), t, a) / t)), f"finite_time(t={t:g})"


class Writer:
    def __init__(self, outdir: Path, fmt: str):
        self.outdir, self.fmt = outdir, fmt

    def table(self, stem: str, header: list, rows: list) -> str:
        name = f"{stem}.{self.fmt}"
        path = self.outdir / name
        if self.fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow([fmt17(x) if isinstance(x, (float, np.floating)) else x for x in row])
        else:
            recs = [{h: (float(x) if isinstance(x, (float, np.floating)) else x) for h, x in zip(header, row)} for row in rows]
            path.write_text(json.dumps(recs, indent=1))
        return name

    def json(self, stem: str, obj) -> str:
        name = f"{stem}.json"
        (self.outdir / name).write_text(json.dumps(obj, indent=1, default=_jsonable))
        return name


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


def _tstem(t: float) -> str:
    return f"{t:g}".replace(".", "p").replace("-", "m")


# ---------------------------------------------------------------------------
# tasks; each returns (files, checks, extra)


def task_distribution(cfg, r, w, workers):
    if r.confined is None:
        raise RuntimeError("distribution needs a confined (many-body) representation")
    files, checks = [], []
    hdr = [f"phi_{j + 1}" for j in range(r.ell)] + ["prob"]
    for t in cfg.t_list:
        d = cf.ttm_distribution(r.confined, t)
        files.append(w.table(f"distribution_t{_tstem(t)}", hdr, [list(ph) + [p] for ph, p in zip(d.phi, d.prob)]))
        checks.append(CheckResult(f"distribution_t{t:g}.normalization_defect", abs(1 - d.renormalization), 1e-10))
    return files, checks, {}


def task_cgf(cfg, r, w, workers):
    lc = _log_chi(r)
    pts = cfg.alpha_points()
    jobs = [(t, a) for t in cfg.t_list for a in pts]
    with ThreadPoolExecutor(max(1, workers)) as ex:
        vals = list(ex.map(lambda ja: lc(ja[0], ja[1]), jobs))
    rows = [list(a) + [t, float(np.exp(v)), v] for (t, a), v in zip(jobs, vals)]
    hdr = [f"alpha_{j + 1}" for j in range(r.ell)] + ["t", "chi", "log_chi"]
    checks = [CheckResult(f"cgf_t{t:g}.log_chi_at_0", abs(lc(t, np.zeros(r.ell))), 1e-12) for t in cfg.t_list]
    return [w.table("cgf", hdr, rows)], checks, {}


def task_symmetry_suite(cfg, r, w, workers):
    checks, out = [], {}
    pts = cfg.alpha_points()
    lc = _log_chi(r)
    for t in cfg.t_list:
        if r.confined is not None:
            tri, wit = cf.is_time_reversal_invariant(r.confined)
            out["time_reversal_witness"] = wit
            es = cf.check_evans_searles(r.confined, t, pts)
        else:
            es = max(abs(np.expm1(lc(t, cfg.beta - a) - lc(t, a))) for a in pts)
        out[f"es_asymmetry_t{t:g}"] = es
        checks.append(CheckResult(f"evans_searles_t{t:g}.max_asymmetry", es, 1e-8))
        if r.confined is not None and t > 0:
            fr = cf.check_fluctuation_relation(cf.ttm_distribution(r.confined, t), cfg.beta)
            out[f"fluctuation_relation_t{t:g}"] = fr
            checks.append(CheckResult(f"fluctuation_relation_t{t:g}.max_violation", fr["max_violation"], 1e-8))
            checks.append(CheckResult(f"fluctuation_relation_t{t:g}.sigma_marginal", fr["max_violation_sigma"], 1e-8))
            mom = cf.flux_moments(r.confined, t)
            ep = float(cfg.beta @ mom.mean)
            out[f"entropy_production_t{t:g}"] = ep
            checks.append(CheckResult(f"entropy_production_t{t:g}", ep, -1e-10, "min"))
    return [w.json("symmetry_suite", out)], checks, out


def task_bounds_suite(cfg, r, w, workers):
    if r.confined is None:
        raise RuntimeError("bounds_suite needs a confined (many-body) representation")
    sys_ = r.confined
    opt = cfg.options.get("bounds_suite", {})
    gpa = int(opt.get("grid_per_axis", 3))
    rows, checks = [], []
    pts = cfg.alpha_points()
    for t in cfg.t_list:
        worst_e = np.inf
        for a in pts:
            m = cf.check_bounds_energycorr(sys_, t, a, gpa)
            rows.append(["energycorr", t, *a, 0.0, m.lower, m.upper])
            worst_e = min(worst_e, m.min_margin)
        checks.append(CheckResult(f"energycorr_t{t:g}.min_margin", worst_e, -1e-10, "min"))
        worst_c = np.inf
        line = [a - a.mean() for a in pts]
        for a in line:
            for th in cfg.theta_list:
                a0 = float(np.max(np.abs(a)))
                region = cf.SupRegion(a0, max(abs(th), a0), gpa)
                c = cf.s_const_refined(sys_, region)
                m = cf.check_bounds_cut(sys_, t, a, th, region, c)
                rows.append(["cut", t, *a, th, m.lower, m.upper])
                worst_c = min(worst_c, m.min_margin)
        checks.append(CheckResult(f"cut_t{t:g}.min_margin", worst_c, -1e-10, "min"))
    hdr = ["bound", "t"] + [f"alpha_{j + 1}" for j in range(r.ell)] + ["theta", "lower_margin", "upper_margin"]
    return [w.table("bounds", hdr, rows)], checks, {}


def task_asymptotics(cfg, r, w, workers):
    opt = cfg.options.get("asymptotics", {})
    fam, source = _chi_plus_family(r, cfg)
    chi = fam(cfg.beta)
    A = float(opt.get("half_width", 2.0))
    n = int(opt.get("count", 81))
    s_max = float(opt.get("s_max", 0.1))
    n_s = int(opt.get("s_count", 41))
    axes = [np.linspace(-A, A, n)] * r.ell
    if source == "closed_form":
        grid = asy.cgf_grid_from_callable(chi, axes, {"source": source}, vectorized=True)
    else:
        grid = asy.cgf_grid_from_callable(chi, axes, {"source": source}, workers=workers)
    # conservation line (s.1 = 0) plus a coarse off-line sample
    line = np.linspace(-s_max, s_max, n_s)
    if r.ell == 2:
        s_pts = [[x, -x] for x in line] + [[x, x] for x in line if x != 0]
    else:
        s_pts = [x * np.eye(r.ell)[0] - x * np.eye(r.ell)[1] for x in line]
    rate = asy.legendre_transform(grid, np.array(s_pts))
    files = [w.table("rate_function", [f"s_{j + 1}" for j in range(r.ell)] + ["I", "exposed"],
                     [list(s) + [i, int(e)] for s, i, e in zip(rate.s_points, rate.I_values, rate.exposed)])]
    mean, mean_err = asy.mean_fluxes(chi, r.ell)
    i_mean = float(asy.legendre_transform(grid, [mean]).I_values[0])
    sym = asy.check_rate_symmetries(rate, cfg.beta, A)
    D, D_err = asy.clt_covariance(chi, r.ell)
    report = {"source": source, "mean_fluxes": mean, "mean_flux_error": mean_err, "I_at_mean": i_mean,
              "rate_symmetries": sym, "D": D, "D_error": D_err}
    checks = [
        CheckResult("rate.min_I", sym["min_I"], -1e-10, "min"),
        CheckResult("rate.I_at_mean", i_mean, 1e-6),
    ]
    if source == "closed_form":
        checks += [
            CheckResult("rate.es_asymmetry", sym["max_asymmetry"], 1e-3),
            CheckResult("rate.lower_bound_margin", sym["min_lower_bound_margin"], -1e-6, "min"),
            CheckResult("clt.sum_D_over_trace", abs(D.sum()) / max(np.trace(D), 1e-300), 1e-6),
        ]
        beta_eq = float(opt.get("beta_eq", 1.0))
        L, L_err = asy.kinetic_coefficients(fam, beta_eq, r.ell)
        D_eq, _ = asy.clt_covariance(fam(beta_eq * np.ones(r.ell)), r.ell)
        ons = asy.check_onsager_fdt(L, D_eq)
        report.update({"beta_eq": beta_eq, "L": L, "L_error": L_err, "D_eq": D_eq, "onsager": ons})
        checks += [
            CheckResult("onsager.fdt", ons["max_fdt_deviation"], 1e-3),
            CheckResult("onsager.reciprocity", ons["max_reciprocity_deviation"], 1e-5),
        ]
    files.append(w.json("asymptotics", report))
    return files, checks, {}


def task_sample(cfg, r, w, workers):
    if r.confined is None:
        raise RuntimeError("sample needs a confined (many-body) representation")
    opt = cfg.options.get("sample", {})
    n = int(opt.get("n", 100000))
    t = float(opt.get("t", next((t for t in cfg.t_list if t > 0), 1.0)))
    emp = cf.sample_ttm(r.confined, t, n, cfg.seed)
    exact = cf.ttm_distribution(r.confined, t)
    tv = cf.total_variation(emp, exact)
    hdr = [f"phi_{j + 1}" for j in range(r.ell)] + ["prob"]
    f = w.table(f"sample_t{_tstem(t)}", hdr, [list(ph) + [p] for ph, p in zip(emp.phi, emp.prob)])
    return [f], [CheckResult(f"sample_t{t:g}.total_variation", tv, float(opt.get("tv_tol", 0.01)))], {"tv": tv}


def task_linear_response(cfg, r, w, workers):
    opt = cfg.options.get("linear_response", {})
    fam, source = _chi_plus_family(r, cfg)
    beta_eq = float(opt.get("beta_eq", 1.0))
    h = float(opt.get("h", 1e-3))
    L, L_err = asy.kinetic_coefficients(fam, beta_eq, r.ell, h, h)
    D, D_err = asy.clt_covariance(fam(beta_eq * np.ones(r.ell)), r.ell, h)
    ons = asy.check_onsager_fdt(L, D)
    report = {"source": source, "beta_eq": beta_eq, "L": L, "L_error": L_err, "D": D, "D_error": D_err, "onsager": ons}
    checks = [CheckResult("linear_response.reciprocity", ons["max_reciprocity_deviation"], 1e-5)]
    if source == "closed_form":
        checks += [
            CheckResult("linear_response.fdt", ons["max_fdt_deviation"], 1e-3),
            CheckResult("linear_response.row_sums", ons["max_row_sum"], 1e-5),
        ]
    return [w.json("linear_response", report)], checks, {}


TASK_FUNCS = {
    "distribution": task_distribution,
    "cgf": task_cgf,
    "symmetry_suite": task_symmetry_suite,
    "bounds_suite": task_bounds_suite,
    "asymptotics": task_asymptotics,
    "sample": task_sample,
    "linear_response": task_linear_response,
}


def run(cfg: ExperimentConfig, workers: int = 1) -> dict:
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    w = Writer(outdir, cfg.format)
    manifest = {
        "config": cfg.raw,
        "effective": {"seed": cfg.seed, "format": cfg.format, "output_dir": str(outdir), "workers": workers},
        "versions": {"heatfcs": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
        "tasks": [],
    }
    t0 = time.perf_counter()
    realized = realize(cfg)
    manifest["build_seconds"] = time.perf_counter() - t0
    for name in cfg.tasks:
        entry = {"task": name}
        t0 = time.perf_counter()
        try:
            files, checks, _ = TASK_FUNCS[name](cfg, realized, w, workers)
            entry.update(status="ok", files=files, checks=[c.to_dict() for c in checks])
        except Exception as exc:  # noqa: BLE001 - a failed task must not stop the run
            entry.update(status="failed", error=f"{type(exc).__name__}: {exc}", files=[], checks=[])
        entry["wall_seconds"] = time.perf_counter() - t0
        manifest["tasks"].append(entry)
    manifest["all_passed"] = all(
        e["status"] == "ok" and all(c["pass"] for c in e["checks"]) for e in manifest["tasks"]
    )
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, default=_jsonable))
    return manifest


def estimates(cfg: ExperimentConfig) -> list[str]:
    """Memory and time estimates, plus a refusal when a Fock or spin cap is exceeded."""
    lines = []
    n_pts = cfg.alpha_points().shape[0]
    n_t = len(cfg.t_list)
    modes = fock_modes_needed(cfg)
    needs_confined = any(t in CONFINED_TASKS for t in cfg.tasks) or cfg.model in ("spin_fermion", "spin_lattice")
    if modes is not None:
        cap = _mode_cap(cfg)
        unit = "sites" if cfg.model in ("xy", "spin_lattice") else "modes"
        dim = 2**modes
        mem = dim * dim * 16
        lines.append(f"many-body: {modes} {unit} -> dim 2^{modes} = {dim}; dense matrix {dim}^2 * 16 B = {mem / 2**20:.1f} MiB")
        if modes > cap and needs_confined:
            raise ConfigError(
                "model",
                f"cap exceeded: {modes} {unit} > {cap}; dim 2^{modes} = {dim}, one dense matrix needs "
                f"{dim}^2 * 16 B = {mem / 2**30:.2f} GiB",
            )
        if modes <= cap:
            secs = 3e-9 * dim**3 * (n_pts * n_t + 1)
            lines.append(f"time: ~{secs:.2g} s for {n_pts * n_t} trace evaluations")
    if cfg.model in ("xy", "ebb"):
        p = cfg.params
        d1 = 2 * int(p.get("L", 2)) + 1 if cfg.model == "xy" else 1 + cfg.ell * int(p.get("L", 2))
        lines.append(f"one-particle dim {d1}; determinant cost ~{3e-9 * d1**3 * n_pts * n_t:.2g} s")
    lines.append(f"alpha grid: {n_pts} points x {n_t} times; tasks: {', '.join(cfg.tasks)}")
    return lines


def _workers(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="heatfcs", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--output-dir")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--format", choices=("csv", "json"))
    args = ap.parse_args(argv)
    overrides = {k: v for k, v in (("seed", args.seed), ("format", args.format), ("output_dir", args.output_dir)) if v is not None}
    try:
        cfg = parse_config(load_yaml(args.config), overrides)
        est = estimates(cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print("ok")
        for line in est:
            print("  " + line)
        return 0
    manifest = run(cfg, _workers(args.workers))
    for e in manifest["tasks"]:
        status = e["status"] if e["status"] != "ok" else ("pass" if all(c["pass"] for c in e["checks"]) else "FAIL")
        print(f"{e['task']:<16} {status:<6} {e['wall_seconds']:.2f}s" + (f"  {e.get('error', '')}" if e["status"] != "ok" else ""))
    print(f"manifest: {Path(cfg.output_dir) / 'manifest.json'}  all_passed={manifest['all_passed']}")
    return 0 if manifest["all_passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
