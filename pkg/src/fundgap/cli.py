"""Config-driven experiment runner.

Config files are INI style. Every section is optional; keys not given fall
back to the preset's defaults::

    [experiment]
    preset = sphere_cap
    out = runs/cap
    seed = 0

    [metric]
    family = round_sphere      ; round_sphere | pinched_rotsym | flat
    radius = 1.0               ; round_sphere only
    amplitude = 0.0005         ; pinched_rotsym only

    [domain]
    kind = ball                ; ball | rectangle
    center = 0.0, 0.0
    radius = 0.35
    margin = 0.03
    width = 1.0                ; rectangle only
    heights = 0.2, 0.1, 0.05   ; thin_rectangle: one run per height
    arc_radius = 1e6           ; rectangle sides bow outward on this radius

    [mesh]
    h = 0.02                   ; coarsest level; each further level halves it
    levels = 2                 ; 1, 2 or 3

    [model1d]
    grid_n = 1024
    ratios = 1, 1.05, 1.1, 1.2, 1.3   ; model1d_sweep only
    diameters = 0.5, 0.8, 1.0, max    ; "max" is pi/(2 sqrt(k_hi))

    [verify]
    pairs = 500
    points = 20
    remainder_pairs = 200
    trials = 1000              ; jacobi_properties only

    [output]
    dump_mesh = false

Outputs in the output directory:

``summary.json``
    all scalar results and the pass/fail status of every certified check.
``eigs.csv``
    ``h,lambda1,lambda2`` per refinement level (thin_rectangle prepends ``eps``).
``pairs.csv``
    ``x_u,x_v,y_u,y_v,d,lhs,rhs_derived,rhs_printed,slack`` with slack = rhs_derived - lhs.
``model1d.csv``
    ``kappa_lo,kappa_hi,D,lambda1_bar,bound,margin,psi_checks``.
``thin_rectangle.csv``
    ``eps,D,gap,gap_D2_over_pi2,upper``.
``jacobi.csv``
    ``trial,d,reciprocity,sandwich_ok``.
``mesh.txt`` (when ``dump_mesh = true``)
    whitespace separated ``id u v u1 u2`` per vertex of the finest mesh; u1 scaled to max 1.

All CSV numbers carry 17 significant digits. Exit codes: 0 when every
certified check passes, 1 on a certification failure (reports still
written), 2 on a config error, 3 on a solver failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import jn_zeros

from . import jacobi, model1d, spectral2d, surface, verify
from .comparison import tn
from .errors import FundGapError

log = logging.getLogger("fundgap")

PRESETS = {
    "sphere_cap": {
        "metric": {"family": "round_sphere", "radius": "1.0"},
        "domain": {"kind": "ball", "center": "0.0, 0.0", "radius": "0.35", "margin": "0.03"},
        "mesh": {"h": "0.02", "levels": "2"},
        "verify": {"pairs": "500", "points": "20", "remainder_pairs": "0"},
    },
    "pinched_rotsym": {
        "metric": {"family": "pinched_rotsym", "amplitude": "0.0005"},
        "domain": {"kind": "ball", "center": "1.55, 0.0", "radius": "0.3", "margin": "0.03"},
        "mesh": {"h": "0.02", "levels": "2"},
        "verify": {"pairs": "500", "points": "20", "remainder_pairs": "200"},
    },
    "flat_disk": {
        "metric": {"family": "flat"},
        "domain": {"kind": "ball", "center": "0.0, 0.0", "radius": "1.0", "margin": "0.05"},
        "mesh": {"h": "0.02", "levels": "2"},
    },
    "thin_rectangle": {
        "metric": {"family": "flat"},
        "domain": {"kind": "rectangle", "width": "1.0", "heights": "0.2, 0.1, 0.05", "arc_radius": "1e6"},
        "mesh": {"h_over_height": "0.25", "levels": "2"},
    },
    "model1d_sweep": {
        "model1d": {"grid_n": "1024", "ratios": "1, 1.05, 1.1, 1.2, 1.3", "diameters": "0.5, 0.8, 1.0, max"},
    },
    "jacobi_properties": {
        "verify": {"trials": "1000"},
    },
}

BASE = {
    "experiment": {"out": "fundgap_out", "seed": "0"},
    "model1d": {"grid_n": "1024"},
    "output": {"dump_mesh": "false"},
}


class ConfigError(Exception):
    pass


def list_presets():
    return "\n".join(PRESETS)


@dataclass
class ExperimentConfig:
    preset: str
    out: Path
    seed: int
    sections: dict = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def num(self, section, key, default=None, cast=float):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing [{section}] {key}")
            return default
        try:
            val = cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from exc
        if not val > 0:
            raise ConfigError(f"[{section}] {key} must be positive, got {raw}")
        return val

    def count(self, section, key):
        raw = self.get(section, key, "0")
        try:
            val = int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer") from exc
        if val < 0:
            raise ConfigError(f"[{section}] {key} must be non-negative")
        return val

    def nums(self, section, key):
        raw = self.get(section, key)
        if raw is None:
            raise ConfigError(f"missing [{section}] {key}")
        return [p.strip() for p in raw.split(",") if p.strip()]

    @property
    def levels(self):
        lv = self.num("mesh", "levels", 2, int)
        if lv not in (1, 2, 3):
            raise ConfigError(f"refinement levels must be 1, 2 or 3, got {lv}")
        return lv


def load_config(path, preset=None, out=None, refine=None, seed=None):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    user = {s: dict(parser[s]) for s in parser.sections()}
    name = preset or user.get("experiment", {}).get("preset")
    if name is None:
        raise ConfigError(f"no preset given; valid presets: {', '.join(PRESETS)}")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    merged = {}
    for layer in (BASE, PRESETS[name], user):
        for sec, vals in layer.items():
            merged.setdefault(sec, {}).update(vals)
    if refine is not None:
        merged.setdefault("mesh", {})["levels"] = str(refine)
    if seed is not None:
        merged["experiment"]["seed"] = str(seed)
    if out is not None:
        merged["experiment"]["out"] = str(out)
    try:
        seed_val = int(merged["experiment"]["seed"])
    except ValueError as exc:
        raise ConfigError(f"seed must be an integer, got {merged['experiment']['seed']!r}") from exc
    if seed_val < 0:
        raise ConfigError("seed must be non-negative")
    cfg = ExperimentConfig(name, Path(merged["experiment"]["out"]), seed_val, merged)
    if "mesh" in merged:
        _ = cfg.levels  # validate early
    return cfg


# ---------------------------------------------------------------- builders

def build_metric(cfg):
    fam = cfg.get("metric", "family")
    if fam == "round_sphere":
        return surface.round_sphere(cfg.num("metric", "radius", 1.0))
    if fam == "pinched_rotsym":
        return surface.pinched_rotsym(cfg.num("metric", "amplitude", 0.01))
    if fam == "flat":
        return surface.flat()
    raise ConfigError(f"unknown metric family {fam!r}")


def _pair(text):
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}") from exc
    if len(vals) != 2:
        raise ConfigError(f"point needs two coordinates, got {text!r}")
    return vals


def build_ball(cfg):
    if cfg.get("domain", "kind") != "ball":
        raise ConfigError(f"preset {cfg.preset} needs a ball domain")
    margin = cfg.num("domain", "margin", 0.03)
    return spectral2d.DomainSpec.ball(_pair(cfg.get("domain", "center", "0, 0")),
                                      cfg.num("domain", "radius"), margin=margin)


# ---------------------------------------------------------------- writers

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_summary(out, summary):
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def dump_mesh(path, res):
    u1 = res.u1_unit_max()
    with open(path, "w") as fh:
        fh.write("# id u v u1 u2\n")
        for i, (p, a, b) in enumerate(zip(res.mesh.vertices, u1, res.u2)):
            fh.write(f"{i} {_fmt(p[0])} {_fmt(p[1])} {_fmt(a)} {_fmt(b)}\n")


def _eig_rows(res):
    return [(h, l1, l2) for h, l1, l2 in res.levels]


def _monotone(res):
    lv = res.levels
    return all(b[1] <= a[1] * (1 + 1e-12) and b[2] <= a[2] * (1 + 1e-12) for a, b in zip(lv, lv[1:]))


def _spectral_summary(res):
    return {
        "lambda1": res.lambda1, "lambda2": res.lambda2, "gap": res.gap, "h": res.h,
        "err_est": res.err_est, "lambda1_extrap": res.lambda1_extrap,
        "lambda2_extrap": res.lambda2_extrap, "order": res.order,
        "vertices": len(res.mesh.vertices), "triangles": len(res.mesh.triangles),
    }


# ---------------------------------------------------------------- pipelines

def run_gap_theorem(cfg):
    """Curvature gates, spectrum, 1D model, two-point and one-point checks on a ball."""
    out = cfg.out
    metric = build_metric(cfg)
    domain = build_ball(cfg)
    region = surface.GeodesicBall(domain.center, domain.radius)
    stats = surface.curvature_stats(metric, region)
    domain.validate(metric, stats.kappa_hi)
    res = spectral2d.solve_refined(metric, domain, cfg.num("mesh", "h"), cfg.levels)
    D = spectral2d.diameter(metric, domain)
    sol = model1d.solve_model(stats.kappa_lo, stats.kappa_hi, D, cfg.num("model1d", "grid_n", 1024, int))
    hyp = verify.check_hypotheses(stats, D, res.lambda1)
    checks = {"hypotheses": hyp.passed, "eigs_monotone": _monotone(res)}
    sharp = verify.gap_lower_bound_sharp(sol)
    checks["gap_vs_model"] = res.gap + 3 * res.err_est >= sharp if math.isfinite(res.err_est) else None

    n_pairs = cfg.num("verify", "pairs", 500, int)
    margin = domain.margin
    rep = verify.verify_Z(metric, res, sol, domain, n_pairs, margin, stats=stats,
                          seed=cfg.seed, exploratory=not hyp.passed)
    checks["two_point"] = rep.certified
    write_csv(out / "pairs.csv", ["x_u", "x_v", "y_u", "y_v", "d", "lhs", "rhs_derived", "rhs_printed", "slack"],
              [(r.x[0], r.x[1], r.y[0], r.y[1], r.d, r.lhs, r.rhs_derived, r.rhs_printed, r.slack("derived"))
               for r in rep.records])
    hess = verify.verify_hessian_onepoint(metric, res, cfg.num("verify", "points", 20, int), seed=cfg.seed)
    checks["one_point_hessian"] = hess.passed

    summary = {
        "preset": cfg.preset, "metric": metric.family, "kappa_lo": stats.kappa_lo, "kappa_hi": stats.kappa_hi,
        "grad_sup": stats.grad_sup, "lap_inf_neg": stats.lap_inf_neg, "D": D,
        **_spectral_summary(res),
        "lambda1_bar": sol.lambda1, "L": sol.L,
        "gap_lower_bound": verify.gap_lower_bound(D, stats.kappa_lo, stats.kappa_hi),
        "gap_lower_bound_sharp": sharp,
        "eigen_lower_bound": model1d.eigen_lower_bound(stats.kappa_lo, stats.kappa_hi, D),
        "hypotheses": hyp.as_dict(),
        "two_point": {"pairs": rep.pairs_tested, "form": rep.form_used, "worst_Z": rep.worst_Z,
                      "worst_slack": rep.worst_slack, "worst_pair": [list(p) for p in rep.worst_pair],
                      "max_excess_over_tau": float(rep.excess().max()),
                      "passes_moc_form": rep.passed("moc"), "passes_printed_form": rep.passed("printed"),
                      "watermark": rep.watermark},
        "one_point_hessian": {"points": len(hess.points), "worst_excess": hess.worst_excess, "tau": hess.tau},
    }
    n_rem = cfg.count("verify", "remainder_pairs")
    if n_rem:
        segs = verify.sample_pairs(metric, domain, n_rem, margin, D, seed=cfg.seed + 1)
        rr = verify.certify_remainder_bounds(metric, segs, stats, res.lambda1)
        checks["remainder_bounds"] = rr.passed()
        summary["remainder_bounds"] = {"pairs": n_rem, **rr.min_slacks}
    write_csv(out / "eigs.csv", ["h", "lambda1", "lambda2"], _eig_rows(res))
    if cfg.get("output", "dump_mesh") == "true":
        dump_mesh(out / "mesh.txt", res)
    return summary, checks


def run_flat_disk(cfg):
    metric = build_metric(cfg)
    domain = build_ball(cfg)
    res = spectral2d.solve_refined(metric, domain, cfg.num("mesh", "h"), cfg.levels)
    R = domain.radius
    ref1, ref2 = jn_zeros(0, 1)[0] ** 2 / R ** 2, jn_zeros(1, 1)[0] ** 2 / R ** 2
    l1 = res.lambda1_extrap if res.lambda1_extrap is not None else res.lambda1
    l2 = res.lambda2_extrap if res.lambda2_extrap is not None else res.lambda2
    checks = {
        "eigs_monotone": _monotone(res),
        "lambda1_bessel": abs(l1 / ref1 - 1) <= 5e-3,
        "lambda2_bessel": abs(l2 / ref2 - 1) <= 5e-3,
    }
    write_csv(cfg.out / "eigs.csv", ["h", "lambda1", "lambda2"], _eig_rows(res))
    if cfg.get("output", "dump_mesh") == "true":
        dump_mesh(cfg.out / "mesh.txt", res)
    summary = {"preset": cfg.preset, "metric": "flat", **_spectral_summary(res),
               "bessel_lambda1": ref1, "bessel_lambda2": ref2}
    return summary, checks


def run_thin_rectangle(cfg):
    metric = build_metric(cfg)
    width = cfg.num("domain", "width", 1.0)
    arc = float(cfg.get("domain", "arc_radius", "inf"))
    frac = cfg.num("mesh", "h_over_height", 0.25)
    eig_rows, rect_rows, table = [], [], []
    ok, mono = True, True
    for text in cfg.nums("domain", "heights"):
        eps = float(text)
        domain = spectral2d.DomainSpec.rectangle(width, eps, arc_radius=arc)
        res = spectral2d.solve_refined(metric, domain, frac * eps, cfg.levels)
        D = spectral2d.diameter(metric, domain)
        gap = (res.lambda2_extrap - res.lambda1_extrap) if res.lambda1_extrap is not None else res.gap
        ratio = gap * D ** 2 / math.pi ** 2
        upper = 3 * (1 + (eps / width) ** 2)
        ok &= 3 * (1 - 0.01) <= ratio <= upper * (1 + 0.01)
        mono &= _monotone(res)
        eig_rows += [(eps, h, l1, l2) for h, l1, l2 in res.levels]
        rect_rows.append((eps, D, gap, ratio, upper))
        table.append({"eps": eps, "D": D, "gap": gap, "gap_D2_over_pi2": ratio, "upper": upper,
                      "err_est": res.err_est})
    write_csv(cfg.out / "eigs.csv", ["eps", "h", "lambda1", "lambda2"], eig_rows)
    write_csv(cfg.out / "thin_rectangle.csv", ["eps", "D", "gap", "gap_D2_over_pi2", "upper"], rect_rows)
    return {"preset": cfg.preset, "width": width, "arc_radius": arc, "rectangles": table}, \
        {"ratio_in_range": ok, "eigs_monotone": mono}


def run_model1d_sweep(cfg):
    grid_n = cfg.num("model1d", "grid_n", 1024, int)
    rows, worst, psi_ok = [], math.inf, True
    for r_text in cfg.nums("model1d", "ratios"):
        k_hi = float(r_text)
        for d_text in cfg.nums("model1d", "diameters"):
            D = math.pi / (2 * math.sqrt(k_hi)) if d_text == "max" else float(d_text)
            sol = model1d.solve_model(1.0, k_hi, D, grid_n)
            bound = model1d.eigen_lower_bound(1.0, k_hi, D)
            try:
                checks_ok = model1d.check_psi_inequalities(sol).passed
            except FundGapError:
                checks_ok = False
            psi_ok &= checks_ok
            worst = min(worst, sol.lambda1 - bound)
            rows.append((1.0, k_hi, D, sol.lambda1, bound, sol.lambda1 - bound, checks_ok))
    write_csv(cfg.out / "model1d.csv",
              ["kappa_lo", "kappa_hi", "D", "lambda1_bar", "bound", "margin", "psi_checks"], rows)
    return {"preset": cfg.preset, "grid_points": len(rows), "worst_margin": worst}, \
        {"eigen_bound": worst >= -1e-8, "psi_checks": psi_ok}


def random_profiles(rng, count, lo=0.5, hi=1.3, modes=3):
    """Batch of smooth curvature profiles with values in [lo, hi].

    The returned function maps abscissae of shape (count,) to curvatures,
    one profile per entry, as the batched Jacobi solver expects.
    """
    amp = rng.uniform(-1, 1, (count, modes)) / np.arange(1, modes + 1)
    amp /= np.maximum(np.abs(amp).sum(axis=1, keepdims=True), 1e-12)
    freq = rng.uniform(0.5, 6.0, (count, modes))
    phase = rng.uniform(0, 2 * np.pi, (count, modes))
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    return lambda s: mid + half * np.sum(amp * np.sin(freq * np.asarray(s)[:, None] + phase), axis=1)


def run_jacobi_properties(cfg):
    rng = np.random.default_rng(cfg.seed)
    trials = cfg.num("verify", "trials", 1000, int)
    d_max = math.pi / (2 * math.sqrt(1.3))
    ds = rng.uniform(0.01, 1.0, trials) * d_max
    bases = jacobi.jacobi_bases_from_kappa(random_profiles(rng, trials), ds, n=256)
    rows, worst_recip, sandwich_ok = [], 0.0, True
    for i, (d, basis) in enumerate(zip(ds, bases)):
        rec = jacobi.check_reciprocity(basis)
        sw_ok = jacobi.check_comparison_sandwich(basis, 0.5, 1.3)["max"] <= 1e-9
        worst_recip = max(worst_recip, rec)
        sandwich_ok &= sw_ok
        rows.append((i, d, rec, sw_ok))
    worst_C = 0.0
    for K in (0.5, 1.0, 2.0):
        for d in (0.2, 0.5, 1.0):
            b = jacobi.jacobi_basis_from_kappa(lambda s, K=K: np.full(np.shape(s), K), d)
            worst_C = max(worst_C, abs(b.C + float(tn(K, d / 2))))
    write_csv(cfg.out / "jacobi.csv", ["trial", "d", "reciprocity", "sandwich_ok"], rows)
    return {"preset": cfg.preset, "trials": trials, "worst_reciprocity": worst_recip,
            "worst_constant_curvature_C": worst_C}, \
        {"reciprocity": worst_recip <= 1e-8, "constant_curvature_C": worst_C <= 1e-8, "sandwich": sandwich_ok}


PIPELINES = {
    "sphere_cap": run_gap_theorem,
    "pinched_rotsym": run_gap_theorem,
    "flat_disk": run_flat_disk,
    "thin_rectangle": run_thin_rectangle,
    "model1d_sweep": run_model1d_sweep,
    "jacobi_properties": run_jacobi_properties,
}


def run_experiment(cfg):
    """Run the configured preset; returns the process exit code."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        summary, checks = PIPELINES[cfg.preset](cfg)
    except ConfigError:
        raise
    except FundGapError as exc:
        log.error("solver failure: %s", exc)
        write_summary(cfg.out, {"preset": cfg.preset, "error": f"{type(exc).__name__}: {exc}"})
        return 3
    summary["checks"] = checks
    summary["certified"] = all(v is not False for v in checks.values())
    write_summary(cfg.out, summary)
    return 0 if summary["certified"] else 1


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fundgap", description="Fundamental gap experiments on curved surfaces.")
    ap.add_argument("--config", type=Path, help="INI experiment file")
    ap.add_argument("--preset", help="preset name, overrides the config")
    ap.add_argument("--out", type=Path, help="output directory")
    ap.add_argument("--refine", type=int, help="number of mesh levels (1-3)")
    ap.add_argument("--seed", type=int, help="seed for pair sampling and random trials")
    ap.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.list_presets:
        print(list_presets())
        return 0
    if args.config is None and args.preset is None:
        ap.print_usage(sys.stderr)
        print("fundgap: error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.preset, args.out, args.refine, args.seed)
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"fundgap: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
