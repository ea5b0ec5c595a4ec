"""Batch front-end: ``dimred <model> --config FILE [--out CSV] [--plot DIR]
[--seed N] [--jobs N] [--check]``.

The configuration is an INI file with one section per model.  Unknown
sections and keys are errors.  Exit codes: 0 success, 1 configuration or
runtime error, 2 a check enabled by ``--check`` failed.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .sweep import fit_slope, rows_to_csv
from .toymodel import ToySweepRow

log = logging.getLogger("dimred")

MODELS = ("toy", "bo", "layer", "shell", "nsrobin")
MIN_GRID = 8


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _complexes(text: str) -> list[complex]:
    return [complex(x.strip().replace(" ", "").replace("i", "j")) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); a default of None marks a required key
SCHEMA: dict[str, dict[str, tuple[Callable, object]]] = {
    "toy": {"instances": (int, 100), "pairs": (int, 1), "zs": (int, 5), "seed": (int, 0)},
    "bo": {
        "h": (_floats, None), "k": (int, 3), "theta0": (float, 0.3), "R": (float, 8.0),
        "n_s": (int, 255), "rtol": (float, 1e-6), "slope_min": (float, 1.8),
        "exact_tol": (float, 1e-10),
    },
    "layer": {
        "kappa0": (float, 1.0), "delta": (float, 0.3), "eps": (_floats, None), "k": (int, 2),
        "n_s": (int, 128), "n_t": (int, 64), "max_refine": (int, 4),
        "slope_min": (float, 0.9), "flat_rtol": (float, 1e-4),
    },
    "shell": {
        "kappa0": (float, 0.5), "delta": (float, 0.3), "alpha": (_floats, None), "k": (int, 2),
        "n_s": (int, 128), "n_t": (int, 160), "growth_max": (float, 1.5),
    },
    "nsrobin": {
        "kappa0": (float, 1.0), "delta": (float, 0.3), "a0": (float, 1.0), "b0": (float, 0.5),
        "eps": (_floats, None), "z": (_complexes, [-2.0 + 0j, 0.5 + 1j, 4.5 + 1j]),
        "n_s": (int, 64), "n_t": (int, 16), "trials": (int, 200), "shift": (float, math.nan),
        "slope_min": (float, 0.9), "accretivity_eps_max": (float, 0.05), "seed": (int, 0),
        "variational": (_bool, True),
    },
}

GRID_KEYS = ("n_s", "n_t")
LIST_KEYS = ("h", "eps", "alpha", "z")
POSITIVE_LIST_KEYS = ("h", "eps", "alpha")


@dataclass
class SweepConfig:
    model: str
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    jobs: int = 1
    check: bool = False
    out: Optional[Path] = None
    plot: Optional[Path] = None


def parse_config(model: str, text: str) -> dict:
    """Parse and validate the section for ``model``; returns typed parameters."""
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}")
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str  # keep key case (R)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    for sec in cp.sections():
        if sec not in MODELS:
            raise ConfigError(f"unknown section [{sec}]")
    if not cp.has_section(model):
        raise ConfigError(f"missing section [{model}]")
    schema = SCHEMA[model]
    raw = dict(cp.items(model))
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{model}]: {', '.join(unknown)}")
    out = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                out[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"[{model}] {key}: {exc}") from exc
        elif default is None:
            raise ConfigError(f"[{model}] missing required key {key!r}")
        else:
            out[key] = default
    _validate(model, out)
    return out


def _validate(model: str, p: dict) -> None:
    for key in GRID_KEYS:
        if key in p and p[key] < MIN_GRID:
            raise ConfigError(f"[{model}] {key} = {p[key]} is below the minimum grid size {MIN_GRID}")
    for key in LIST_KEYS:
        if key in p and len(p[key]) == 0:
            raise ConfigError(f"[{model}] {key} list is empty")
    for key in POSITIVE_LIST_KEYS:
        if key in p and not all(x > 0 and math.isfinite(x) for x in p[key]):
            raise ConfigError(f"[{model}] {key} values must be positive")
    for key in ("instances", "pairs", "zs", "k", "trials", "max_refine"):
        if key in p and p[key] < 1:
            raise ConfigError(f"[{model}] {key} must be at least 1")
    if model == "nsrobin" and p["trials"] < 100:
        raise ConfigError("[nsrobin] trials must be at least 100")


# ---------------------------------------------------------------------------
# sweep tasks (top level so they can be sent to worker processes)


def _profile(p):
    from .geometry import CurveProfile

    return CurveProfile(p["kappa0"], p["delta"])


def _toy_task(args):
    from .toymodel import sweep_instance

    index, seed, p = args
    return index, asdict(sweep_instance(index, seed, pairs=p["pairs"], zs=p["zs"]))


def _bo_task(args):
    from . import born_oppenheimer as bo

    h, p = args
    model = bo.TwoLevelBOModel(h, theta0=p["theta0"], R=p["R"], n_s=p["n_s"])
    eigs = bo.lowest_eigs(model, p["k"], rtol=p["rtol"])
    try:
        gc = bo.resolvent_gap_check(model, 2.0 * h)
        cert_diff, gate = (gc.certified_diff if gc.gate else None), gc.gate
    except bo.WindowError:
        cert_diff, gate = None, False
    rows = [dict(h=h, k=j + 1, lambda_full=eigs.full[j], lambda_eff=eigs.eff[j],
                 diff=abs(eigs.full[j] - eigs.eff[j]), certified_diff=cert_diff, gate=gate)
            for j in range(p["k"])]
    return h, rows


def _layer_task(args):
    from . import dirichlet_layer as dl

    eps, p = args
    prof = _profile(p)
    c = math.pi**2 / (4 * eps**2)
    if prof.is_flat:
        model = dl.LayerModel(prof, eps, p["n_s"], p["n_t"])
        full = dl.full_eigs(model, p["k"])
        sig = dl.effective_sigma_eigs(prof, p["k"], n_s=p["n_s"])
        recs = [(full[j], sig[j]) for j in range(p["k"])]
    else:
        res = dl.residuals(prof, eps, p["k"], n_s=p["n_s"], n_t=p["n_t"], max_refine=p["max_refine"])
        recs = [(r.lambda_full, r.lambda_sigma) for r in res]
    rows = [dict(eps=eps, k=j + 1, lambda_full=lf, pi2_over_4eps2=c, lambda_sigma=ls,
                 residual=lf - c - ls) for j, (lf, ls) in enumerate(recs)]
    return eps, rows


def _shell_task(args):
    from . import robin_shell as rs

    alpha, p = args
    recs = rs.shell_records(_profile(p), alpha, p["k"], n_s=p["n_s"], n_t=p["n_t"])
    return alpha, [asdict(r) for r in recs]


def _ns_model(p, eps):
    from . import ns_robin_layer as ns

    return ns.ComplexRobinModel(_profile(p), ns.RobinCoefficient(p["a0"], p["b0"]), eps,
                                p["n_s"], p["n_t"])


def _nsrobin_task(args):
    from . import ns_robin_layer as ns

    eps, p, seed = args
    model = _ns_model(p, eps)
    P = ns.assemble_all(model)
    rows = []
    for zi, z in enumerate(p["z"]):
        r = ns.resolvent_difference_norm(model, z, pencils=P)
        rows.append(dict(eps=eps, zi=zi, z_re=z.real, z_im=z.imag, diff_norm=r.diff_norm,
                         diff_norm_over_eps=r.diff_norm_over_eps, smin_full=r.smin_full,
                         smin_eff=r.smin_eff))
    shift = None if math.isnan(p["shift"]) else p["shift"]
    acc = ns.accretivity_check(model, shift)
    extra = dict(eps=eps, M=acc.M, c0_estimate=acc.c0_estimate)
    if p["variational"]:
        extra["variational"] = ns.variational_gap_check(model, p["trials"], seed=seed, pencils=P).max_ratio
    return eps, (rows, extra)


# ---------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _slope_checks(name, xs, ys, slope_min) -> list[CheckResult]:
    if len(xs) < 3:
        raise ConfigError(f"{name}: --check needs at least 3 parameter values")
    fit = fit_slope(zip(xs, ys))
    return [CheckResult(name, fit.slope >= slope_min, f"slope {fit.slope:.4f} (min {slope_min})")]


def _check_prereqs(model: str, p: dict) -> None:
    """Reject ``--check`` sweeps too short to fit a slope before any work is done."""
    if model == "bo" and p["theta0"] != 0:
        need, key = 4, "h"
    elif model == "layer" and not (p["kappa0"] == 0 and p["delta"] == 0):
        need, key = 3, "eps"
    elif model == "shell":
        need, key = 2, "alpha"
    elif model == "nsrobin":
        need, key = 3, "eps"
    else:
        return
    if len(set(p[key])) < need:
        raise ConfigError(f"{model}: --check needs at least {need} values of {key}")


def _checks_toy(rows, p):
    bad = [r["index"] for r in rows
           if not (r["variational_holds"] and r["form_bound_holds"] and r["certificates_sound"])]
    return [CheckResult("toy inequalities and certificates", not bad,
                        f"{len(rows) - len(bad)}/{len(rows)} instances sound")]


def _checks_bo(rows, p):
    out = []
    for k in range(1, p["k"] + 1):
        sel = [r for r in rows if r["k"] == k]
        diffs = [r["diff"] for r in sel]
        if p["theta0"] == 0:
            worst = max(diffs)
            out.append(CheckResult(f"bo k={k} exact", worst <= p["exact_tol"], f"max diff {worst:.3g}"))
        else:
            if len(sel) < 4:
                raise ConfigError("bo: --check needs at least 4 values of h")
            out += _slope_checks(f"bo k={k} slope", [r["h"] for r in sel], diffs, p["slope_min"])
    return out


def _checks_layer(rows, p):
    out = []
    flat = p["kappa0"] == 0 and p["delta"] == 0
    for k in range(1, p["k"] + 1):
        sel = [r for r in rows if r["k"] == k]
        if flat:
            worst = max(abs(r["residual"]) / r["lambda_full"] for r in sel)
            out.append(CheckResult(f"layer k={k} flat", worst <= p["flat_rtol"], f"max rel {worst:.3g}"))
        else:
            out += _slope_checks(f"layer k={k} slope", [r["eps"] for r in sel],
                                 [abs(r["residual"]) for r in sel], p["slope_min"])
    return out


def _checks_shell(rows, p):
    if len(p["alpha"]) < 2:
        raise ConfigError("shell: --check needs at least 2 values of alpha")
    out = []
    top = max(p["alpha"])
    for j in range(1, p["k"] + 1):
        sel = [r for r in rows if r["j"] == j]
        last = abs(next(r["shifted_residual"] for r in sel if r["alpha"] == top))
        prev = max(abs(r["shifted_residual"]) for r in sel if r["alpha"] != top)
        out.append(CheckResult(f"shell j={j} no growth", last <= p["growth_max"] * prev,
                               f"{last:.4g} vs {p['growth_max']} x {prev:.4g}"))
    return out


def _checks_nsrobin(rows, extras, p):
    from . import ns_robin_layer as ns

    out = []
    for zi, z in enumerate(p["z"]):
        sel = [r for r in rows if r["zi"] == zi]
        out += _slope_checks(f"nsrobin z={z} slope", [r["eps"] for r in sel],
                             [r["diff_norm"] for r in sel], p["slope_min"])
    acc = [e for e in extras if e["eps"] <= p["accretivity_eps_max"]]
    ok = all(e["c0_estimate"] > 0 for e in acc)
    out.append(CheckResult("nsrobin accretivity", ok,
                           ", ".join(f"eps={e['eps']:g}: {e['c0_estimate']:.4g}" for e in acc) or "no eps"))
    if p["variational"]:
        out += _slope_checks("nsrobin variational slope", [e["eps"] for e in extras],
                             [e["variational"] for e in extras], p["slope_min"])
    conj = ns.conjugation_symmetry_check(_ns_model(p, min(p["eps"])))
    out.append(CheckResult("nsrobin conjugation", bool(conj.holds),
                           f"entry diff {conj.max_entry_diff:.3g}, eig gap {conj.eig_gap:.3g}"))
    return out


# ---------------------------------------------------------------------------
# run


COLUMNS = {
    "toy": [f.name for f in fields(ToySweepRow)],
    "bo": ["h", "k", "lambda_full", "lambda_eff", "diff", "certified_diff", "gate"],
    "layer": ["eps", "k", "lambda_full", "pi2_over_4eps2", "lambda_sigma", "residual", "slope"],
    "shell": ["alpha", "j", "mu1_at_smax", "nu_j", "lambda_full", "shifted_residual", "harmonic_scaled"],
    "nsrobin": ["eps", "z_re", "z_im", "diff_norm", "diff_norm_over_eps", "smin_full", "smin_eff"],
}
ACCRETIVITY_COLUMNS = ["eps", "M", "c0_estimate"]


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def _validate_rows(rows, columns):
    for r in rows:
        for c in columns:
            v = r.get(c)
            if isinstance(v, (float, np.floating)) and not math.isfinite(v):
                raise RuntimeError(f"non-finite value in column {c}: {r}")


def _layer_slopes(rows, p):
    for k in range(1, p["k"] + 1):
        sel = [r for r in rows if r["k"] == k]
        ys = [abs(r["residual"]) for r in sel]
        flat = p["kappa0"] == 0 and p["delta"] == 0
        slope = None
        if len(sel) >= 3 and not flat and all(y > 0 for y in ys):
            slope = fit_slope(zip([r["eps"] for r in sel], ys)).slope
        for r in sel:
            r["slope"] = slope


def run(cfg: SweepConfig) -> tuple[int, dict]:
    """Run a sweep; returns ``(exit_code, artifacts)`` with artifacts holding
    the CSV text(s) and check results.  Configuration errors raise
    :class:`ConfigError`."""
    p = cfg.params
    model = cfg.model
    seed = cfg.seed if cfg.seed is not None else p.get("seed", 0)
    extras_csv = None
    checks: list[CheckResult] = []
    if cfg.check:
        _check_prereqs(model, p)
    if model == "toy":
        res = _map(_toy_task, [(i, seed, p) for i in range(p["instances"])], cfg.jobs)
        rows = [r for _, r in sorted(res, key=lambda x: x[0])]
    else:
        key = {"bo": "h", "layer": "eps", "shell": "alpha", "nsrobin": "eps"}[model]
        values = sorted(set(p[key]))
        task = {"bo": _bo_task, "layer": _layer_task, "shell": _shell_task,
                "nsrobin": _nsrobin_task}[model]
        args = [(v, p, seed) if model == "nsrobin" else (v, p) for v in values]
        res = sorted(_map(task, args, cfg.jobs), key=lambda x: x[0])
        if model == "nsrobin":
            rows = [r for _, (rs, _) in res for r in rs]
            extras = [e for _, (_, e) in res]
            extras_csv = rows_to_csv(ACCRETIVITY_COLUMNS, extras)
        else:
            rows = [r for _, rs in res for r in rs]
        if model == "layer":
            _layer_slopes(rows, p)
    _validate_rows(rows, COLUMNS[model])
    if cfg.check:
        checks = {
            "toy": lambda: _checks_toy(rows, p),
            "bo": lambda: _checks_bo(rows, p),
            "layer": lambda: _checks_layer(rows, p),
            "shell": lambda: _checks_shell(rows, p),
            "nsrobin": lambda: _checks_nsrobin(rows, extras, p),
        }[model]()
    text = rows_to_csv(COLUMNS[model], rows)
    code = 0 if all(c.passed for c in checks) else 2
    return code, {"csv": text, "accretivity_csv": extras_csv, "checks": checks, "rows": rows}


def _write_outputs(cfg: SweepConfig, art: dict) -> None:
    if cfg.out is None:
        sys.stdout.write(art["csv"])
        if art["accretivity_csv"] is not None:
            log.info("accretivity report not written (no --out given)")
    else:
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        cfg.out.write_text(art["csv"], encoding="utf-8")
        if art["accretivity_csv"] is not None:
            acc = cfg.out.with_name(cfg.out.stem + "_accretivity.csv")
            acc.write_text(art["accretivity_csv"], encoding="utf-8")
    if cfg.plot is not None:
        from .plotting import render

        stem = cfg.out.stem if cfg.out is not None else cfg.model
        render(cfg.model, art["csv"], cfg.plot, stem)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dimred", description="Dimension-reduction sweeps.")
    ap.add_argument("model", choices=MODELS)
    ap.add_argument("--config", required=True, type=Path, help="INI file with a [model] section")
    ap.add_argument("--out", type=Path, help="CSV output path (stdout when omitted)")
    ap.add_argument("--plot", type=Path, help="directory for SVG plots")
    ap.add_argument("--seed", type=int, help="overrides the seed in the configuration")
    ap.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    ap.add_argument("--check", action="store_true", help="run the acceptance checks")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
        params = parse_config(args.model, text)
        jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = SweepConfig(args.model, params, args.seed, jobs, args.check, args.out, args.plot)
        code, art = run(cfg)
        _write_outputs(cfg, art)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 1
    except Exception as exc:
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        return 1
    for c in art["checks"]:
        log.info("check %s: %s (%s)", c.name, "PASS" if c.passed else "FAIL", c.detail)
    return code


if __name__ == "__main__":
    sys.exit(main())
