"""Command line interface: ``wlab <subcommand> --config PATH [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 numerical gate failure,
4 acceptance check failure (``--assert``).
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from ..errors import (BandIncompleteError, ConfigurationError, ConvergenceError, DomainError, PreconditionError,
                      QuadratureError)
from .config import ExperimentConfig
from .io import emit, read_csv, write_manifest
from .sweep import fit_exponent, run_sweep

log = logging.getLogger("wlab")

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_ASSERT = 0, 2, 3, 4


class AcceptanceFailure(Exception):
    pass


def _write_json(obj, out, name):
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _require_hbar(cfg):
    if not cfg.hbar:
        raise ConfigurationError("config needs at least one hbar value")
    return cfg.hbar


# -- subcommands; each returns (result dict, passed or None)

def cmd_weyl_term(cfg, args):
    from ..phasespace import WeylTermRequest, weyl_term_closed, weyl_term_quadrature
    V, phi = cfg.potential_model(), cfg.localizer()
    rows = []
    for h in _require_hbar(cfg):
        req = WeylTermRequest(V, phi, cfg.gamma, h, cfg.d)
        lo, hi = req.box()
        pts = lo + (hi - lo) * np.random.default_rng(cfg.seed).uniform(size=(20_000, cfg.d))
        pc = 1.05 * np.sqrt(max(-float(np.min(V.value(pts))), 0.0)) + 1e-3
        closed = weyl_term_closed(req)
        quad = weyl_term_quadrature(req, pc, seed=cfg.seed)
        rows.append({"hbar": h, "closed": closed, "quadrature": quad,
                     "rel_err": abs(closed - quad) / max(abs(closed), 1e-300)})
    tol = float(cfg.checks.get("rtol", 1e-6))
    return {"weyl_term": rows}, all(r["rel_err"] <= tol for r in rows)


def cmd_mollify_rates(cfg, args):
    from ..potentials import mollification_rates
    eps = cfg.raw.get("eps", [2.0**-k for k in range(3, 9)])
    out = mollification_rates(cfg.potential_model(), eps)
    k = cfg.kappa
    expected = {0: 2 + k, 1: 1 + k, 2: k, 3: k - 1}
    tol = float(cfg.checks.get("slope_tol", 0.2))
    ok = all(abs(out["slope"][a] - expected[a]) <= tol for a in expected)
    return {"eps": list(map(float, eps)), "sup": {str(a): v.tolist() for a, v in out["sup"].items()},
            "slope": {str(a): v for a, v in out["slope"].items()},
            "expected": {str(a): v for a, v in expected.items()}}, ok


def cmd_quantize_check(cfg, args):
    from ..weylquant import PhaseGrid, compose_residuals, fit_slope, gaussian_symbol, trace_check
    q = cfg.raw.get("quantize", {})
    grid = PhaseGrid(float(q.get("L", 6.0)), int(q.get("N", 256)), 1)
    hbars = _require_hbar(cfg)
    a = gaussian_symbol(1, x0=0.3, p0=-0.2, sx=0.7, sp=0.6)
    b = gaussian_symbol(1, x0=-0.2, p0=0.1, sx=0.8, sp=0.5)
    traces = [trace_check(a, grid, h)["rel_err"] for h in hbars]
    res = [compose_residuals(a, b, grid, h) for h in hbars]
    out = {"hbar": hbars, "trace_rel_err": traces, "r0": [r["r0"] for r in res], "r1": [r["r1"] for r in res]}
    ok = max(traces) <= float(cfg.checks.get("trace_rtol", 1e-6))
    if len(hbars) >= 2:
        out["slope_r0"] = fit_slope(hbars, out["r0"])
        out["slope_r1"] = fit_slope(hbars, out["r1"])
    return out, ok


def cmd_spectrum(cfg, args):
    from ..schrodgrid import discretize, eigensolve_below
    grid = cfg.grid_spec()
    V = cfg.potential_model()
    rows = []
    for i, (h, mu) in enumerate(zip(_require_hbar(cfg), cfg.mu_schedule())):
        a = cfg.vector_potential() if mu else None
        H = discretize(V, a, mu, h, grid, Lambda=cfg.Lambda)
        spec = eigensolve_below(H, cfg.Lambda, tol=float(cfg.solver.get("tol", 1e-8)), seed=cfg.seed)
        rows.append({"hbar": h, "mu": mu, "count": spec.count, "inertia": spec.inertia, "method": spec.method,
                     "residual": spec.residual_bound, "eigenvalues": spec.eigenvalues.tolist()})
        if cfg.raw.get("dump_matrix"):
            H.dump(os.path.join(args.out, f"matrix_{i}.bin"))
    return {"spectrum": rows}, all(r["inertia"] in (None, r["count"]) for r in rows)


def cmd_sweep(cfg, args):
    records = run_sweep(cfg, threads=args.threads)
    valid = [r for r in records if r.valid]
    emit(valid, "csv", os.path.join(args.out, "sweep.csv"))
    emit(records, "json", os.path.join(args.out, "sweep.json"))
    out = {"records": len(records), "valid": len(valid),
           "invalid": [{"hbar": r.hbar, "note": r.note} for r in records if not r.valid]}
    ok = None
    if len(valid) >= 4:
        fit = fit_exponent(valid, cfg.checks.get("field", "normalized_residual"))
        emit(fit, "json", os.path.join(args.out, "fit.json"))
        out["fit"] = fit.to_dict()
        if "min_slope" in cfg.checks:
            ok = fit.slope >= float(cfg.checks["min_slope"])
    elif "min_slope" in cfg.checks:
        ok = False
    return out, ok


def cmd_partition(cfg, args):
    from .. import multiscale as ms
    from ..regions import region_from_dict
    p = cfg.raw.get("partition", {})
    region = region_from_dict(p.get("region", {"ball": [[0.0] * cfg.d, 1.0]}))
    eps_buf = float(p.get("epsilon_buffer", 11.0))
    V = cfg.potential_model()
    rows, ok = [], True
    for i, h in enumerate(_require_hbar(cfg)):
        scale = ms.calibrate_scale(V, h, region, eps_buf, seed=cfg.seed)
        cover = ms.partition_of_unity(ms.greedy_cover(region, scale), seed=cfg.seed)
        sv = ms.slow_variation_audit(cover, seed=cfg.seed)
        rescaled = [ms.rescale(V, None, None, cover.centers[k], cover.scales[k], cover.amplitudes[k], h, 0.0,
                               scale=scale) for k in range(cover.size)]
        with open(os.path.join(args.out, f"cover_{i}.json"), "w") as fh:
            fh.write(cover.to_json(h, 0.0))
        budget = {str(g): ms.error_budget(cover, h, g, cfg.d) for g in (0.0, cfg.gamma)}
        row = {"hbar": h, "A": scale.A, "rho": scale.rho, "balls": cover.size, "overlap": cover.overlap,
               "overlap_bound": cover.overlap_bound, "partition": cover.constants, "slow_variation": sv,
               "max_hbar_k": max(r.hbar_k for r in rescaled), "budget": budget}
        ok &= cover.constants["sum_dev"] <= 1e-10 and cover.constants["support_ok"] and sv["holds"]
        rows.append(row)
    return {"partition": rows}, bool(ok)


def cmd_tauberian_check(cfg, args):
    from ..tauberian import build_mollifier
    m = build_mollifier(cfg.mollifier_T)
    t = np.linspace(-200.0, 200.0, 400_001)
    chi = m.chi1(t)
    s_out = np.linspace(m.T, 3 * m.T, 41)
    mass = float(m.fourier_audit([0.0])[0])
    out = {"T": m.T, "T1": m.T1, "c": m.c, "nu": m.nu, "min_chi": float(chi.min()), "mass": mass,
           "max_hat_outside": float(np.max(np.abs(m.fourier_audit(s_out))))}
    ok = out["min_chi"] >= -1e-12 and abs(mass - 1) <= 1e-8 and out["max_hat_outside"] <= 1e-10 and m.c > 0
    return out, ok


def cmd_report(cfg, args):
    path = os.path.join(args.out, "sweep.csv")
    if not os.path.exists(path):
        raise ConfigurationError(f"no sweep output at {path}")
    recs = read_csv(path)
    fit = fit_exponent(recs, cfg.checks.get("field", "normalized_residual"))
    ok = fit.slope >= float(cfg.checks["min_slope"]) if "min_slope" in cfg.checks else None
    return {"fit": fit.to_dict(), "records": [r.row() for r in recs]}, ok


COMMANDS = {
    "weyl-term": cmd_weyl_term,
    "mollify-rates": cmd_mollify_rates,
    "quantize-check": cmd_quantize_check,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "partition": cmd_partition,
    "tauberian-check": cmd_tauberian_check,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="wlab", description="Semiclassical Riesz-mean experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", default=None, help="output directory (default: config output.dir or .)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--assert", dest="check", action="store_true", help="exit 4 when the acceptance check fails")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    env = os.environ.get("WLAB_THREADS")
    if env:
        try:
            args.threads = int(env)
        except ValueError:
            print(f"wlab: WLAB_THREADS={env!r} is not an integer", file=sys.stderr)
            return EXIT_CONFIG
    args.threads = max(1, args.threads)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigurationError("seed must fit in an unsigned 64-bit integer")
            cfg.seed = args.seed
        args.out = args.out or cfg.output.get("dir", ".")
        os.makedirs(args.out, exist_ok=True)
        result, passed = COMMANDS[args.command](cfg, args)
    except (ConfigurationError, DomainError) as exc:
        print(f"wlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, ConvergenceError, BandIncompleteError, QuadratureError) as exc:
        print(f"wlab: numerical gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    name = args.command.replace("-", "_")
    _write_json({"command": args.command, "passed": passed, "result": result}, args.out, f"{name}.json")
    write_manifest(cfg.raw, os.path.join(args.out, "manifest.json"), {"seed": cfg.seed}, args.command,
                   {"threads": args.threads})
    print(json.dumps({"command": args.command, "passed": passed}, default=_jsonable))
    if args.check and passed is False:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
