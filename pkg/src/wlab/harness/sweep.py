"""hbar sweeps of the localized Riesz mean against the Weyl term, and exponent fits."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError, DomainError, WlabError
from ..phasespace import WeylTermRequest, weyl_term_closed
from ..potentials import mollify
from ..schrodgrid import discretize, eigensolve_below, localized_trace

log = logging.getLogger(__name__)

CSV_FIELDS = ("hbar", "epsilon", "localized_trace", "weyl_term", "residual", "normalized_residual",
              "grid_n", "solver_residual", "wall_time_s")


@dataclass
class SweepRecord:
    hbar: float
    epsilon: float
    localized_trace: float
    weyl_term: float
    residual: float
    normalized_residual: float
    grid_n: int
    solver_residual: float
    wall_time_s: float = 0.0
    valid: bool = True
    note: str = ""

    def row(self):
        return {k: getattr(self, k) for k in CSV_FIELDS}

    def to_dict(self):
        return asdict(self)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    points: int
    hbar_range: tuple
    field: str = ""

    def to_dict(self):
        return asdict(self)


def _invalid(hbar, eps, n, note):
    nan = float("nan")
    return SweepRecord(hbar, eps, nan, nan, nan, nan, n, nan, 0.0, False, note)


def run_point(cfg, hbar, mu):
    """One sweep point; gate failures give an invalid record instead of raising."""
    t0 = time.perf_counter()
    grid = cfg.grid_spec()
    eps = cfg.epsilon(hbar)
    # symbol-class gate: the coupling must not mollify below hbar^(1 - delta)
    if eps < hbar ** (1.0 - cfg.delta) * (1 - 1e-12) or hbar * abs(mu) > cfg.hbar_mu_max:
        return _invalid(hbar, eps, grid.N, "gate")
    V = cfg.potential_model()
    Vh = mollify(V, eps, delta=cfg.delta) if cfg.mollify else V
    a = cfg.vector_potential() if mu else None
    phi = cfg.localizer()
    try:
        vals = np.asarray(Vh.value(grid.points()), dtype=float)
        H = discretize(Vh, a, mu, hbar, grid, Lambda=cfg.Lambda, potential_values=vals)
    except ConfigurationError as exc:
        log.info("hbar=%g skipped: %s", hbar, exc)
        return _invalid(hbar, eps, grid.N, "resolution")
    spec = eigensolve_below(H, cfg.Lambda, tol=float(cfg.solver.get("tol", 1e-8)),
                            dense_limit=int(cfg.solver.get("dense_limit", 4096)), seed=cfg.seed)
    trace = localized_trace(spec, phi, cfg.gamma)
    weyl = weyl_term_closed(WeylTermRequest(V, phi, cfg.gamma, hbar, cfg.d))
    res = abs(trace - weyl)
    wall = time.perf_counter() - t0 if cfg.record_wall_time else 0.0
    log.info("hbar=%g eps=%g trace=%.6g weyl=%.6g n=%d", hbar, eps, trace, weyl, spec.count)
    return SweepRecord(float(hbar), float(eps), float(trace), float(weyl), float(res), float(res * hbar**cfg.d),
                       grid.N, float(spec.residual_bound), float(wall))


def run_sweep(cfg, threads=1):
    """Run every hbar of the schedule; records come back sorted by hbar descending.

    hbar points are independent jobs; with ``threads > 1`` they run in a
    thread pool (the heavy lifting happens in LAPACK and sparse kernels).
    """
    jobs = list(zip(cfg.hbar, cfg.mu_schedule()))
    if not jobs:
        return []
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            recs = list(pool.map(lambda j: run_point(cfg, *j), jobs))
    else:
        recs = [run_point(cfg, *j) for j in jobs]
    return sorted(recs, key=lambda r: -r.hbar)


def fit_exponent(records, field="normalized_residual", floor=0.0):
    """Least-squares slope of ``log(field)`` against ``log(hbar)``.

    Records that are invalid or whose field is not above ``floor`` are skipped.
    """
    pts = [(r.hbar, getattr(r, field)) for r in records
           if getattr(r, "valid", True) and np.isfinite(getattr(r, field)) and getattr(r, field) > floor]
    if len(pts) < 4:
        raise DomainError(f"exponent fit needs at least 4 points, got {len(pts)}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    h = [p[0] for p in pts]
    return FitResult(float(slope), float(intercept), r2, len(pts), (float(min(h)), float(max(h))), field)


__all__ = ["CSV_FIELDS", "SweepRecord", "FitResult", "run_point", "run_sweep", "fit_exponent", "WlabError"]
