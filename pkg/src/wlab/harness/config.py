"""Experiment configuration.

JSON schema (all keys optional unless marked):

    potential   {"name": str (required), "params": {...}}
                library names plus "constant" with params {"value": float}
    magnetic    {"name": "none" | "swirl" | "bump", "params": {...}}
    mu          float or list (one per hbar); default 0
    hbar_mu_max bound C in hbar * mu <= C; default 1
    gamma       float in [0, 1] (required)
    d           int (required)
    grid        {"N": int, "L": float, "boundary": "dirichlet" | "periodic"} (required)
    hbar        list of floats, the sweep schedule
    phi         {"center": [...], "radius": float, "amp": float | "mass": float}
    mollifier_T float; Fourier half-width for tauberian-check
    mollify     bool; mollify V at epsilon = hbar^(1 - delta) before discretizing
    Lambda      spectral cutoff for the eigensolver; default 0
    solver      {"tol": float, "dense_limit": int}
    seed        int
    record_wall_time bool; default false keeps CSV output deterministic
    assert      {"min_slope": float, "field": str}
    output      {"dir": str}
"""
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..fields import ConstantField, RadialBump
from ..potentials import PotentialModel, make_library_potential, make_vector_potential
from ..quadrature import nested_quadrature
from ..schrodgrid import GridSpec


def canonical_json(obj):
    """Key-sorted compact JSON; equal for dicts that differ only in key order."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


@dataclass
class ExperimentConfig:
    raw: dict
    potential: dict
    gamma: float
    d: int
    grid: dict
    hbar: list
    phi: dict = field(default_factory=dict)
    magnetic: dict = field(default_factory=lambda: {"name": "none"})
    mu: object = 0.0
    hbar_mu_max: float = 1.0
    mollifier_T: float = 1.0
    mollify: bool = False
    Lambda: float = 0.0
    solver: dict = field(default_factory=dict)
    seed: int = 0
    record_wall_time: bool = False
    checks: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        for key in ("potential", "gamma", "d", "grid"):
            if key not in raw:
                raise ConfigurationError(f"config is missing {key!r}")
        hb = raw.get("hbar", [])
        hb = [float(h) for h in (hb if isinstance(hb, list) else [hb])]
        if any(not h > 0 for h in hb):
            raise ConfigurationError("hbar values must be positive")
        cfg = cls(raw=raw, potential=dict(raw["potential"]), gamma=float(raw["gamma"]), d=int(raw["d"]),
                  grid=dict(raw["grid"]), hbar=hb, phi=dict(raw.get("phi", {})),
                  magnetic=dict(raw.get("magnetic", {"name": "none"})), mu=raw.get("mu", 0.0),
                  hbar_mu_max=float(raw.get("hbar_mu_max", 1.0)), mollifier_T=float(raw.get("mollifier_T", 1.0)),
                  mollify=bool(raw.get("mollify", False)), Lambda=float(raw.get("Lambda", 0.0)),
                  solver=dict(raw.get("solver", {})), seed=int(raw.get("seed", 0)),
                  record_wall_time=bool(raw.get("record_wall_time", False)),
                  checks=dict(raw.get("assert", {})), output=dict(raw.get("output", {})))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    # -- derived quantities

    @property
    def kappa(self):
        return float(self.potential_model().kappa)

    @property
    def delta(self):
        """``(kappa - gamma) / (2 + kappa)``; fixed so that ``eps^(2+kappa) = hbar^(2+gamma)``."""
        return (self.kappa - self.gamma) / (2.0 + self.kappa)

    def epsilon(self, hbar):
        return hbar ** (1.0 - self.delta)

    def mu_schedule(self):
        mu = self.mu
        if isinstance(mu, list):
            if len(mu) != len(self.hbar):
                raise ConfigurationError("mu schedule and hbar schedule differ in length")
            return [float(m) for m in mu]
        return [float(mu)] * len(self.hbar)

    @property
    def hash(self):
        return config_hash(self.raw)

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if self.d < 1:
            raise ConfigurationError("d must be positive")
        self.grid_spec()
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta = {self.delta:.3g} outside (0, 1); need kappa > gamma")
        for h, m in zip(self.hbar, self.mu_schedule()):
            if h * abs(m) > self.hbar_mu_max:
                raise ConfigurationError(f"hbar * mu = {h * m:.3g} exceeds {self.hbar_mu_max}")

    # -- builders

    def potential_model(self):
        if not hasattr(self, "_V"):
            name = self.potential.get("name")
            params = dict(self.potential.get("params", {}))
            try:
                if name == "constant":
                    self._V = PotentialModel("constant", ConstantField(self.d, float(params.get("value", -1.0))),
                                             1.0, np.inf, {"value": float(params.get("value", -1.0))})
                else:
                    self._V = make_library_potential(name, params, d=self.d)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from exc
        return self._V

    def vector_potential(self):
        m = self.magnetic
        try:
            return make_vector_potential(m.get("name", "none"), m.get("params", {}), d=self.d)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def grid_spec(self):
        g = self.grid
        try:
            return GridSpec(self.d, float(g["L"]), int(g["N"]), g.get("boundary", "dirichlet"))
        except KeyError as exc:
            raise ConfigurationError(f"grid is missing {exc}") from exc

    def localizer(self):
        p = self.phi
        center = np.broadcast_to(np.asarray(p.get("center", 0.0), dtype=float), (self.d,))
        radius = float(p.get("radius", 1.0))
        if "mass" in p:
            unit = RadialBump(center, radius)
            lo, hi = center - radius, center + radius
            mass = nested_quadrature(lambda x: unit(x), lo, hi, rtol=1e-10)
            return RadialBump(center, radius, amp=float(p["mass"]) / mass)
        return RadialBump(center, radius, amp=float(p.get("amp", 1.0)))
