"""Experiment configuration, sweeps, exponent fits and output."""
from .config import ExperimentConfig, canonical_json, config_hash
from .io import emit, read_csv, read_json, write_manifest
from .sweep import CSV_FIELDS, FitResult, SweepRecord, fit_exponent, run_point, run_sweep

__all__ = ["ExperimentConfig", "canonical_json", "config_hash", "emit", "read_csv", "read_json", "write_manifest",
           "CSV_FIELDS", "FitResult", "SweepRecord", "fit_exponent", "run_point", "run_sweep"]
