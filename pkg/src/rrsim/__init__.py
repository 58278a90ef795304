"""Deterministic simulator for distributed finite-sum optimization with
gradient compression and without-replacement sampling."""

from .compressors import Compressor, bits_sent, compress, dithering, identity, rand_k, verify_unbiased
from .config import ExperimentConfig, parse_config_file
from .data import load_libsvm, make_synthetic, partition
from .diagnostics import RunRecord, estimate_sigma_rad, hetero_constants
from .harness import build_problem, run, sweep
from .objective import ClientDataset, DataPoint, FiniteSumProblem

__all__ = [
    "Compressor",
    "bits_sent",
    "compress",
    "dithering",
    "identity",
    "rand_k",
    "verify_unbiased",
    "ExperimentConfig",
    "parse_config_file",
    "load_libsvm",
    "make_synthetic",
    "partition",
    "RunRecord",
    "estimate_sigma_rad",
    "hetero_constants",
    "build_problem",
    "run",
    "sweep",
    "ClientDataset",
    "DataPoint",
    "FiniteSumProblem",
]
