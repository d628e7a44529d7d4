"""Comparative-correlative probing toolkit (C++ core)."""

import json

from . import _core
from ._core import (
    CcprobeError,
    calibrate,
    config_hash,
    decision_flip,
    lexical_overlap,
    mock_embed,
    negate_core,
    quartile_upper,
    render_scenario,
    train_probe,
)

__all__ = [
    "CcprobeError",
    "artificial_pool",
    "build_dataset",
    "calibrate",
    "config_hash",
    "decision_flip",
    "lexical_overlap",
    "mock_embed",
    "negate_core",
    "quartile_upper",
    "recognize",
    "render_scenario",
    "run_cli",
    "sample_sentence",
    "train_probe",
]


def sample_sentence(grammar="train", seed=0, label=None):
    return json.loads(_core.sample_sentence(grammar, seed, label))


def recognize(text, grammar="train"):
    return json.loads(_core.recognize(text, grammar))


def artificial_pool(grammar, n_pairs, seed=0):
    return json.loads(_core.artificial_pool(grammar, n_pairs, seed))


def build_dataset(pool, feature, n_star, split="train", seed=0):
    """pool: records as returned by artificial_pool."""
    return json.loads(_core.build_dataset(json.dumps(pool), feature, n_star, split, seed))


def run_cli(*args):
    """Run a ccprobe subcommand in-process; returns (status, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
