"""Noise-aware conditional diffusion speech enhancement on synthetic signals."""

import json

from . import _core
from ._core import (
    EmptyInputError,
    MissingFileError,
    NumericError,
    Schedule,
    ScheduleError,
    SchemaError,
    VersionError,
    embed,
    enhance,
    separability,
    seg_snr,
    si_sdr,
)

__all__ = [
    "EmptyInputError",
    "MissingFileError",
    "NumericError",
    "Schedule",
    "ScheduleError",
    "SchemaError",
    "VersionError",
    "config",
    "embed",
    "enhance",
    "generate_corpus",
    "separability",
    "seg_snr",
    "si_sdr",
    "train",
]


def config(**overrides):
    """Resolved experiment config as a dict. Nested overrides are dicts."""
    return json.loads(_core.default_config(json.dumps(overrides)))


def generate_corpus(cfg=None):
    """Synthetic corpus as {"train", "test", "unseen"} lists of record dicts."""
    return _core.generate_corpus(json.dumps(cfg or {}))


def train(cfg, checkpoint):
    """Trains the configured model, writes `checkpoint` and returns per-epoch stats."""
    return _core.train(json.dumps(cfg), str(checkpoint))
