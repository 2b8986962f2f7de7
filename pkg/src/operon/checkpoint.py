"""Versioned model checkpoints ("operon-checkpoint-v1").

One JSON document holding the model kind, all network parameters, optional
state standardization vectors, the training-schedule metadata, and the
fingerprint (content hash) of the dataset the model was trained on.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .baselines import EnsembleParams, FnnParams
from .exceptions import DataFormatError
from .nn import params_from_dict, params_to_dict
from .operator import DeepONetConfig, DeepONetParams
from .operator import TrainingSchedule

CHECKPOINT_FORMAT = "operon-checkpoint-v1"


def _fnn_block(params: FnnParams) -> dict:
    return {
        "net": params_to_dict(params.net),
        "state_dim": params.state_dim,
        "num_sensors": params.num_sensors,
        "residual": params.residual,
        "h_max": params.h_max,
    }


def _fnn_from_block(block: dict) -> FnnParams:
    return FnnParams(
        params_from_dict(block["net"]),
        block["state_dim"],
        block["num_sensors"],
        block.get("residual", False),
        block.get("h_max"),
    )


def save_checkpoint(path, model, schedule: TrainingSchedule | None = None,
                    dataset_hash=None, meta=None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "schedule": asdict(schedule) if schedule is not None else None,
        "dataset_fingerprint": dataset_hash,
        "meta": meta or {},
    }
    if isinstance(model, DeepONetParams):
        doc["model_kind"] = "deeponet"
        doc["config"] = asdict(model.config)
        doc["branch"] = params_to_dict(model.branch)
        doc["trunk"] = params_to_dict(model.trunk)
        doc["standardization"] = (
            None
            if model.state_mean is None
            else {"mean": model.state_mean.tolist(), "std": model.state_std.tolist()}
        )
        doc["h_max"] = model.h_max
    elif isinstance(model, FnnParams):
        doc["model_kind"] = "fnn"
        doc["fnn"] = _fnn_block(model)
    elif isinstance(model, EnsembleParams):
        doc["model_kind"] = "ensemble"
        doc["members"] = [_fnn_block(m) for m in model.members]
    else:
        raise DataFormatError(f"cannot checkpoint model of type {type(model).__name__}")
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Returns (model, metadata dict with schedule/dataset_fingerprint/meta)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"unreadable checkpoint: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError(
            f"expected format {CHECKPOINT_FORMAT!r}, got {doc.get('format')!r}"
        )
    kind = doc.get("model_kind")
    if kind == "deeponet":
        cfg = doc["config"]
        cfg["branch_widths"] = list(cfg["branch_widths"])
        cfg["trunk_widths"] = list(cfg["trunk_widths"])
        std_block = doc.get("standardization")
        model = DeepONetParams(
            DeepONetConfig(**cfg),
            params_from_dict(doc["branch"]),
            params_from_dict(doc["trunk"]),
            None if std_block is None else np.asarray(std_block["mean"], dtype=float),
            None if std_block is None else np.asarray(std_block["std"], dtype=float),
            doc.get("h_max"),
        )
    elif kind == "fnn":
        model = _fnn_from_block(doc["fnn"])
    elif kind == "ensemble":
        model = EnsembleParams([_fnn_from_block(b) for b in doc["members"]])
    else:
        raise DataFormatError(f"unknown model kind {kind!r}")
    info = {
        "model_kind": kind,
        "schedule": doc.get("schedule"),
        "dataset_fingerprint": doc.get("dataset_fingerprint"),
        "meta": doc.get("meta", {}),
    }
    return model, info
