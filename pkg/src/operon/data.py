"""Generation, persistence, and splitting of one-step training triplets.

A triplet is ((state, local input), h, next state): the state and input are
sampled uniformly from the system's boxes, h uniformly from the requested
range, and the next state is produced by RK-4 with sub-steps capped at 0.01 s
so labels stay accurate across the whole h range.

File format "operon-dataset-v1": one JSON header line carrying the sampling
spec, record count, and a SHA-256 content hash, then one JSON record per line.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError, DataFormatError, DataIntegrityError
from .operator import LocalInput
from .systems import OdeSystem, cart_pole, lorenz63, pendulum, predator_prey, rk4_step

DATASET_FORMAT = "operon-dataset-v1"
SUBSTEP_CAP = 0.01  # max RK-4 sub-step during label generation

SYSTEMS = {
    "lorenz63": lorenz63,
    "predator_prey": predator_prey,
    "pendulum": pendulum,
    "cart_pole": cart_pole,
}


def get_system(name: str) -> OdeSystem:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown system {name!r}; known: {sorted(SYSTEMS)}"
        ) from None


@dataclass
class TrainingTriplet:
    """One supervised sample of the local one-step map."""

    state: np.ndarray
    local_input: LocalInput
    h: float
    next_state: np.ndarray

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.next_state = np.asarray(self.next_state, dtype=float)


@dataclass
class SamplingSpec:
    system: str
    count: int
    h_range: tuple
    num_sensors: int = 1
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.h_range
        if not (0.0 <= lo < hi):
            raise ConfigurationError(f"need 0 <= h_lo < h_hi, got {self.h_range}")
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")
        if self.num_sensors < 1:
            raise ConfigurationError("num_sensors must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")


def label_substeps(h: float) -> int:
    """Sub-step count so each RK-4 sub-step is at most SUBSTEP_CAP."""
    return max(1, math.ceil(h / SUBSTEP_CAP))


def _one_step_truth(system, state, u, h):
    if h == 0.0:
        return state.copy()
    k = label_substeps(h)
    x = state
    for _ in range(k):
        x = rk4_step(system, x, u, h / k)
    return x


def generate(spec: SamplingSpec):
    """Draw `count` triplets; deterministic per (seed, record index).

    Each record gets its own counter-based RNG stream, so generation order
    (or parallelism) can never change the output.
    """
    system = get_system(spec.system)
    lo, hi = system.state_space[:, 0], system.state_space[:, 1]
    u_lo, u_hi = system.input_space
    h_lo, h_hi = spec.h_range
    ns = spec.num_sensors

    triplets = []
    for i in range(spec.count):
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, i)))
        state = rng.uniform(lo, hi)
        u = rng.uniform(u_lo, u_hi) if u_hi > u_lo else u_lo
        h = rng.uniform(h_lo, h_hi)
        if ns > 1:
            interior = np.sort(rng.uniform(0.0, h, size=ns - 1))
            offsets = np.concatenate([[0.0], -interior])
        else:
            offsets = np.zeros(1)
        # the generating signal is constant over the step, so every sensor
        # reads the same value
        local = LocalInput(np.full(ns, u), offsets)
        next_state = _one_step_truth(system, state, u, h)
        triplets.append(TrainingTriplet(state, local, float(h), next_state))
    return triplets


# --- persistence --------------------------------------------------------------


def _record_line(t: TrainingTriplet) -> str:
    return json.dumps(
        {
            "state": t.state.tolist(),
            "values": t.local_input.values.tolist(),
            "offsets": t.local_input.offsets.tolist(),
            "h": t.h,
            "next_state": t.next_state.tolist(),
        }
    )


def _content_hash(record_lines) -> str:
    digest = hashlib.sha256()
    for line in record_lines:
        digest.update(line.encode())
        digest.update(b"\n")
    return digest.hexdigest()


def save(triplets, path, spec: SamplingSpec) -> str:
    """Write the dataset file; returns the content hash."""
    records = [_record_line(t) for t in triplets]
    content_hash = _content_hash(records)
    header = {
        "format": DATASET_FORMAT,
        "system": spec.system,
        "spec": asdict(spec) | {"h_range": list(spec.h_range)},
        "count": len(triplets),
        "substep_cap": SUBSTEP_CAP,
        "hash": content_hash,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for line in records:
            fh.write(line + "\n")
    return content_hash


def load_with_header(path):
    """Load triplets plus the header; validates format tag and content hash."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataIntegrityError(f"empty dataset file {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"unreadable dataset header: {exc}") from exc
    if header.get("format") != DATASET_FORMAT:
        raise DataFormatError(
            f"expected format {DATASET_FORMAT!r}, got {header.get('format')!r}"
        )
    records = lines[1:]
    if len(records) != header.get("count"):
        raise DataIntegrityError(
            f"dataset truncated: header says {header.get('count')} records, "
            f"file has {len(records)}"
        )
    if _content_hash(records) != header.get("hash"):
        raise DataIntegrityError("dataset content hash mismatch")
    triplets = []
    for line in records:
        doc = json.loads(line)
        try:
            triplets.append(
                TrainingTriplet(
                    np.asarray(doc["state"], dtype=float),
                    LocalInput(doc["values"], doc["offsets"]),
                    float(doc["h"]),
                    np.asarray(doc["next_state"], dtype=float),
                )
            )
        except KeyError as exc:
            raise DataFormatError(f"record missing field {exc}") from exc
    return triplets, header


def load(path):
    return load_with_header(path)[0]


def split(triplets, holdout_fraction, seed):
    """Deterministic shuffled split into (train, holdout); disjoint, exhaustive."""
    if not (0.0 < holdout_fraction < 1.0):
        raise ConfigurationError("holdout_fraction must lie strictly between 0 and 1")
    count = len(triplets)
    n_hold = int(round(count * holdout_fraction))
    if n_hold == 0 or n_hold == count:
        raise ConfigurationError("degenerate split: a side would be empty")
    perm = np.random.default_rng(seed).permutation(count)
    hold_idx = set(perm[:n_hold].tolist())
    train = [triplets[i] for i in range(count) if i not in hold_idx]
    holdout = [triplets[i] for i in sorted(hold_idx)]
    return train, holdout
