"""Component partitions and the (effect, shifted effect, cause) training triples."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .errors import ContractViolation, InsufficientDataError

__all__ = [
    "ComponentPartition",
    "CausalTripleSet",
    "project",
    "build_triples",
    "train_test_split",
    "cumulative_neighbor_sets",
    "save_triples",
    "load_triples",
]


class ComponentPartition:
    """Named, pairwise disjoint index sets over ``range(n_dims)``.

    Indices not claimed by any component form the remainder, which may be
    empty.

    >>> p = ComponentPartition({"omega1": [0, 1, 2], "omega2": [3, 4, 5]}, 6)
    >>> p["omega2"]
    (3, 4, 5)
    >>> p.remainder
    ()
    """

    def __init__(self, components: dict, n_dims: int):
        self.n_dims = int(n_dims)
        self.components = {}
        seen = {}
        for name, idx in components.items():
            idx = tuple(int(i) for i in idx)
            if not idx:
                raise ContractViolation(f"component {name!r} is empty")
            if len(set(idx)) != len(idx):
                raise ContractViolation(f"component {name!r} repeats an index")
            for i in idx:
                if not 0 <= i < self.n_dims:
                    raise ContractViolation(f"component {name!r}: index {i} outside [0, {self.n_dims})")
                if i in seen:
                    raise ContractViolation(f"components {seen[i]!r} and {name!r} overlap at index {i}")
                seen[i] = name
            self.components[str(name)] = idx
        if len(self.components) != len(components):
            raise ContractViolation("component names must be unique")
        self.remainder = tuple(i for i in range(self.n_dims) if i not in seen)

    def __getitem__(self, name) -> tuple:
        try:
            return self.components[name]
        except KeyError:
            raise ContractViolation(f"unknown component {name!r}; have {sorted(self.components)}") from None

    def __contains__(self, name):
        return name in self.components

    def __repr__(self):
        return f"ComponentPartition({self.components!r}, n_dims={self.n_dims})"

    def is_valid(self) -> bool:
        flat = [i for idx in self.components.values() for i in idx]
        return len(flat) == len(set(flat)) and all(0 <= i < self.n_dims for i in flat)

    def to_dict(self):
        return {"n_dims": self.n_dims, "components": {k: list(v) for k, v in self.components.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["components"], d["n_dims"])


@dataclass(frozen=True)
class CausalTripleSet:
    """Rows ``(effect_now[n], effect_shifted[n], cause_now[n])``.

    ``row_index[n]`` is the trajectory index of the state behind row ``n``;
    ``effect_shifted[n]`` comes from index ``row_index[n] + shift_steps``.
    """

    effect_now: np.ndarray
    effect_shifted: np.ndarray
    cause_now: np.ndarray
    shift_steps: int
    dt: float
    row_index: np.ndarray

    def __post_init__(self):
        d = self.effect_now.shape[0]
        if self.effect_shifted.shape != self.effect_now.shape:
            raise ContractViolation("effect_now and effect_shifted shapes differ")
        if self.cause_now.shape[0] != d or len(self.row_index) != d:
            raise ContractViolation("triple matrices must share their row count")
        if self.shift_steps < 1:
            raise ContractViolation("shift_steps must be >= 1")

    def __len__(self):
        return self.effect_now.shape[0]

    def take(self, rows) -> "CausalTripleSet":
        rows = np.asarray(rows, dtype=int)
        return CausalTripleSet(self.effect_now[rows], self.effect_shifted[rows], self.cause_now[rows],
                               self.shift_steps, self.dt, self.row_index[rows])

    def with_cause(self, cause_now) -> "CausalTripleSet":
        return CausalTripleSet(self.effect_now, self.effect_shifted, np.asarray(cause_now, dtype=float),
                               self.shift_steps, self.dt, self.row_index)

    @property
    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.row_index) == 1))


def _states(trajectory):
    return trajectory.states if isinstance(trajectory, Trajectory) else np.asarray(trajectory, dtype=float)


def project(trajectory, indices) -> np.ndarray:
    """Columns ``indices`` of the trajectory, in the given order."""
    states = _states(trajectory)
    idx = np.asarray(indices, dtype=int).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= states.shape[1]):
        raise ContractViolation(f"indices {idx.tolist()} outside [0, {states.shape[1]})")
    return states[:, idx]


def build_triples(trajectory: Trajectory, partition: ComponentPartition, effect: str, cause: str,
                  shift_steps: int) -> CausalTripleSet:
    """Pair every state ``n`` with state ``n + shift_steps`` (stride-1 windows)."""
    if effect == cause:
        raise ContractViolation("effect and cause must name different components")
    return triples_from_indices(trajectory, partition[effect], partition[cause], shift_steps)


def triples_from_indices(trajectory: Trajectory, effect_idx, cause_idx, shift_steps: int) -> CausalTripleSet:
    if int(shift_steps) != shift_steps or shift_steps < 1:
        raise ContractViolation(f"shift_steps must be an integer >= 1, got {shift_steps}")
    shift_steps = int(shift_steps)
    n = len(trajectory)
    if n <= shift_steps:
        raise InsufficientDataError(f"trajectory of length {n} is too short for shift {shift_steps}")
    e = project(trajectory, effect_idx)
    c = project(trajectory, cause_idx)
    d = n - shift_steps
    return CausalTripleSet(e[:d], e[shift_steps:], c[:d], shift_steps, trajectory.dt, np.arange(d))


def train_test_split(triples: CausalTripleSet, train_fraction=0.8, mode="contiguous", seed=0):
    """Split rows into disjoint train/test sets.

    ``contiguous`` keeps time order with the training block first; ``random``
    draws a seeded permutation (rows inside each part stay sorted).
    """
    if not 0 < train_fraction < 1:
        raise ContractViolation(f"train_fraction must lie in (0, 1), got {train_fraction}")
    d = len(triples)
    n_train = int(round(train_fraction * d))
    if n_train < 1 or n_train >= d:
        raise InsufficientDataError(f"{d} rows cannot be split at fraction {train_fraction}")
    if mode == "contiguous":
        order = np.arange(d)
    elif mode == "random":
        order = np.random.default_rng(seed).permutation(d)
    else:
        raise ContractViolation(f"unknown split mode {mode!r}")
    train = np.sort(order[:n_train])
    test = np.sort(order[n_train:])
    return triples.take(train), triples.take(test)


def cumulative_neighbor_sets(n_sites: int, target: int, delta_n: int) -> tuple:
    """Sites ``target+1 .. target+delta_n`` (or ``target-1 .. target-|delta_n|``) on the ring.

    Returned in ascending index order so that equal sets compare equal
    regardless of the direction used to build them.
    """
    if not 0 <= target < n_sites:
        raise ContractViolation(f"target {target} outside [0, {n_sites})")
    if not 1 <= abs(delta_n) <= n_sites - 1:
        raise ContractViolation(f"|delta_n| must lie in [1, {n_sites - 1}], got {delta_n}")
    step = 1 if delta_n > 0 else -1
    return tuple(sorted((target + step * k) % n_sites for k in range(1, abs(delta_n) + 1)))


def save_triples(path, triples: CausalTripleSet, partition: ComponentPartition | None = None,
                 effect=None, cause=None, split=None):
    """Write ``<path>.csv`` in the trajectory CSV layout plus a ``<path>.json`` sidecar.

    CSV columns ``w*`` are effect_now, effect_shifted and cause_now side by
    side; ``t`` is the time of the row's base state.
    """
    path = Path(path)
    ne, nc = triples.effect_now.shape[1], triples.cause_now.shape[1]
    block = np.hstack([triples.effect_now, triples.effect_shifted, triples.cause_now])
    csv_path = path.with_suffix(".csv")
    with csv_path.open("w", newline="") as fh:
        fh.write(",".join(["t"] + [f"w{i}" for i in range(block.shape[1])]) + "\n")
        for r, row in zip(triples.row_index, block):
            fh.write(",".join([repr(float(r * triples.dt))] + [repr(float(v)) for v in row]) + "\n")
    meta = {
        "effect_dim": ne,
        "cause_dim": nc,
        "shift_steps": triples.shift_steps,
        "dt": triples.dt,
        "row_index": [int(r) for r in triples.row_index],
        "partition": partition.to_dict() if partition is not None else None,
        "effect": effect,
        "cause": cause,
        "split": split,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return csv_path


def load_triples(path):
    """Inverse of :func:`save_triples`; returns ``(triples, sidecar_dict)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    ne, nc = meta["effect_dim"], meta["cause_dim"]
    w = data[:, 1:]
    triples = CausalTripleSet(w[:, :ne], w[:, ne:2 * ne], w[:, 2 * ne:2 * ne + nc],
                              meta["shift_steps"], meta["dt"], np.asarray(meta["row_index"], dtype=int))
    return triples, meta
