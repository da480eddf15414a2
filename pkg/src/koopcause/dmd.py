"""Rectangular DMD models over ``[identity ; RFF]`` dictionaries.

A model maps the stacked column ``[w_E ; Psi(w)]`` at time ``n`` to the
effect component at ``n + shift``. Marginal models evaluate the dictionary on
``w_E`` only; joint models on ``[w_E ; w_C]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DegenerateFitError, InsufficientDataError
from .io import read_blob, write_blob
from .partitions import CausalTripleSet
from .rff import RffDictionary, evaluate

__all__ = [
    "FitReport",
    "DmdModel",
    "pseudoinverse_solve",
    "fit",
    "predict",
    "model_error",
    "save_model",
    "load_model",
]

DEFAULT_CUTOFF = 1e-10
_MAGIC = b"KCDMD001"


@dataclass(frozen=True)
class FitReport:
    rank_used: int
    singular_values: np.ndarray
    train_rows: int
    condition_estimate: float


@dataclass(frozen=True, eq=False)
class DmdModel:
    matrix: np.ndarray  # (|E|, |E| + M)
    kind: str
    shift_steps: int
    dictionary: RffDictionary | None  # None: identity observables only
    pinv_cutoff: float
    fit_residual: float
    ridge: float = 0.0
    report: FitReport | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("marginal", "joint"):
            raise ContractViolation(f"kind must be 'marginal' or 'joint', got {self.kind!r}")
        m = np.array(self.matrix, dtype=float, ndmin=2)
        if m.shape[1] != m.shape[0] + self.m_features:
            raise ContractViolation(f"matrix shape {m.shape} does not fit |E| + M columns")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def m_features(self) -> int:
        return 0 if self.dictionary is None else self.dictionary.m_features

    @property
    def effect_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def cause_dim(self) -> int:
        if self.kind == "marginal" or self.dictionary is None:
            return 0
        return self.dictionary.input_dim - self.effect_dim

    @property
    def identity_block(self) -> np.ndarray:
        return self.matrix[:, :self.effect_dim]

    def predict(self, effect_now, cause_now=None):
        return predict(self, effect_now, cause_now)


def _svd_solve(targets, features, cutoff, ridge):
    """Least-squares ``X`` minimizing ``||targets - X @ features||_F``."""
    targets = np.asarray(targets, dtype=float)
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or targets.ndim != 2 or targets.shape[1] != features.shape[1]:
        raise ContractViolation(f"incompatible shapes targets {targets.shape}, features {features.shape}")
    if features.shape[1] < 1:
        raise InsufficientDataError("need at least one sample column")
    if cutoff < 0 or ridge < 0:
        raise ContractViolation("cutoff and ridge must be non-negative")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
        raise ContractViolation("features and targets must be finite")
    if not np.any(features):
        raise DegenerateFitError("feature matrix is identically zero")
    u, s, vt = np.linalg.svd(features, full_matrices=False)
    keep = s > cutoff * s[0]
    r = int(np.count_nonzero(keep))
    s_r = s[:r]
    inv = s_r / (s_r * s_r + ridge) if ridge else 1.0 / s_r
    x = ((targets @ vt[:r].T) * inv) @ u[:, :r].T
    report = FitReport(r, s, features.shape[1], float(s[0] / s_r[-1]))
    return x, report


def pseudoinverse_solve(targets, features, cutoff: float = DEFAULT_CUTOFF, ridge: float = 0.0) -> np.ndarray:
    """Minimum-norm least-squares solution ``targets @ pinv(features)``.

    Parameters
    ----------
    targets : (E, D) array
    features : (F, D) array
        One column per sample.
    cutoff : float
        Singular values below ``cutoff * s_max`` are discarded.
    ridge : float
        Optional Tikhonov term; ``0`` gives the plain truncated pseudoinverse.

    Returns
    -------
    (E, F) array
    """
    return _svd_solve(targets, features, cutoff, ridge)[0]


def _features(dictionary, kind, effect_now, cause_now):
    """Design matrix with one row per sample: ``[w_E, Psi(...)]``."""
    e = np.atleast_2d(np.asarray(effect_now, dtype=float))
    if kind == "marginal":
        if cause_now is not None:
            raise ContractViolation("marginal models take no cause input")
        z = e
    else:
        if cause_now is None:
            raise ContractViolation("joint models require a cause input")
        c = np.atleast_2d(np.asarray(cause_now, dtype=float))
        if c.shape[0] != e.shape[0]:
            raise ContractViolation("effect and cause inputs need the same number of rows")
        z = np.hstack([e, c])
    if dictionary is None:
        return e
    if z.shape[1] != dictionary.input_dim:
        raise ContractViolation(f"dictionary expects {dictionary.input_dim} inputs, got {z.shape[1]}")
    return np.hstack([e, evaluate(dictionary, z)])


def fit(triples: CausalTripleSet, dictionary: RffDictionary | None, kind: str = "marginal",
        cutoff: float = DEFAULT_CUTOFF, ridge: float = 0.0) -> DmdModel:
    """Fit the marginal or joint model to ``triples`` (training rows).

    The marginal dictionary must take ``|E|`` inputs, the joint one
    ``|E| + |C|``. ``dictionary=None`` fits the identity observables alone.
    """
    if kind not in ("marginal", "joint"):
        raise ContractViolation(f"kind must be 'marginal' or 'joint', got {kind!r}")
    cause = triples.cause_now if kind == "joint" else None
    rows = _features(dictionary, kind, triples.effect_now, cause)
    targets = triples.effect_shifted
    x, report = _svd_solve(targets.T, rows.T, cutoff, ridge)
    resid = targets - np.einsum("nf,ef->ne", rows, x)
    # training objective, including the Tikhonov term when one is used
    objective = float(np.sum(resid * resid)) + ridge * float(np.sum(x * x))
    return DmdModel(x, kind, triples.shift_steps, dictionary, cutoff, objective, ridge, report)


def predict(model: DmdModel, effect_now, cause_now=None) -> np.ndarray:
    """Apply the model to one state (vector in, vector out) or to a batch of rows."""
    single = np.ndim(effect_now) == 1
    rows = _features(model.dictionary, model.kind, effect_now, cause_now)
    if rows.shape[1] != model.matrix.shape[1]:
        raise ContractViolation("input does not match the model's effect dimension")
    out = np.einsum("nf,ef->ne", rows, model.matrix)
    return out[0] if single else out


def model_error(model: DmdModel, test: CausalTripleSet) -> float:
    """Mean over test rows of ``||prediction - effect_shifted||^2``."""
    if len(test) == 0:
        raise InsufficientDataError("empty test set")
    cause = test.cause_now if model.kind == "joint" else None
    err = predict(model, test.effect_now, cause) - test.effect_shifted
    return float(np.mean(np.sum(err * err, axis=1)))


def save_model(path, model: DmdModel):
    header = {
        "kind": model.kind,
        "shift_steps": model.shift_steps,
        "effect_dim": model.effect_dim,
        "cause_dim": model.cause_dim,
        "m_features": model.m_features,
        "pinv_cutoff": model.pinv_cutoff,
        "ridge": model.ridge,
        "dictionary_digest": None if model.dictionary is None else model.dictionary.digest,
        "fit_residual": model.fit_residual,
    }
    write_blob(path, _MAGIC, header, [model.matrix])


def load_model(path, dictionary: RffDictionary | None) -> DmdModel:
    """Read a model; ``dictionary`` must be the one it was fitted with."""
    header, (matrix,) = read_blob(path, _MAGIC)
    digest = None if dictionary is None else dictionary.digest
    if digest != header["dictionary_digest"]:
        raise ContractViolation(f"{path}: dictionary digest does not match the model header")
    return DmdModel(matrix, header["kind"], header["shift_steps"], dictionary, header["pinv_cutoff"],
                    header["fit_residual"], header["ridge"])
