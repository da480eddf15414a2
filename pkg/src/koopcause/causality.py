"""Koopman causal measure and the experiments built on it.

The measure for ``cause -> effect`` at shift ``t`` is the test error of a
marginal DMD model (dictionary over the effect only) minus the test error of a
joint model (dictionary over effect and cause). Positive values mean the cause
carries information about the effect's future that the effect alone lacks.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from . import dmd
from .dynamics import (CoupledRosslerParams, Lorenz96Params, Trajectory, coupled_rossler_deriv, integrate,
                       lyapunov_time_steps, random_initial_state, simulate_lorenz96)
from .errors import ContractViolation, InsufficientDataError
from .io import array_digest
from .partitions import (CausalTripleSet, ComponentPartition, cumulative_neighbor_sets, train_test_split,
                         triples_from_indices)
from .rff import RffDictionary, concat_features, default_bandwidth, sample, tensor_compose, zero_extend

__all__ = [
    "DictConfig",
    "SplitConfig",
    "CausalityResult",
    "ForecastTrace",
    "marginal_dictionary",
    "joint_dictionary",
    "build_dictionaries",
    "causal_measure",
    "causal_measure_sweep",
    "fit_marginal_joint",
    "counterfactual_measure",
    "counterfactual_coupling_sweep",
    "default_horizon_steps",
    "conditional_forecast",
    "l96_cumulative_analysis",
    "l96_instantaneous_analysis",
    "plateau_onset",
    "INSTANTANEOUS_CAVEAT",
    "DEFAULT_RIDGE_PER_ROW",
    "L96_DICT",
]

INSTANTANEOUS_CAVEAT = (
    "Single small-shift measures approximate finite-difference generator estimates; "
    "they show direction asymmetry and fast plateaus but are not expected to recover "
    "the exact {-2, -1, +1} advection stencil."
)


@dataclass(frozen=True)
class DictConfig:
    """RFF settings. ``bandwidth=None`` uses ``1/std`` of the training data per dimension.

    With ``dim_scaling`` the cause-block bandwidths are divided by
    ``sqrt(|C|)``, keeping the cross-feature phase variance independent of the
    number of cause dimensions.
    """

    m_features: int = 256
    bandwidth: float | tuple | None = None
    seed: int = 0
    dim_scaling: bool = False


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    mode: str = "contiguous"
    seed: int = 0


@dataclass(frozen=True)
class CausalityResult:
    marginal_error: float
    joint_error: float
    measure: float
    shift_steps: int
    config_fingerprint: str
    null_p95: float = float("nan")
    null_measures: tuple = ()
    effect: tuple = ()
    cause: tuple = ()
    delta_n: int | None = None

    @property
    def exceeds_null(self) -> bool:
        """True when the measure lies above the 95th percentile of the permutation null."""
        if not self.null_measures:
            raise ContractViolation("result carries no permutation null")
        return self.measure > self.null_p95

    @property
    def marginal_error_fraction(self) -> float:
        return self.measure / self.marginal_error if self.marginal_error else float("nan")


@dataclass(frozen=True)
class ForecastTrace:
    predicted: np.ndarray
    reference: np.ndarray
    kind: str
    mse: float
    row_index: np.ndarray = field(default=None, repr=False)


def _fingerprint(payload) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _child_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint32)[0])


_MARGINAL_TAG, _CAUSE_TAG, _NULL_TAG = 0x3A61, 0xCA05, 0x9011

# Tikhonov weight per training row. Unregularized RFF fits interpolate the
# training orbit and extrapolate wildly on held-out excursions.
DEFAULT_RIDGE_PER_ROW = 1e-2


# The cumulative analysis grows the cause set from 1 to N-1 sites. Without
# dimension scaling the cross-feature phase variance grows with it, the joint
# features decorrelate from the data and the measure decays at large |dn|.
L96_DICT = DictConfig(1024, dim_scaling=True)


def _scaled_columns(n_dims, m, seed, columns, bandwidth):
    """Unit-bandwidth draw over all state dims, restricted to ``columns`` and rescaled."""
    unit = sample(n_dims, m, 1.0, seed).select(columns)
    bw = np.asarray(bandwidth, dtype=float)
    return RffDictionary(unit.frequencies * bw, unit.offsets, unit.seed, bw)


def marginal_dictionary(n_dims: int, effect_idx, bw_effect, cfg: DictConfig) -> RffDictionary:
    return _scaled_columns(n_dims, cfg.m_features, _child_seed(cfg.seed, _MARGINAL_TAG), effect_idx, bw_effect)


def joint_dictionary(marginal: RffDictionary, n_dims: int, cause_idx, bw_cause, cfg: DictConfig) -> RffDictionary:
    """``[marginal features (ignoring the cause) ; cross features]`` over ``[w_E ; w_C]``.

    Each cross feature reuses a marginal effect frequency and adds an
    independently seeded cause frequency, so the joint span contains the
    marginal span.
    """
    bw_cause = np.asarray(bw_cause, dtype=float)
    if cfg.dim_scaling:
        bw_cause = bw_cause / np.sqrt(len(cause_idx))
    cause = _scaled_columns(n_dims, cfg.m_features, _child_seed(cfg.seed, _CAUSE_TAG), cause_idx, bw_cause)
    return concat_features(zero_extend(marginal, bw_cause), tensor_compose(marginal, cause))


def build_dictionaries(n_dims: int, effect_idx, cause_idx, bw_effect, bw_cause, cfg: DictConfig):
    """Marginal and nested joint dictionaries for one (effect, cause) pair.

    Frequencies are drawn once per state dimension from seeds derived from
    ``cfg.seed`` and then restricted to the requested columns, so a given
    cause set always yields the same dictionary whatever order it was built in.
    """
    marginal = marginal_dictionary(n_dims, effect_idx, bw_effect, cfg)
    return marginal, joint_dictionary(marginal, n_dims, cause_idx, bw_cause, cfg)


def _bandwidths(cfg: DictConfig, n_dims, effect_idx, cause_idx, train: CausalTripleSet):
    if cfg.bandwidth is None:
        return default_bandwidth(train.effect_now), default_bandwidth(train.cause_now)
    bw = np.broadcast_to(np.asarray(cfg.bandwidth, dtype=float), (n_dims,))
    return bw[list(effect_idx)], bw[list(cause_idx)]


def _surrogate(triples: CausalTripleSet, rng, mode: str) -> CausalTripleSet:
    """Cause rows reordered: a random cyclic rotation (``"rotate"``) or a full shuffle (``"shuffle"``).

    A rotation keeps the cause's own serial dependence and only breaks its
    alignment with the effect; a shuffle turns the cause into white noise.
    """
    n = len(triples)
    if mode == "shuffle":
        order = rng.permutation(n)
    elif mode == "rotate":
        lo = max(1, n // 10)
        order = np.roll(np.arange(n), int(rng.integers(lo, n - lo + 1)))
    else:
        raise ContractViolation(f"null_mode must be 'rotate' or 'shuffle', got {mode!r}")
    return triples.with_cause(triples.cause_now[order])


def _split(triples, split_config: SplitConfig):
    return train_test_split(triples, split_config.train_fraction, split_config.mode, split_config.seed)


def _joint_error_nulls(full, joint_dict, split_config, marg_err, n_permutations, rng, null_mode, cutoff,
                       ridge_per_row):
    nulls = []
    for _ in range(n_permutations):
        ptrain, ptest = _split(_surrogate(full, rng, null_mode), split_config)
        pm = dmd.fit(ptrain, joint_dict, "joint", cutoff, ridge_per_row * len(ptrain))
        nulls.append(marg_err - dmd.model_error(pm, ptest))
    return nulls


def _evaluate_pair(full, split_config, n_dims, effect_idx, cause_idx, cfg, n_permutations, null_seed,
                   null_mode, cutoff, ridge_per_row):
    train, test = _split(full, split_config)
    ridge = ridge_per_row * len(train)
    bw_e, bw_c = _bandwidths(cfg, n_dims, effect_idx, cause_idx, train)
    marg_dict, joint_dict = build_dictionaries(n_dims, effect_idx, cause_idx, bw_e, bw_c, cfg)
    marg_model = dmd.fit(train, marg_dict, "marginal", cutoff, ridge)
    marg_err = dmd.model_error(marg_model, test)
    joint_model = dmd.fit(train, joint_dict, "joint", cutoff, ridge)
    joint_err = dmd.model_error(joint_model, test)
    rng = np.random.default_rng(_child_seed(null_seed, _NULL_TAG))
    nulls = _joint_error_nulls(full, joint_dict, split_config, marg_err, n_permutations, rng, null_mode, cutoff,
                               ridge_per_row)
    return marg_model, marg_err, joint_model, joint_err, nulls


def _result(marg_err, joint_err, shift, fingerprint, nulls, effect_idx, cause_idx, delta_n=None):
    p95 = float(np.percentile(nulls, 95)) if nulls else float("nan")
    return CausalityResult(marg_err, joint_err, marg_err - joint_err, shift, fingerprint, p95, tuple(nulls),
                           tuple(int(i) for i in effect_idx), tuple(int(i) for i in cause_idx), delta_n)


def causal_measure(trajectory: Trajectory, partition: ComponentPartition, effect: str, cause: str,
                   shift_steps: int, dict_config: DictConfig = DictConfig(),
                   split_config: SplitConfig = SplitConfig(), n_permutations: int = 0, null_seed=None,
                   cutoff: float = dmd.DEFAULT_CUTOFF, ridge_per_row: float = DEFAULT_RIDGE_PER_ROW,
                   null_mode: str = "rotate") -> CausalityResult:
    """Marginal error minus joint error for ``cause -> effect`` at ``shift_steps``.

    Both models are fitted on the same training rows with Tikhonov weight
    ``ridge_per_row * n_train`` and scored on the same test rows. With
    ``n_permutations > 0`` the joint model is refitted that many times on
    surrogate data whose cause rows are reordered (see ``null_mode``) before
    the train/test split, giving a null distribution of the measure;
    ``null_p95`` is its 95th percentile.
    """
    if effect == cause:
        raise ContractViolation("effect and cause must differ")
    return _causal_measure_idx(trajectory, partition[effect], partition[cause], shift_steps, dict_config,
                               split_config, n_permutations, null_seed, cutoff, ridge_per_row, null_mode)


def _causal_measure_idx(trajectory, effect_idx, cause_idx, shift_steps, dict_config, split_config,
                        n_permutations=0, null_seed=None, cutoff=dmd.DEFAULT_CUTOFF,
                        ridge_per_row=DEFAULT_RIDGE_PER_ROW, null_mode="rotate"):
    null_seed = dict_config.seed if null_seed is None else null_seed
    full = triples_from_indices(trajectory, effect_idx, cause_idx, shift_steps)
    _, marg_err, _, joint_err, nulls = _evaluate_pair(full, split_config, trajectory.dim, effect_idx, cause_idx,
                                                      dict_config, n_permutations, null_seed, null_mode, cutoff,
                                                      ridge_per_row)
    fp = _fingerprint({
        "trajectory": array_digest(trajectory.states), "dt": trajectory.dt,
        "effect": list(effect_idx), "cause": list(cause_idx), "shift": shift_steps,
        "dict": asdict(dict_config), "split": asdict(split_config), "n_permutations": n_permutations,
        "null_seed": null_seed, "null_mode": null_mode, "cutoff": cutoff, "ridge_per_row": ridge_per_row,
    })
    return _result(marg_err, joint_err, shift_steps, fp, nulls, effect_idx, cause_idx)


def fit_marginal_joint(trajectory: Trajectory, partition: ComponentPartition, effect: str, cause: str,
                       shift_steps: int, dict_config: DictConfig = DictConfig(),
                       split_config: SplitConfig = SplitConfig(), cutoff: float = dmd.DEFAULT_CUTOFF,
                       ridge_per_row: float = DEFAULT_RIDGE_PER_ROW):
    """The two fitted models behind :func:`causal_measure`, with the rows they used.

    Returns ``(marginal_model, joint_model, train, test)``.
    """
    if effect == cause:
        raise ContractViolation("effect and cause must differ")
    full = triples_from_indices(trajectory, partition[effect], partition[cause], shift_steps)
    marg, _, joint, _, _ = _evaluate_pair(full, split_config, trajectory.dim, partition[effect], partition[cause],
                                          dict_config, 0, 0, "rotate", cutoff, ridge_per_row)
    train, test = _split(full, split_config)
    return marg, joint, train, test


def causal_measure_sweep(trajectory: Trajectory, partition: ComponentPartition, effect: str, cause: str,
                         shifts, dict_config: DictConfig = DictConfig(), split_config: SplitConfig = SplitConfig(),
                         n_permutations: int = 0, null_seed=None, cutoff: float = dmd.DEFAULT_CUTOFF,
                         ridge_per_row: float = DEFAULT_RIDGE_PER_ROW, null_mode: str = "rotate") -> list:
    """:func:`causal_measure` at each shift, sharing one trajectory."""
    shifts = [int(s) for s in shifts]
    if shifts != sorted(shifts):
        raise ContractViolation("shifts must be sorted ascending")
    return [causal_measure(trajectory, partition, effect, cause, s, dict_config, split_config, n_permutations,
                           null_seed, cutoff, ridge_per_row, null_mode) for s in shifts]


def counterfactual_measure(coupled: Trajectory, counterfactual: Trajectory, indices, horizon_steps: int) -> float:
    """Mean over the first ``horizon_steps`` samples of ``||w(t) - w_hat(t)||^2`` on ``indices``."""
    if coupled.dt != counterfactual.dt:
        raise ContractViolation("trajectories must share dt")
    if horizon_steps < 1 or len(coupled) < horizon_steps or len(counterfactual) < horizon_steps:
        raise ContractViolation(f"both trajectories need at least {horizon_steps} samples")
    idx = list(indices)
    diff = coupled.states[:horizon_steps, idx] - counterfactual.states[:horizon_steps, idx]
    return float(np.mean(np.sum(diff * diff, axis=1)))


HORIZON_FRACTION = 0.9


def default_horizon_steps(params: CoupledRosslerParams, dt: float = 0.01, seed: int = 0) -> int:
    """``HORIZON_FRACTION`` of the estimated Lyapunov time, in steps: "just below one Lyapunov time"."""
    return int(HORIZON_FRACTION * lyapunov_time_steps(params, dt, seed=seed))


def counterfactual_coupling_sweep(couplings, vary: str = "c1", base: CoupledRosslerParams | None = None,
                                  counterfactual: dict | None = None, indices=(0, 1, 2),
                                  horizon_steps: int | None = None, n_ensemble: int = 20, dt: float = 0.01,
                                  burn_in: int = 10_000, seed: int = 0, ic_box=(-5.0, 5.0)) -> np.ndarray:
    """Ensemble-mean counterfactual measure as one coupling constant varies.

    For each value ``v`` the actual system is ``base`` with ``vary=v``; the
    counterfactual is the same system with the fields in ``counterfactual``
    overridden (default: the varied constant set to zero). Each ensemble
    member starts from a seeded random state that is burned in with both
    couplings switched off, so the two oscillators sit on their own attractors
    with unrelated phases; the actual and counterfactual systems are then
    integrated from that common state.

    ``horizon_steps=None`` uses ``HORIZON_FRACTION`` of the Lyapunov time of
    the uncoupled system, estimated with
    :func:`~koopcause.dynamics.lyapunov_time_steps`.
    """
    base = base or CoupledRosslerParams(c1=0.0, c2=0.0)
    counterfactual = {vary: 0.0} if counterfactual is None else dict(counterfactual)
    free = CoupledRosslerParams(**{**asdict(base), "c1": 0.0, "c2": 0.0})
    if horizon_steps is None:
        horizon_steps = default_horizon_steps(free, dt, seed=seed)
    f_free = partial(coupled_rossler_deriv, params=free)
    starts = []
    for k in range(n_ensemble):
        x0 = random_initial_state(6, _child_seed(seed, k), *ic_box)
        starts.append(integrate(f_free, x0, dt, burn_in).final if burn_in else x0)
    out = []
    for v in couplings:
        actual = CoupledRosslerParams(**{**asdict(base), vary: float(v)})
        cf = CoupledRosslerParams(**{**asdict(actual), **counterfactual})
        f_act = partial(coupled_rossler_deriv, params=actual)
        f_cf = partial(coupled_rossler_deriv, params=cf)
        vals = [counterfactual_measure(integrate(f_act, x0, dt, horizon_steps - 1),
                                       integrate(f_cf, x0, dt, horizon_steps - 1), indices, horizon_steps)
                for x0 in starts]
        out.append(float(np.mean(vals)))
    return np.array(out)


def conditional_forecast(model: dmd.DmdModel, test_series: CausalTripleSet, initial_index: int = 0,
                         horizon: int | None = None) -> ForecastTrace:
    """Iterate the model, feeding predictions back into the identity block.

    The dictionary part is always evaluated at the true test values, while
    the identity part receives the previous prediction. Steps advance by the
    model's shift, so ``test_series`` must hold consecutive (stride-1) rows.
    """
    if test_series.shift_steps != model.shift_steps:
        raise ContractViolation("test series shift differs from the model shift")
    if not test_series.is_contiguous:
        raise ContractViolation("conditional forecasting needs a contiguous, time-ordered test series")
    s = model.shift_steps
    rows = np.arange(initial_index, len(test_series), s)
    if horizon is not None:
        rows = rows[:horizon]
    if rows.size == 0 or (horizon is not None and horizon < 1):
        raise InsufficientDataError("forecast horizon is empty")
    joint = model.kind == "joint"
    e_true = test_series.effect_now[rows]
    c_true = test_series.cause_now[rows] if joint else None
    # dictionary block only depends on true values, so it can be precomputed
    full = dmd._features(model.dictionary, model.kind, e_true, c_true)
    ne = model.effect_dim
    k_id, k_dict = model.matrix[:, :ne], model.matrix[:, ne:]
    driven = full[:, ne:] @ k_dict.T
    pred = np.empty_like(e_true)
    w = e_true[0]
    for k in range(rows.size):
        w = k_id @ w + driven[k]
        pred[k] = w
    ref = test_series.effect_shifted[rows]
    err = pred - ref
    return ForecastTrace(pred, ref, model.kind, float(np.mean(np.sum(err * err, axis=1))),
                         test_series.row_index[rows])


def plateau_onset(delta_ns, measures, fraction: float = 0.9, window: int = 3):
    """Smallest ``|delta_n|`` whose smoothed measure reaches ``fraction`` of the terminal value.

    ``delta_ns`` must share one sign; the terminal value is the one at the
    largest ``|delta_n|``. Smoothing is a centered running median over
    ``window`` points (shrinking at the ends).
    """
    d = np.asarray(delta_ns)
    m = np.asarray(measures, dtype=float)
    order = np.argsort(np.abs(d))
    d, m = np.abs(d[order]), m[order]
    half = window // 2
    smooth = np.array([np.median(m[max(0, i - half):i + half + 1]) for i in range(m.size)])
    target = fraction * smooth[-1]
    hit = np.flatnonzero(smooth >= target)
    return int(d[hit[0]])


def _run_cells(cells, fn, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def l96_cumulative_analysis(trajectory: Trajectory, target: int, shifts, dict_config: DictConfig = L96_DICT,
                            split_config: SplitConfig = SplitConfig(), delta_ns=None, n_permutations: int = 0,
                            cutoff: float = dmd.DEFAULT_CUTOFF, ridge_per_row: float = DEFAULT_RIDGE_PER_ROW,
                            null_mode: str = "rotate", threads: int = 1) -> list:
    """Cumulative-neighbour causal measures on the Lorenz 96 ring.

    For every shift and every ``delta_n`` (default ``±1 .. ±(N-1)``) the cause
    is :func:`cumulative_neighbor_sets` and the effect is the single target
    site. The marginal model is fitted once per shift and shared by all cells.
    Returns a flat list of :class:`CausalityResult` with ``delta_n`` set.
    """
    n = trajectory.dim
    if delta_ns is None:
        delta_ns = [k for k in range(-(n - 1), n) if k != 0]
    effect_idx = (int(target),)
    others = [i for i in range(n) if i != target]
    col_of = {site: j for j, site in enumerate(others)}
    traj_digest = array_digest(trajectory.states)
    fixed_bw = None
    if dict_config.bandwidth is not None:
        fixed_bw = np.broadcast_to(np.asarray(dict_config.bandwidth, dtype=float), (n,))

    results = []
    for shift in shifts:
        full_all = triples_from_indices(trajectory, effect_idx, others, shift)
        train_all, test_all = _split(full_all, split_config)
        ridge = ridge_per_row * len(train_all)
        if fixed_bw is None:
            bw_e, bw_others = default_bandwidth(train_all.effect_now), default_bandwidth(train_all.cause_now)
        else:
            bw_e, bw_others = fixed_bw[list(effect_idx)], fixed_bw[others]
        marginal = marginal_dictionary(n, effect_idx, bw_e, dict_config)
        marg_err = dmd.model_error(dmd.fit(train_all, marginal, "marginal", cutoff, ridge), test_all)

        def cell(dn, shift=shift, full_all=full_all, train_all=train_all, test_all=test_all, marginal=marginal,
                 marg_err=marg_err, bw_others=bw_others, ridge=ridge):
            cause_idx = cumulative_neighbor_sets(n, target, dn)
            cols = [col_of[site] for site in cause_idx]
            train = train_all.with_cause(train_all.cause_now[:, cols])
            test = test_all.with_cause(test_all.cause_now[:, cols])
            joint = joint_dictionary(marginal, n, cause_idx, bw_others[cols], dict_config)
            joint_err = dmd.model_error(dmd.fit(train, joint, "joint", cutoff, ridge), test)
            # seeded by the cause set, so +dn and -dn covering the same sites agree
            rng = np.random.default_rng(_child_seed(dict_config.seed, _NULL_TAG, shift, *cause_idx))
            full = full_all.with_cause(full_all.cause_now[:, cols])
            nulls = _joint_error_nulls(full, joint, split_config, marg_err, n_permutations, rng, null_mode,
                                       cutoff, ridge_per_row)
            fp = _fingerprint({"trajectory": traj_digest, "target": target, "shift": shift, "delta_n": dn,
                               "dict": asdict(dict_config), "split": asdict(split_config),
                               "n_permutations": n_permutations, "null_mode": null_mode, "cutoff": cutoff,
                               "ridge_per_row": ridge_per_row})
            return _result(marg_err, joint_err, shift, fp, nulls, effect_idx, cause_idx, dn)

        results.extend(_run_cells(delta_ns, cell, threads))
    return results


def l96_instantaneous_analysis(params: Lorenz96Params, fine_dt: float = 0.001, shift_steps: int = 1,
                               n_steps: int = 20_000, burn_in: int = 10_000, target: int | None = None,
                               dict_config: DictConfig = L96_DICT, split_config: SplitConfig = SplitConfig(),
                               delta_ns=None, seed: int = 0, n_permutations: int = 0,
                               ridge_per_row: float = DEFAULT_RIDGE_PER_ROW, threads: int = 1):
    """Cumulative analysis at a single tiny shift on a finely sampled orbit.

    Returns ``(results, caveat)``; see :data:`INSTANTANEOUS_CAVEAT`.
    """
    if int(shift_steps) != shift_steps or shift_steps < 1:
        raise ContractViolation("shift_steps must be >= 1")
    target = params.n_sites // 2 if target is None else target
    traj = simulate_lorenz96(params, fine_dt, n_steps, burn_in, seed)
    res = l96_cumulative_analysis(traj, target, [shift_steps], dict_config, split_config, delta_ns,
                                  n_permutations, ridge_per_row=ridge_per_row, threads=threads)
    return res, INSTANTANEOUS_CAVEAT
