"""Command-line front end: one experiment per invocation, driven by a JSON config.

Every run writes its artifacts plus ``manifest.json`` into ``--out``. The
manifest echoes the resolved config, its SHA-256 fingerprint and the SHA-256
of every artifact, so ``replay`` can re-run the experiment and verify it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import causality as kc
from . import config as kcfg
from . import dmd, io, rff
from .dynamics import (CoupledRosslerParams, Lorenz96Params, front_arrival_times, perturbation_experiment,
                       simulate_lorenz96, simulate_rossler)
from .errors import KoopcauseError
from .partitions import ComponentPartition, train_test_split, triples_from_indices

__all__ = ["main", "run", "replay"]

RUN_COMMANDS = kcfg.ANALYSES
RESULT_COLUMNS = ["experiment_id", "shift", "delta_n", "seed", "marginal_error", "joint_error", "measure",
                  "null_p95"]


def _fmt(value) -> str:
    """Round-trip decimal text: ``repr`` for floats, ``str`` otherwise, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _simulate(cfg: dict):
    s, i = cfg["system"], cfg["integration"]
    common = dict(dt=i["dt"], n_steps=i["n_steps"], burn_in=i["burn_in"], seed=i["seed"], ic_box=tuple(i["ic_box"]))
    if s["kind"] == "rossler":
        return simulate_rossler(_rossler_params(s), **common)
    return simulate_lorenz96(_l96_params(s), **common)


def _rossler_params(s):
    return CoupledRosslerParams(**{k: v for k, v in s.items() if k != "kind"})


def _l96_params(s):
    return Lorenz96Params(s["n_sites"], s["forcing"])


def _dict_config(cfg):
    d = cfg["dictionary"]
    bw = d["bandwidth"]
    return kc.DictConfig(d["m_features"], tuple(bw) if isinstance(bw, list) else bw, d["seed"], d["dim_scaling"])


def _split_config(cfg):
    return kc.SplitConfig(**cfg["split"])


def _partition(cfg, n_dims):
    p = cfg["partition"]
    return ComponentPartition(p["components"], n_dims), p["effect"], p["cause"]


def _result_rows(cfg, results):
    return [[cfg["experiment_id"], r.shift_steps, r.delta_n, cfg["seed"], r.marginal_error, r.joint_error,
             r.measure, r.null_p95] for r in results]


def _fit_kwargs(cfg):
    return {"cutoff": cfg["fit"]["cutoff"], "ridge_per_row": cfg["fit"]["ridge_per_row"]}


def _null_kwargs(a):
    return {"n_permutations": a["n_permutations"], "null_seed": a["null_seed"], "null_mode": a["null_mode"]}


def _save_trajectory(cfg, traj, out: Path, notes: dict):
    if cfg["output"]["save_trajectory"]:
        io.write_trajectory_bin(out / "trajectory.bin", traj)
        notes["trajectory_t0"] = traj.t0


def _run_simulate(cfg, out, threads, notes):
    traj = _simulate(cfg)
    io.write_trajectory_csv(out / "trajectory.csv", traj)
    _save_trajectory(cfg, traj, out, notes)


def _run_measure(cfg, out, threads, notes):
    traj = _simulate(cfg)
    _save_trajectory(cfg, traj, out, notes)
    part, effect, cause = _partition(cfg, traj.dim)
    a = cfg["analysis"]
    res = kc.causal_measure(traj, part, effect, cause, a["shift"], _dict_config(cfg), _split_config(cfg),
                            **_null_kwargs(a), **_fit_kwargs(cfg))
    _write_csv(out / "results.csv", RESULT_COLUMNS, _result_rows(cfg, [res]))
    if cfg["output"]["save_models"]:
        marg, joint, _, _ = kc.fit_marginal_joint(traj, part, effect, cause, a["shift"], _dict_config(cfg),
                                                  _split_config(cfg), **_fit_kwargs(cfg))
        _save_models(out, {"marginal": marg, "joint": joint})


def _save_models(out, models):
    for name, model in models.items():
        rff.save_dictionary(out / f"{name}.kcrff", model.dictionary)
        dmd.save_model(out / f"{name}.kcdmd", model)


def _run_sweep(cfg, out, threads, notes):
    traj = _simulate(cfg)
    _save_trajectory(cfg, traj, out, notes)
    part, effect, cause = _partition(cfg, traj.dim)
    a = cfg["analysis"]
    res = kc.causal_measure_sweep(traj, part, effect, cause, a["shifts"], _dict_config(cfg), _split_config(cfg),
                                  **_null_kwargs(a), **_fit_kwargs(cfg))
    _write_csv(out / "results.csv", RESULT_COLUMNS, _result_rows(cfg, res))


def _run_forecast(cfg, out, threads, notes):
    traj = _simulate(cfg)
    _save_trajectory(cfg, traj, out, notes)
    part, effect, cause = _partition(cfg, traj.dim)
    a = cfg["analysis"]
    marg, joint, _, _ = kc.fit_marginal_joint(traj, part, effect, cause, a["shift"], _dict_config(cfg),
                                              _split_config(cfg), **_fit_kwargs(cfg))
    # forecasts need consecutive rows, so they run on the contiguous tail
    full = triples_from_indices(traj, part[effect], part[cause], a["shift"])
    _, test = train_test_split(full, cfg["split"]["train_fraction"], "contiguous")
    notes["forecast_rows"] = "contiguous tail after the train fraction"
    traces = {m.kind: kc.conditional_forecast(m, test, a["initial_index"], a["horizon"]) for m in (marg, joint)}
    n_e = len(part[effect])
    header = ["step", "row_index", "kind"] + [f"pred_{i}" for i in part[effect]] + [f"ref_{i}" for i in part[effect]]
    rows = []
    for kind, tr in traces.items():
        for k in range(tr.predicted.shape[0]):
            rows.append([k + 1, int(tr.row_index[k]), kind, *map(float, tr.predicted[k, :n_e]),
                         *map(float, tr.reference[k, :n_e])])
    _write_csv(out / "forecast.csv", header, rows)
    _write_csv(out / "forecast_summary.csv", ["experiment_id", "effect", "cause", "shift", "seed", "kind", "mse"],
               [[cfg["experiment_id"], effect, cause, a["shift"], cfg["seed"], kind, tr.mse]
                for kind, tr in traces.items()])
    if cfg["output"]["save_models"]:
        _save_models(out, {"marginal": marg, "joint": joint})


def _run_counterfactual(cfg, out, threads, notes):
    a, i = cfg["analysis"], cfg["integration"]
    base = _rossler_params(cfg["system"])
    horizon = a["horizon_steps"]
    if horizon is None:
        free = CoupledRosslerParams(**{**{k: v for k, v in cfg["system"].items() if k != "kind"}, "c1": 0.0,
                                       "c2": 0.0})
        horizon = kc.default_horizon_steps(free, i["dt"], seed=i["seed"])
        notes["horizon_steps"] = f"{kc.HORIZON_FRACTION} x estimated Lyapunov time of the uncoupled system"
    vals = kc.counterfactual_coupling_sweep(a["couplings"], a["vary"], base, a.get("counterfactual"),
                                            a["indices"], horizon, a["n_ensemble"], i["dt"], i["burn_in"],
                                            i["seed"], tuple(i["ic_box"]))
    _write_csv(out / "counterfactual.csv",
               ["experiment_id", "vary", "coupling", "seed", "horizon_steps", "n_ensemble", "measure"],
               [[cfg["experiment_id"], a["vary"], float(c), cfg["seed"], horizon, a["n_ensemble"], float(v)]
                for c, v in zip(a["couplings"], vals)])


def _plateau_rows(cfg, results):
    rows = []
    for shift in sorted({r.shift_steps for r in results}):
        cells = [r for r in results if r.shift_steps == shift]
        for direction, sign in (("counterclockwise", -1), ("clockwise", 1)):
            side = sorted((r for r in cells if np.sign(r.delta_n) == sign), key=lambda r: abs(r.delta_n))
            if not side:
                continue
            onset = kc.plateau_onset([r.delta_n for r in side], [r.measure for r in side])
            rows.append([cfg["experiment_id"], shift, direction, onset, side[-1].measure])
    return rows


def _run_l96(cfg, out, threads, notes, traj, shifts):
    a = cfg["analysis"]
    res = kc.l96_cumulative_analysis(traj, a["target"], shifts, _dict_config(cfg), _split_config(cfg),
                                     a.get("delta_ns"), a["n_permutations"], null_mode=a["null_mode"],
                                     threads=threads, **_fit_kwargs(cfg))
    _write_csv(out / "results.csv", RESULT_COLUMNS, _result_rows(cfg, res))
    _write_csv(out / "plateau.csv", ["experiment_id", "shift", "direction", "onset_abs_delta_n", "terminal_measure"],
               _plateau_rows(cfg, res))


def _run_l96_cumulative(cfg, out, threads, notes):
    traj = _simulate(cfg)
    _save_trajectory(cfg, traj, out, notes)
    _run_l96(cfg, out, threads, notes, traj, cfg["analysis"]["shifts"])


def _run_l96_instant(cfg, out, threads, notes):
    fine = {**cfg, "integration": {**cfg["integration"], "dt": cfg["analysis"]["fine_dt"]}}
    traj = _simulate(fine)
    _save_trajectory(cfg, traj, out, notes)
    notes["caveat"] = kc.INSTANTANEOUS_CAVEAT
    _run_l96(cfg, out, threads, notes, traj, [cfg["analysis"]["shift"]])


def _run_perturbation(cfg, out, threads, notes):
    a, i = cfg["analysis"], cfg["integration"]
    field = perturbation_experiment(_l96_params(cfg["system"]), i["dt"], i["n_steps"], i["burn_in"], a["site"],
                                    a["epsilon"], i["seed"], tuple(i["ic_box"]))
    n = field.shape[1]
    _write_csv(out / "field.csv", ["step"] + [f"site_{k}" for k in range(n)],
               ([k, *map(float, row)] for k, row in enumerate(field)))
    times = front_arrival_times(field, a["site"], a["offsets"], a["threshold"])
    _write_csv(out / "arrivals.csv", ["experiment_id", "offset", "site", "arrival_step"],
               [[cfg["experiment_id"], k, (a["site"] + k) % n, None if np.isinf(t) else int(t)]
                for k, t in times.items()])


_RUNNERS = {
    "simulate": _run_simulate,
    "measure": _run_measure,
    "sweep": _run_sweep,
    "forecast": _run_forecast,
    "counterfactual": _run_counterfactual,
    "l96-cumulative": _run_l96_cumulative,
    "l96-instant": _run_l96_instant,
    "perturbation": _run_perturbation,
}


def run(command: str, raw_config: dict, out, seed: int | None = None, threads: int = 1) -> dict:
    """Validate, resolve and run one experiment; returns the manifest written to ``out``.

    ``command`` must equal the config's analysis kind, except ``simulate``,
    which runs the integration of any config on its own.
    """
    violations = kcfg.validate_config(raw_config)
    if violations:
        raise kcfg.ConfigError(violations)
    cfg = kcfg.resolve(raw_config, seed)
    if command != "simulate" and command != cfg["analysis"]["kind"]:
        raise kcfg.ConfigError([f"/analysis/kind: config runs '{cfg['analysis']['kind']}', "
                                f"not '{command}'"])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    notes = {}
    _RUNNERS[command](cfg, out, max(1, int(threads)), notes)
    files = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "koopcause_version": __version__,
        "command": command,
        "config": cfg,
        "fingerprint": kcfg.fingerprint(cfg),
        "overrides": {"seed": seed, "threads": threads},
        "notes": notes,
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def replay(manifest_path, out=None) -> list:
    """Re-run the experiment recorded in a manifest and compare every artifact.

    Returns a list of mismatch descriptions; empty means byte-identical.
    """
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = manifest["config"]
    problems = []
    if kcfg.fingerprint(cfg) != manifest["fingerprint"]:
        problems.append("fingerprint: recorded fingerprint does not match the recorded config")
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(out) if out is not None else Path(tmp)
        fresh = run(manifest["command"], cfg, target, threads=manifest["overrides"].get("threads", 1))
    if fresh["fingerprint"] != manifest["fingerprint"]:
        problems.append("fingerprint: re-resolved config differs from the recorded one")
    for name in sorted(set(manifest["files"]) | set(fresh["files"])):
        old, new = manifest["files"].get(name), fresh["files"].get(name)
        if old != new:
            problems.append(f"{name}: sha256 {old} recorded, {new} replayed")
    return problems


def _load(args):
    if (args.config is None) == (args.recipe is None):
        raise kcfg.ConfigError(["exactly one of --config or --recipe is required"])
    return kcfg.load_recipe(args.recipe) if args.recipe else kcfg.load_config(args.config)


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _parser():
    p = argparse.ArgumentParser(prog="koopcause", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*RUN_COMMANDS, "validate", "replay"):
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH", help="JSON config (for replay: a manifest.json)")
        s.add_argument("--recipe", metavar="NAME", help=f"bundled recipe: {', '.join(kcfg.recipe_names())}")
        s.add_argument("--out", metavar="DIR", help="output directory")
        s.add_argument("--seed", type=_seed, metavar="U64", help="override the master seed")
        s.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for analysis cells")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "replay":
            if args.config is None:
                raise kcfg.ConfigError(["replay needs --config pointing at a manifest.json"])
            problems = replay(args.config, args.out)
            for line in problems:
                print(line, file=sys.stderr)
            print("replay: identical" if not problems else f"replay: {len(problems)} mismatches")
            return 0 if not problems else 1
        raw = _load(args)
        if args.command == "validate":
            violations = kcfg.validate_config(raw)
            for line in violations:
                print(line)
            print("valid" if not violations else f"{len(violations)} violations")
            return 0 if not violations else 1
        if args.out is None:
            raise kcfg.ConfigError(["--out is required"])
        manifest = run(args.command, raw, args.out, args.seed, args.threads)
        print(f"{args.command}: wrote {len(manifest['files'])} files to {args.out} "
              f"(fingerprint {manifest['fingerprint'][:16]})")
        return 0
    except kcfg.ConfigError as exc:
        for line in exc.violations:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except KoopcauseError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
