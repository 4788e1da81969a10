"""Config-driven experiment runner.

Commands
--------
``qfim``            information matrices and singularity diagnostics at the truth
``phase-diagram``   determinant (optionally Bayesian variance) over a parameter scan
``bayes-run``       seeded measurement simulation with posterior snapshots and traces
``transform-scan``  precision scaling of a transformed effective coordinate

Each command takes ``--config <path>`` (YAML, strictly validated: unknown
keys are errors), ``--out <dir>``, ``--seed <u64>``, ``--threads <n>``.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
Outputs embed the resolved config; re-running a command reproduces its
files byte-for-byte except for the ``timestamp`` metadata field in JSON.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .bayes import (
    RNG_ALGORITHM,
    CoordinateMap,
    GridAxis,
    MeasurementRecord,
    OutcomeModel,
    PosteriorGrid,
    RecipeKind,
    StateRecipe,
    bayes_mean_and_variance,
    born_probabilities,
    default_povm,
    effective_crb_scan,
    hyperbolic_product_map,
    hyperbolic_ratio_map,
    model_bundle,
    model_qfim,
    posterior_update,
    probability_table,
    ridge_extract,
    sample_batches,
    uniform_prior,
)
from .errors import ConfigError, MetrosymError, NumericalError
from .fisher import cfim, pseudoinverse, qfim_spectrum, sld_commutator_expectation
from .models import ModelKind, ModelSpec, ObservableName, ParameterPoint

ENV_OUT = "METROSYM_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_SCHEMA = {
    "model": {"kind", "n_sites", "free", "fixed"},
    "truth": None,
    "state": {"recipe", "kept_sites"},
    "observable": None,
    "grid": {"mins", "maxs", "points"},
    "prior": {"kind"},
    "run": {"m_total", "batch_size", "seed", "checkpoints", "posterior_csv"},
    "scan": {"axes", "mins", "maxs", "points", "with_bayes"},
    "transform": {"name", "numerator", "m_schedule", "u_axis", "v_axis"},
    "output": {"directory"},
}
_AXIS_KEYS = {"min", "max", "points"}


@dataclass(frozen=True)
class ExperimentConfig:
    spec: ModelSpec
    truth: ParameterPoint
    recipe: StateRecipe
    observable_name: ObservableName
    grid_axes: tuple
    m_total: int
    batch_size: int
    seed: int
    checkpoints: tuple
    posterior_csv: bool
    scan: Optional[dict]
    transform: Optional[dict]
    output_dir: Optional[str]
    resolved: dict                      # plain dict for provenance embedding


def _check_keys(section: str, data: dict, allowed: set):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"config: unknown key {section}.{key}")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: YAML parse failure in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    for key in raw:
        if key not in _SCHEMA:
            raise ConfigError(f"config: unknown top-level key {key!r}")
    for section, allowed in _SCHEMA.items():
        if allowed is not None and section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"config: section {section!r} must be a mapping")
            _check_keys(section, raw[section], allowed)

    for required in ("model", "truth", "observable", "grid", "run"):
        if required not in raw:
            raise ConfigError(f"config: missing required section {required!r}")

    model = raw["model"]
    try:
        kind = ModelKind(model["kind"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config: model.kind invalid: {exc}") from exc
    spec = ModelSpec(
        kind=kind,
        n_sites=int(model.get("n_sites", 0)),
        fixed_params={str(k): float(v) for k, v in dict(model.get("fixed", {})).items()},
        free_params=tuple(str(x) for x in model.get("free", ())),
    )

    truth_vals = raw["truth"]
    if not isinstance(truth_vals, (list, tuple)) or len(truth_vals) != len(spec.free_params):
        raise ConfigError(
            f"config: truth must list {len(spec.free_params)} values for free parameters {list(spec.free_params)}"
        )
    truth = ParameterPoint(tuple(float(v) for v in truth_vals))

    state = raw.get("state", {"recipe": "ground"})
    recipe_name = str(state.get("recipe", "ground")).upper()
    try:
        recipe_kind = RecipeKind(recipe_name)
    except ValueError as exc:
        raise ConfigError(f"config: state.recipe invalid: {recipe_name!r}") from exc
    recipe = StateRecipe(recipe_kind, tuple(int(s) for s in state.get("kept_sites", ())))

    try:
        observable_name = ObservableName(str(raw["observable"]))
    except ValueError as exc:
        raise ConfigError(f"config: observable invalid: {raw['observable']!r}") from exc

    grid = raw["grid"]
    try:
        mins = [float(v) for v in grid["mins"]]
        maxs = [float(v) for v in grid["maxs"]]
        points = [int(v) for v in grid["points"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config: grid section invalid: {exc}") from exc
    if not len(mins) == len(maxs) == len(points) == len(spec.free_params):
        raise ConfigError("config: grid axes must match the number of free parameters")
    axes = tuple(GridAxis(lo, hi, n) for lo, hi, n in zip(mins, maxs, points))
    for lo, hi, val, name in zip(mins, maxs, truth.values, spec.free_params):
        if not (lo <= val <= hi):
            raise ConfigError(f"config: grid.{name} bounds [{lo}, {hi}] do not contain truth {val}")

    prior = raw.get("prior", {"kind": "uniform"})
    if str(prior.get("kind", "uniform")) != "uniform":
        raise ConfigError(f"config: prior.kind {prior.get('kind')!r} unsupported (uniform only)")

    run = raw["run"]
    m_total = int(run.get("m_total", 0))
    batch_size = int(run.get("batch_size", 100))
    seed = int(run.get("seed", 0))
    if m_total < batch_size or batch_size < 1:
        raise ConfigError(f"config: need m_total >= batch_size >= 1, got {m_total}, {batch_size}")
    checkpoints = tuple(int(c) for c in run.get("checkpoints", (m_total,)))
    for c in checkpoints:
        if not (1 <= c <= m_total):
            raise ConfigError(f"config: checkpoint {c} outside [1, {m_total}]")

    scan = raw.get("scan")
    if scan is not None:
        for field_name in ("axes", "mins", "maxs", "points"):
            if field_name not in scan:
                raise ConfigError(f"config: scan.{field_name} missing")
        if len(scan["axes"]) != 2:
            raise ConfigError("config: scan.axes must name exactly two parameters")

    transform = raw.get("transform")
    if transform is not None:
        if transform.get("name") not in ("hyperbolic_ratio", "hyperbolic_product"):
            raise ConfigError(f"config: transform.name invalid: {transform.get('name')!r}")
        for axis_key in ("u_axis", "v_axis"):
            axis = transform.get(axis_key)
            if not isinstance(axis, dict):
                raise ConfigError(f"config: transform.{axis_key} missing")
            _check_keys(f"transform.{axis_key}", axis, _AXIS_KEYS)

    output_dir = None
    if "output" in raw:
        output_dir = str(raw["output"].get("directory")) if raw["output"].get("directory") else None

    return ExperimentConfig(
        spec=spec,
        truth=truth,
        recipe=recipe,
        observable_name=observable_name,
        grid_axes=axes,
        m_total=m_total,
        batch_size=batch_size,
        seed=seed,
        checkpoints=checkpoints,
        posterior_csv=bool(run.get("posterior_csv", False)),
        scan=scan,
        transform=transform,
        output_dir=output_dir,
        resolved=raw,
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _config_digest(cfg: ExperimentConfig, seed: int) -> str:
    blob = json.dumps(cfg.resolved, sort_keys=True) + f"|seed={seed}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _metadata(cfg: ExperimentConfig, seed: int) -> dict:
    return {
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seed": int(seed),
        "config": cfg.resolved,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path: str, header: str, rows, cfg: ExperimentConfig, seed: int):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# metrosym {__version__} rng={RNG_ALGORITHM}\n")
        fh.write(f"# config_sha256={_config_digest(cfg, seed)} seed={seed}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _posterior_json(posterior: PosteriorGrid, cfg: ExperimentConfig, seed: int,
                    labels: Sequence[str]) -> dict:
    return {
        "metadata": _metadata(cfg, seed),
        "axes": [
            {"name": name, "min": ax.minimum, "max": ax.maximum, "points": ax.n_points}
            for name, ax in zip(labels, posterior.axes)
        ],
        "log_weights": [float(x) for x in posterior.log_weights.reshape(-1)],
        "log_norm": float(posterior.log_norm),
    }


def _outcome_model(cfg: ExperimentConfig) -> OutcomeModel:
    povm = default_povm(cfg.spec, cfg.observable_name, cfg.recipe)
    return OutcomeModel(cfg.spec, cfg.recipe, povm)


def _coordinate_map(cfg: ExperimentConfig) -> CoordinateMap:
    transform = cfg.transform
    numerator = transform.get("numerator", cfg.spec.free_params[0])
    if numerator not in cfg.spec.free_params:
        raise ConfigError(f"config: transform.numerator {numerator!r} is not a free parameter")
    axis = cfg.spec.free_params.index(numerator)
    if transform["name"] == "hyperbolic_ratio":
        return hyperbolic_ratio_map(axis)
    return hyperbolic_product_map(axis)


def _axis_from(section: dict, name: str) -> GridAxis:
    try:
        return GridAxis(float(section["min"]), float(section["max"]), int(section["points"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config: transform.{name} invalid: {exc}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_qfim(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int) -> int:
    model = _outcome_model(cfg)
    bundle = model_bundle(model, cfg.truth)
    if cfg.recipe.kind is RecipeKind.GROUND:
        from .fisher import qfim_pure

        quantum = qfim_pure(bundle.rho, bundle)
    else:
        from .fisher import qfim_mixed

        quantum = qfim_mixed(bundle)
    from .bayes import born_gradients

    probs, grads = born_gradients(bundle, model.povm)
    classical = cfim(probs, grads, labels=cfg.spec.free_params)
    spectrum = qfim_spectrum(quantum)
    pinv = pseudoinverse(quantum)
    d = quantum.dim
    commutators = {}
    for i in range(d):
        for j in range(i + 1, d):
            val = sld_commutator_expectation(bundle, i, j)
            key = f"{cfg.spec.free_params[i]},{cfg.spec.free_params[j]}"
            commutators[key] = {"re": float(val.real), "im": float(val.imag)}
    report = {
        "metadata": _metadata(cfg, seed),
        "qfim": quantum.to_json_dict(),
        "cfim": classical.to_json_dict(),
        "spectrum": spectrum.to_json_dict(),
        "determinant": quantum.determinant,
        "singular": bool(spectrum.rank < d),
        "pseudoinverse": [float(x) for x in pinv.reshape(-1)],
        "sld_commutator": commutators,
        "born_probabilities": [float(x) for x in probs],
    }
    _write_json(os.path.join(out_dir, "qfim.json"), report)
    return EXIT_OK


def _scan_model_at(cfg: ExperimentConfig, scan_names: Sequence[str], values: Sequence[float]):
    """Model spec/point with the scanned parameters overridden."""
    fixed = dict(cfg.spec.fixed_params)
    truth_vals = list(cfg.truth.values)
    for name, value in zip(scan_names, values):
        if name in cfg.spec.free_params:
            truth_vals[cfg.spec.free_params.index(name)] = float(value)
        else:
            fixed[name] = float(value)
    spec = ModelSpec(cfg.spec.kind, cfg.spec.n_sites, fixed, cfg.spec.free_params)
    return spec, ParameterPoint(tuple(truth_vals))


def cmd_phase_diagram(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int) -> int:
    if cfg.scan is None:
        raise ConfigError("config: phase-diagram requires a scan section")
    scan = cfg.scan
    names = [str(x) for x in scan["axes"]]
    ax0 = np.linspace(float(scan["mins"][0]), float(scan["maxs"][0]), int(scan["points"][0]))
    ax1 = np.linspace(float(scan["mins"][1]), float(scan["maxs"][1]), int(scan["points"][1]))
    with_bayes = bool(scan.get("with_bayes", False))

    table = None
    prior = None
    base_model = _outcome_model(cfg)
    if with_bayes:
        table = probability_table(base_model, cfg.grid_axes, threads=threads)
        prior = uniform_prior(cfg.grid_axes)

    rows = []
    rng_root = np.random.default_rng(seed)
    for x0 in ax0:
        for x1 in ax1:
            spec, point = _scan_model_at(cfg, names, (x0, x1))
            model = OutcomeModel(spec, cfg.recipe, base_model.povm)
            try:
                quantum = model_qfim(model, point)
                det = quantum.determinant
            except NumericalError:
                det = float("nan")
            row = [float(x0), float(x1), det]
            if with_bayes:
                cell_seed = int(rng_root.integers(0, 2**63 - 1))
                p_true = born_probabilities(model, point)
                records = sample_batches(p_true, cfg.m_total, cfg.batch_size, cell_seed)
                posterior = posterior_update(prior, MeasurementRecord.merged(records), table=table)
                row.append(bayes_mean_and_variance(posterior).variances[0])
            rows.append(row)

    header = f"{names[0]},{names[1]},det_qfim" + (",var_bayes" if with_bayes else "")
    _write_csv(os.path.join(out_dir, "phase_diagram.csv"), header, rows, cfg, seed)
    return EXIT_OK


def cmd_bayes_run(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int) -> int:
    model = _outcome_model(cfg)
    table = probability_table(model, cfg.grid_axes, threads=threads)
    p_true = born_probabilities(model, cfg.truth)
    records = sample_batches(p_true, cfg.m_total, cfg.batch_size, seed)

    labels = cfg.spec.free_params
    posterior = uniform_prior(cfg.grid_axes)
    trace_rows = []
    seen = 0
    checkpoints = set(cfg.checkpoints)
    for record in records:
        posterior = posterior_update(posterior, record, table=table)
        seen += record.total
        moments = bayes_mean_and_variance(posterior)
        trace_rows.append([
            seen,
            moments.means[0], moments.variances[0],
            moments.means[1], moments.variances[1],
            moments.covariance[0, 1],
        ])
        if seen in checkpoints:
            snap = _posterior_json(posterior, cfg, seed, labels)
            _write_json(os.path.join(out_dir, f"posterior_{seen:07d}.json"), snap)
            if cfg.posterior_csv:
                dens = posterior.densities
                csv_rows = []
                vals0 = posterior.axes[0].values
                vals1 = posterior.axes[1].values
                for i, x0 in enumerate(vals0):
                    for j, x1 in enumerate(vals1):
                        csv_rows.append([x0, x1, dens[i, j]])
                _write_csv(os.path.join(out_dir, f"posterior_{seen:07d}.csv"),
                           f"{labels[0]},{labels[1]},density", csv_rows, cfg, seed)

    _write_csv(os.path.join(out_dir, "estimator_trace.csv"),
               "M,mean_1,var_1,mean_2,var_2,cov_12", trace_rows, cfg, seed)

    merged = MeasurementRecord.merged(records)
    _write_json(os.path.join(out_dir, "record.json"),
                {"metadata": _metadata(cfg, seed),
                 **merged.to_json_dict(model.povm.outcome_labels)})

    quantum = model_qfim(model, cfg.truth)
    spectrum = qfim_spectrum(quantum)
    if spectrum.rank < quantum.dim:
        ridge = ridge_extract(posterior, sweep_axis=0)
        _write_csv(os.path.join(out_dir, "ridge.csv"),
                   f"{labels[0]},{labels[1]}_argmax", ridge, cfg, seed)
    return EXIT_OK


def cmd_transform_scan(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int) -> int:
    if cfg.transform is None:
        raise ConfigError("config: transform-scan requires a transform section")
    model = _outcome_model(cfg)
    cmap = _coordinate_map(cfg)
    u_axis = _axis_from(cfg.transform["u_axis"], "u_axis")
    v_axis = _axis_from(cfg.transform["v_axis"], "v_axis")
    schedule = [int(m) for m in cfg.transform.get("m_schedule", (cfg.m_total,))]
    for m in schedule:
        if m < 1:
            raise ConfigError(f"config: transform.m_schedule entry {m} invalid")
    seeds = [int(s) for s in np.random.default_rng(seed).integers(0, 2**63 - 1, size=len(schedule))]
    table = probability_table(model, cfg.grid_axes, threads=threads)
    result = effective_crb_scan(
        model, cmap, cfg.truth, schedule, seeds,
        source_axes=cfg.grid_axes,
        target_axes=(u_axis, v_axis),
        batch_size=cfg.batch_size,
        table=table,
    )
    _write_csv(os.path.join(out_dir, "transform_scan.csv"), "M,inv_var,crb_reference",
               [[r.m, r.inv_variance, r.crb_reference] for r in result.rows], cfg, seed)
    snap = _posterior_json(result.final_posterior, cfg, seed, ("u", "v"))
    _write_json(os.path.join(out_dir, f"posterior_transformed_{schedule[-1]:07d}.json"), snap)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "qfim": cmd_qfim,
    "phase-diagram": cmd_phase_diagram,
    "bayes-run": cmd_bayes_run,
    "transform-scan": cmd_transform_scan,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metrosym",
                                     description="multi-parameter estimation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--out", default=None, help="output directory (default $METROSYM_OUT or cwd)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="grid evaluation workers")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    seed = cfg.seed if args.seed is None else int(args.seed)
    out_dir = args.out or cfg.output_dir or os.environ.get(ENV_OUT) or "."
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"i/o error: cannot create {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        return _COMMANDS[args.command](cfg, out_dir, seed, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MetrosymError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
