"""Run-configuration files: loading, validation, and canonical hashing.

Configs are TOML (preferred) or JSON files holding one table per
subcommand plus shared ``[integrator]``, ``[readout]``, and ``[chain]``
tables.  Every artifact the command-line driver writes embeds the sha256
hash of the fully resolved configuration together with the master seed,
so identical configs reproduce identical artifacts and any parameter
change shows up in the hash.  Seeds always come from the config file or
the command line; nothing is ever seeded from the clock.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from typing import Any, Dict, Optional, Tuple, Union

import tomli

from .experiments import ExperimentConfig, SweepAxis
from .integrate import IntegratorConfig
from .presets import (
    AmplifierClass,
    PostAmpSection,
    PRESET_NAMES,
    QRCHyperparams,
    TaskISpec,
    TaskIISpec,
    preset,
)
from .readout import ReadoutConfig

__all__ = [
    "ConfigError",
    "load_config",
    "canonical_json",
    "config_hash",
    "integrator_from_dict",
    "readout_from_dict",
    "sweep_from_dict",
    "chain_from_dict",
    "experiment_from_config",
]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def load_config(path: str) -> Dict[str, Any]:
    """Parse a .toml or .json config file into a plain dict."""
    lower = str(path).lower()
    try:
        if lower.endswith(".toml"):
            with open(path, "rb") as fh:
                return tomli.load(fh)
        if lower.endswith(".json"):
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top level must be an object")
            return data
    except ConfigError:
        raise
    except (OSError, ValueError) as err:  # tomli errors subclass ValueError
        raise ConfigError(f"cannot read config {path}: {err}") from err
    raise ConfigError(f"config {path!r} must end in .toml or .json")


def _jsonify(obj: Any) -> Any:
    """Reduce to JSON-native types for hashing; floats stay exact via repr."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return repr(obj)
    if hasattr(obj, "item"):  # numpy scalar
        return _jsonify(obj.item())
    raise ConfigError(f"cannot hash config value of type {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, no whitespace, repr floats."""
    return json.dumps(_jsonify(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    """sha256 hex digest of the canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# Table -> dataclass builders


def _require_table(cfg: Dict[str, Any], name: str) -> Dict[str, Any]:
    table = cfg.get(name)
    if not isinstance(table, dict):
        raise ConfigError(f"config needs a [{name}] table")
    return dict(table)


def _optional_table(cfg: Dict[str, Any], name: str) -> Dict[str, Any]:
    table = cfg.get(name, {})
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(table)


def _reject_unknown(table: Dict[str, Any], name: str) -> None:
    if table:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(table)}")


def _coerce(table, key, kind, default=None):
    if key not in table:
        return default
    value = table.pop(key)
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{key} must be a {kind.__name__}, got {value!r}")


def integrator_from_dict(
    table: Dict[str, Any], default_seed: int = 0
) -> IntegratorConfig:
    table = dict(table)
    kwargs = {
        "dt": _coerce(table, "dt", float, 1e-3),
        "t_final": _coerce(table, "t_final", float, 10.0),
        "scheme": _coerce(table, "scheme", str, "euler_maruyama"),
        "seed": _coerce(table, "seed", int, int(default_seed)),
        "store_stride": _coerce(table, "store_stride", int, 1),
    }
    _reject_unknown(table, "integrator")
    try:
        return IntegratorConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(f"[integrator]: {err}") from err


def readout_from_dict(table: Dict[str, Any]) -> ReadoutConfig:
    table = dict(table)
    n_shots = _coerce(table, "n_shots", int, 1)
    kwargs = {
        "t0": _coerce(table, "t0", float, 0.0),
        "t_final": _coerce(table, "t_final", float, 10.0),
        "n_shots": n_shots,
        "mode": _coerce(
            table, "mode", str, "single_shot" if n_shots == 1 else "ensemble"
        ),
    }
    _reject_unknown(table, "readout")
    try:
        return ReadoutConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(f"[readout]: {err}") from err


def sweep_from_dict(table: Dict[str, Any]) -> SweepAxis:
    table = dict(table)
    name = _coerce(table, "name", str)
    values = table.pop("values", None)
    _reject_unknown(table, "experiment.sweep")
    if name is None or not isinstance(values, list) or not values:
        raise ConfigError("[experiment.sweep] needs name and a non-empty values list")
    try:
        return SweepAxis(name=name, values=tuple(float(v) for v in values))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[experiment.sweep]: {err}") from err


def _qrc_overrides(qrc: QRCHyperparams, table: Dict[str, Any]) -> QRCHyperparams:
    table = dict(table)
    kwargs = {}
    for key in ("lambda_bar", "delta_bar", "g_bar", "gamma_bar", "epsilon"):
        if key in table:
            kwargs[key] = _coerce(table, key, float)
    for key in ("n_nodes", "sampler_seed"):
        if key in table:
            kwargs[key] = _coerce(table, key, int)
    _reject_unknown(table, "chain.qrc")
    return replace(qrc, **kwargs)


def _task1_spec_from(table: Dict[str, Any], base: TaskISpec) -> TaskISpec:
    table = dict(table)
    qrc_table = table.pop("qrc", {})
    if not isinstance(qrc_table, dict):
        raise ConfigError("[chain.qrc] must be a table")
    kwargs = {}
    for key in ("kappa", "eta", "chi1", "chi2", "gamma_c"):
        if key in table:
            kwargs[key] = _coerce(table, key, float)
    _reject_unknown(table, "chain")
    return replace(base, qrc=_qrc_overrides(base.qrc, qrc_table), **kwargs)


def _task2_spec_from(table: Dict[str, Any], base: TaskIISpec) -> TaskIISpec:
    table = dict(table)
    kwargs = {}
    for key in (
        "kappa",
        "kappa1",
        "kappa2",
        "gamma_c",
        "qrc_lambda",
        "qrc_delta",
        "qrc_gamma",
    ):
        if key in table:
            kwargs[key] = _coerce(table, key, float)
    classes = table.pop("classes", None)
    if classes is not None:
        try:
            kwargs["classes"] = tuple(
                AmplifierClass(eta=float(c[0]), g1=float(c[1]), g12=float(c[2]))
                for c in classes
            )
        except (TypeError, ValueError, IndexError) as err:
            raise ConfigError(
                "chain.classes must be two [eta, g1, g12] triples"
            ) from err
        if len(kwargs["classes"]) != 2:
            raise ConfigError("chain.classes must list exactly two classes")
    pa_table = table.pop("pa", None)
    if pa_table is not None:
        if not isinstance(pa_table, dict):
            raise ConfigError("[chain.pa] must be a table")
        pa_table = dict(pa_table)
        pa_kwargs = {"g_pa": _coerce(pa_table, "g_pa", float)}
        if pa_kwargs["g_pa"] is None:
            raise ConfigError("[chain.pa] needs g_pa")
        for key in ("gamma_d1", "gamma_d2", "gamma_c"):
            if key in pa_table:
                pa_kwargs[key] = _coerce(pa_table, key, float)
        _reject_unknown(pa_table, "chain.pa")
        kwargs["pa"] = PostAmpSection(**pa_kwargs)
    _reject_unknown(table, "chain")
    try:
        return replace(base, **kwargs)
    except ValueError as err:
        raise ConfigError(f"[chain]: {err}") from err


def chain_from_dict(
    task: str, table: Dict[str, Any]
) -> Union[TaskISpec, TaskIISpec]:
    """Resolve the [chain] table: optional preset plus field overrides."""
    table = dict(table)
    preset_name = _coerce(table, "preset", str)
    if preset_name is not None:
        try:
            base = preset(preset_name)
        except KeyError as err:
            raise ConfigError(str(err)) from err
    else:
        base = TaskISpec() if task == "task1" else TaskIISpec()
    if task == "task1":
        if not isinstance(base, TaskISpec):
            raise ConfigError(
                f"preset {preset_name!r} is not a task1 chain; "
                f"available: {PRESET_NAMES}"
            )
        return _task1_spec_from(table, base)
    if not isinstance(base, TaskIISpec):
        raise ConfigError(
            f"preset {preset_name!r} is not a task2 chain; available: {PRESET_NAMES}"
        )
    return _task2_spec_from(table, base)


def experiment_from_config(
    cfg: Dict[str, Any],
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    preset_name: Optional[str] = None,
) -> Tuple[ExperimentConfig, Union[TaskISpec, TaskIISpec]]:
    """Build the experiment settings and chain spec from a parsed config.

    Args:
        cfg: parsed config dict with [experiment] and friends.
        seed: optional master-seed override (command-line flag).
        workers: optional worker-count override.
        preset_name: optional chain-preset override.

    Returns:
        (experiment config, task spec).  When [integrator] gives no seed
        the master seed is used, so one knob reseeds the whole run.
    """
    exp = _require_table(cfg, "experiment")
    task = _coerce(exp, "task", str)
    if task not in ("task1", "task2"):
        raise ConfigError(f"experiment.task must be 'task1' or 'task2', got {task!r}")
    master_seed = _coerce(exp, "master_seed", int, 0)
    if seed is not None:
        master_seed = int(seed)

    integrator_table = _optional_table(cfg, "integrator")
    if seed is not None:
        integrator_table.pop("seed", None)  # explicit flag re-seeds everything
    integrator = integrator_from_dict(integrator_table, default_seed=master_seed)
    readout = readout_from_dict(_optional_table(cfg, "readout"))

    sweep_table = exp.pop("sweep", None)
    sweep = None
    if sweep_table is not None:
        if not isinstance(sweep_table, dict):
            raise ConfigError("[experiment.sweep] must be a table")
        sweep = sweep_from_dict(sweep_table)

    chain_table = _optional_table(cfg, "chain")
    if preset_name is not None:
        chain_table["preset"] = preset_name
    spec = chain_from_dict(task, chain_table)

    shot_counts = exp.pop("shot_counts", [1])
    if not isinstance(shot_counts, list):
        raise ConfigError("experiment.shot_counts must be a list of ints")
    kwargs = {
        "task": task,
        "integrator": integrator,
        "readout": readout,
        "q_train": _coerce(exp, "q_train", int, 100),
        "q_test": _coerce(exp, "q_test", int, 200),
        "shot_counts": tuple(int(n) for n in shot_counts),
        "train_phases": _coerce(exp, "train_phases", bool, task == "task1"),
        "fit_biases": _coerce(exp, "fit_biases", bool, None),
        "compare_linear": _coerce(exp, "compare_linear", bool, False),
        "compare_means_baseline": _coerce(
            exp, "compare_means_baseline", bool, False
        ),
        "sweep": sweep,
        "pa_gain": _coerce(exp, "pa_gain", float, None),
        "master_seed": master_seed,
        "workers": _coerce(exp, "workers", int, 0),
    }
    if workers is not None:
        kwargs["workers"] = int(workers)
    _reject_unknown(exp, "experiment")
    try:
        return ExperimentConfig(**kwargs), spec
    except ValueError as err:
        raise ConfigError(f"[experiment]: {err}") from err
