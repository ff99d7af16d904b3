"""Experiment configuration: strict YAML in, canonical dict out.

Unknown keys are rejected with their full path (a typo should fail loudly,
not silently fall back to a default).  The canonical dict feeds both the
round-trip serializer and the per-run content hash, so two configs that
resolve to the same runs hash identically regardless of key order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import yaml

from .schedules import PowerSchedule

_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def _get(d: dict, key: str, path: str, typ, default=_MASK):
    if key not in d:
        if default is not _MASK:
            return default
        raise ConfigError(f"{path}: missing required key {key!r}")
    val = d[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool):
        raise ConfigError(f"{path}.{key}: expected {typ.__name__}, got {type(val).__name__}")
    return val


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    dim: int
    seed: int = 0
    spectrum: tuple[float, float] = (0.5, 1.5)
    n_samples: int = 40
    ridge: float = 0.1


@dataclass(frozen=True)
class BiasVariant:
    """One oracle-bias arm of the sweep; schedule None means unbiased."""

    label: str
    schedule: PowerSchedule | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: ProblemSpec
    n_steps: int
    seeds: tuple[int, ...]
    master_seed: int
    allow_inadmissible: bool
    out_dir: str | None
    jobs: int | None
    step: PowerSchedule
    lam: PowerSchedule
    precond_kinds: tuple[str, ...]
    delta: float
    rho: float
    rho1: float
    rho2: float
    clip: PowerSchedule | None
    oracle_kind: str
    sigma: float
    bias_variants: tuple[BiasVariant, ...]
    direction: str
    tau: float
    mixing: float
    inner_samples: int
    window: tuple[int, int]
    field: str
    iterate_kind: str


def _parse_schedule(
    d: dict,
    path: str,
    directions=("decreasing",),
    default_direction="decreasing",
    defaults: tuple[float, float] | None = None,
) -> PowerSchedule:
    _check_keys(d, {"coeff", "exponent", "direction"}, path)
    direction = _get(d, "direction", path, str, default_direction)
    if direction not in directions:
        raise ConfigError(f"{path}.direction: must be one of {directions}, got {direction!r}")
    if defaults is None:
        coeff = _get(d, "coeff", path, float)
        exponent = _get(d, "exponent", path, float)
    else:
        coeff = _get(d, "coeff", path, float, defaults[0])
        exponent = _get(d, "exponent", path, float, defaults[1])
    try:
        return PowerSchedule(coeff=coeff, exponent=exponent, direction=direction)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_problem(d: dict, path: str) -> ProblemSpec:
    _check_keys(d, {"kind", "dim", "seed", "spectrum", "n_samples", "ridge"}, path)
    kind = _get(d, "kind", path, str)
    if kind not in ("quadratic", "logistic"):
        raise ConfigError(f"{path}.kind: must be 'quadratic' or 'logistic', got {kind!r}")
    spectrum = d.get("spectrum", [0.5, 1.5])
    if not (isinstance(spectrum, list) and len(spectrum) == 2):
        raise ConfigError(f"{path}.spectrum: expected [low, high]")
    return ProblemSpec(
        kind=kind,
        dim=_get(d, "dim", path, int),
        seed=_get(d, "seed", path, int, 0),
        spectrum=(float(spectrum[0]), float(spectrum[1])),
        n_samples=_get(d, "n_samples", path, int, 40),
        ridge=_get(d, "ridge", path, float, 0.1),
    )


def _parse_bias_variant(d: dict, path: str) -> BiasVariant:
    _check_keys(d, {"label", "coeff", "exponent"}, path)
    label = _get(d, "label", path, str)
    if ("coeff" in d) != ("exponent" in d):
        raise ConfigError(f"{path}: give both coeff and exponent, or neither (unbiased)")
    if "coeff" not in d:
        return BiasVariant(label=label)
    return BiasVariant(label=label, schedule=_parse_schedule({"coeff": d["coeff"], "exponent": d["exponent"]}, path))


_PRECOND_OK = ("identity", "adagrad", "rmsprop", "amsgrad")
_ORACLE_OK = ("synthetic", "zeroth_order", "markov")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"invalid YAML{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    _check_keys(
        raw,
        {"name", "problem", "run", "step", "lambda", "preconditioner", "clip", "oracle", "analysis"},
        "config",
    )
    for key in ("name", "problem", "run", "preconditioner"):
        if key not in raw:
            raise ConfigError(f"config: missing required section {key!r}")

    name = raw["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError("config.name: expected a nonempty string")

    problem = _parse_problem(raw["problem"], "problem")

    run = raw["run"]
    _check_keys(run, {"n_steps", "seeds", "n_seeds", "master_seed", "allow_inadmissible", "out", "jobs"}, "run")
    n_steps = _get(run, "n_steps", "run", int)
    if n_steps < 1:
        raise ConfigError(f"run.n_steps: must be >= 1, got {n_steps}")
    if ("seeds" in run) == ("n_seeds" in run):
        raise ConfigError("run: give exactly one of seeds (list) or n_seeds (count)")
    if "seeds" in run:
        seeds = run["seeds"]
        if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
            raise ConfigError("run.seeds: expected a nonempty list of ints")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("run.seeds: seeds must be distinct")
        seeds = tuple(seeds)
    else:
        k = _get(run, "n_seeds", "run", int)
        if k < 1:
            raise ConfigError(f"run.n_seeds: must be >= 1, got {k}")
        seeds = tuple(range(k))
    allow_inadmissible = run.get("allow_inadmissible", False)
    if not isinstance(allow_inadmissible, bool):
        raise ConfigError("run.allow_inadmissible: expected a bool")
    out_dir = _get(run, "out", "run", str, None)
    jobs = _get(run, "jobs", "run", int, None)
    if jobs is not None and jobs < 1:
        raise ConfigError(f"run.jobs: must be >= 1, got {jobs}")

    step = _parse_schedule(raw.get("step", {}), "step", defaults=(0.01, 0.5))
    lam = _parse_schedule(raw.get("lambda", {}), "lambda", defaults=(1.0, 0.0))
    if step.exponent + lam.exponent >= 1.0 and not allow_inadmissible:
        raise ConfigError(
            f"step.exponent + lambda.exponent = {step.exponent + lam.exponent} >= 1 lies outside "
            "the guaranteed regimes; set run.allow_inadmissible: true to force it"
        )

    pre = raw["preconditioner"]
    _check_keys(pre, {"kind", "delta", "rho", "rho1", "rho2"}, "preconditioner")
    kinds = pre.get("kind")
    if isinstance(kinds, str):
        kinds = [kinds]
    if not (isinstance(kinds, list) and kinds and all(isinstance(k, str) for k in kinds)):
        raise ConfigError("preconditioner.kind: expected a string or list of strings")
    for k in kinds:
        if k not in _PRECOND_OK:
            raise ConfigError(f"preconditioner.kind: {k!r} not in {_PRECOND_OK}")
    if len(set(kinds)) != len(kinds):
        raise ConfigError("preconditioner.kind: duplicate entries")

    clip = None
    if "clip" in raw:
        clip = _parse_schedule(raw["clip"], "clip", directions=("increasing", "decreasing"), default_direction="increasing")

    orc = raw.get("oracle", {})
    _check_keys(orc, {"kind", "sigma", "bias", "direction", "tau", "mixing", "inner_samples"}, "oracle")
    oracle_kind = _get(orc, "kind", "oracle", str, "synthetic")
    if oracle_kind not in _ORACLE_OK:
        raise ConfigError(f"oracle.kind: {oracle_kind!r} not in {_ORACLE_OK}")
    bias_raw = orc.get("bias", [{"label": "unbiased"}])
    if isinstance(bias_raw, dict):
        bias_raw = [bias_raw]
    if not (isinstance(bias_raw, list) and bias_raw):
        raise ConfigError("oracle.bias: expected a mapping or nonempty list of mappings")
    variants = tuple(_parse_bias_variant(b, f"oracle.bias[{i}]") for i, b in enumerate(bias_raw))
    labels = [v.label for v in variants]
    if len(set(labels)) != len(labels):
        raise ConfigError("oracle.bias: duplicate labels")
    if oracle_kind != "synthetic" and any(v.schedule is not None for v in variants):
        raise ConfigError("oracle.bias: planted bias schedules apply to the synthetic oracle only")
    direction = _get(orc, "direction", "oracle", str, "fixed_axis")
    if direction not in ("fixed_axis", "fixed_random_unit", "toward_gradient"):
        raise ConfigError(f"oracle.direction: unknown direction {direction!r}")

    ana = raw.get("analysis", {})
    _check_keys(ana, {"window", "field", "iterate_kind"}, "analysis")
    if "window" in ana:
        window = ana["window"]
        if not (isinstance(window, list) and len(window) == 2):
            raise ConfigError("analysis.window: expected [lo, hi]")
        lo, hi = int(window[0]), int(window[1])
    else:
        # default drops the burn-in: rates are asymptotic statements
        lo, hi = max(1, n_steps // 10), n_steps
    if not 0 < lo < hi:
        raise ConfigError(f"analysis.window: need 0 < lo < hi, got [{lo}, {hi}]")
    field = _get(ana, "field", "analysis", str, "v_gap")
    if field not in ("v_gap", "grad_norm_sq"):
        raise ConfigError(f"analysis.field: must be 'v_gap' or 'grad_norm_sq', got {field!r}")
    iterate_kind = _get(ana, "iterate_kind", "analysis", str, "weighted")
    if iterate_kind not in ("weighted", "uniform"):
        raise ConfigError(f"analysis.iterate_kind: must be 'weighted' or 'uniform', got {iterate_kind!r}")

    return ExperimentConfig(
        name=name,
        problem=problem,
        n_steps=n_steps,
        seeds=seeds,
        master_seed=_get(run, "master_seed", "run", int, 0),
        allow_inadmissible=allow_inadmissible,
        out_dir=out_dir,
        jobs=jobs,
        step=step,
        lam=lam,
        precond_kinds=tuple(kinds),
        delta=_get(pre, "delta", "preconditioner", float, 5e-2),
        rho=_get(pre, "rho", "preconditioner", float, 0.9),
        rho1=_get(pre, "rho1", "preconditioner", float, 0.9),
        rho2=_get(pre, "rho2", "preconditioner", float, 0.999),
        clip=clip,
        oracle_kind=oracle_kind,
        sigma=_get(orc, "sigma", "oracle", float, 0.1),
        bias_variants=variants,
        direction=direction,
        tau=_get(orc, "tau", "oracle", float, 0.01),
        mixing=_get(orc, "mixing", "oracle", float, 0.5),
        inner_samples=_get(orc, "inner_samples", "oracle", int, 1),
        window=(lo, hi),
        field=field,
        iterate_kind=iterate_kind,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _schedule_dict(s: PowerSchedule) -> dict:
    return {"coeff": s.coeff, "exponent": s.exponent, "direction": s.direction}


def config_dict(cfg: ExperimentConfig) -> dict:
    """Canonical nested form; parse_config(yaml.dump(...)) round-trips."""
    d = {
        "name": cfg.name,
        "problem": {
            "kind": cfg.problem.kind,
            "dim": cfg.problem.dim,
            "seed": cfg.problem.seed,
            "spectrum": list(cfg.problem.spectrum),
            "n_samples": cfg.problem.n_samples,
            "ridge": cfg.problem.ridge,
        },
        "run": {"n_steps": cfg.n_steps, "seeds": list(cfg.seeds), "master_seed": cfg.master_seed},
        "step": _schedule_dict(cfg.step),
        "lambda": _schedule_dict(cfg.lam),
        "preconditioner": {
            "kind": list(cfg.precond_kinds),
            "delta": cfg.delta,
            "rho": cfg.rho,
            "rho1": cfg.rho1,
            "rho2": cfg.rho2,
        },
        "oracle": {
            "kind": cfg.oracle_kind,
            "sigma": cfg.sigma,
            "bias": [
                {"label": v.label}
                if v.schedule is None
                else {"label": v.label, "coeff": v.schedule.coeff, "exponent": v.schedule.exponent}
                for v in cfg.bias_variants
            ],
            "direction": cfg.direction,
            "tau": cfg.tau,
            "mixing": cfg.mixing,
            "inner_samples": cfg.inner_samples,
        },
        "analysis": {"window": list(cfg.window), "field": cfg.field, "iterate_kind": cfg.iterate_kind},
    }
    if cfg.clip is not None:
        d["clip"] = _schedule_dict(cfg.clip)
    if cfg.allow_inadmissible:
        d["run"]["allow_inadmissible"] = True
    if cfg.out_dir is not None:
        d["run"]["out"] = cfg.out_dir
    if cfg.jobs is not None:
        d["run"]["jobs"] = cfg.jobs
    return d


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_dict(cfg), sort_keys=True)


def config_hash(cfg: ExperimentConfig, precond_kind: str | None = None, bias_label: str | None = None) -> str:
    """Content hash naming run artifacts.

    Resolving a variant (one preconditioner kind, one bias arm) hashes the
    config as if only that arm were configured, so each run file's name pins
    down exactly what produced it.  The seed list is excluded; the seed is
    already part of the filename, and adding seeds must not rename old runs.
    """
    d = config_dict(cfg)
    del d["run"]["seeds"]
    # orchestration knobs never change what a run computes
    d["run"].pop("out", None)
    d["run"].pop("jobs", None)
    if precond_kind is not None:
        if precond_kind not in cfg.precond_kinds:
            raise ValueError(f"{precond_kind!r} is not one of the configured kinds {cfg.precond_kinds}")
        d["preconditioner"]["kind"] = [precond_kind]
    if bias_label is not None:
        keep = [b for b in d["oracle"]["bias"] if b["label"] == bias_label]
        if not keep:
            raise ValueError(f"no bias variant labeled {bias_label!r}")
        d["oracle"]["bias"] = keep
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Decorrelated per-run seed; distinct run indices never collide by construction."""
    return _splitmix64((master_seed ^ _splitmix64(run_index & _MASK)) & _MASK)
