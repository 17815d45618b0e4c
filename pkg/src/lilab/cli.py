"""Config-driven entry point: condition checks, simulations, verify suites.

JSON configs are schema-validated (unknown keys rejected); outputs are CSVs
with '.' decimals, LF line endings, and a header row, plus a manifest that
declares every written file alongside the config hash, seed, and versions.

Exit codes: 0 pass, 1 criteria failure, 2 usage/config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys

import jsonschema
import numpy as np
import scipy

import lilab
from lilab import engine, filtration, limits, operators, processes
from lilab.spaces import NormSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

_INNOVATION_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["law"],
    "properties": {
        "law": {"enum": ["rademacher", "gaussian", "uniform", "centered_pareto"]},
        "dim": {"type": "integer", "minimum": 1},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number"}, "b": {"type": "number"},
        "alpha": {"type": "number", "exclusiveMinimum": 2},
    },
}
_MODULUS_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["concave_sqrt", "power", "concave_custom"]},
        "alpha": {"type": "number"},
        "table": {"type": "array",
                  "items": {"type": "array", "items": {"type": "number"},
                            "minItems": 2, "maxItems": 2}},
    },
}
_OBSERVABLE_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["torus_dim", "terms"],
    "properties": {
        "torus_dim": {"type": "integer", "minimum": 1},
        "dim": {"type": "integer", "minimum": 1},
        "terms": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["k", "re", "im"],
            "properties": {
                "k": {"type": "array", "items": {"type": "integer"}},
                "re": {}, "im": {},
            }}},
    },
}
_MODEL_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "oneOf": [
        {"additionalProperties": False, "properties": {
            "family": {"const": "martingale_difference"},
            "innovation": _INNOVATION_SCHEMA,
            "g": {"type": "string"}, "h": {"type": "string"},
            "q": {"type": "integer", "minimum": 0}},
         "required": ["family", "innovation"]},
        {"additionalProperties": False, "properties": {
            "family": {"const": "linear"},
            "innovation": _INNOVATION_SCHEMA,
            "coeffs": {"type": "array"}, "min_lag": {"type": "integer"}},
         "required": ["family", "innovation", "coeffs"]},
        {"additionalProperties": False, "properties": {
            "family": {"const": "function_of_linear"},
            "innovation": _INNOVATION_SCHEMA,
            "a": {"type": "array", "items": {"type": "number"}},
            "f": {"type": "string"}, "modulus": _MODULUS_SCHEMA,
            "growth_r": {"type": "number", "minimum": 1}},
         "required": ["family", "innovation", "a", "f", "modulus"]},
        {"additionalProperties": False, "properties": {
            "family": {"const": "markov_chain"},
            "kernel": {"type": "array"}, "stationary": {"type": "array"},
            "f": {"type": "array"}},
         "required": ["family", "kernel", "stationary", "f"]},
        {"additionalProperties": False, "properties": {
            "family": {"const": "doubling_map"},
            "observable": _OBSERVABLE_SCHEMA},
         "required": ["family", "observable"]},
        {"additionalProperties": False, "properties": {
            "family": {"const": "torus_automorphism"},
            "matrix": {"type": "array"},
            "observable": _OBSERVABLE_SCHEMA},
         "required": ["family", "matrix", "observable"]},
    ],
}
CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": _MODEL_SCHEMA,
        "space": {"type": "object", "additionalProperties": False,
                  "required": ["dim"],
                  "properties": {"dim": {"type": "integer", "minimum": 1},
                                 "kind": {"enum": ["euclidean", "weighted_lr"]},
                                 "r": {"type": "number"},
                                 "weights": {"type": "array",
                                             "items": {"type": "number"}}}},
        "seed": {"type": "integer", "minimum": 0},
        "n_grid": {"type": "array", "minItems": 1,
                   "items": {"type": "integer", "minimum": 1}},
        "n_paths": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "memory_budget": {"type": "integer", "minimum": 1},
        "strict_sums": {"type": "boolean"},
        "statistics": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["m1", "m2", "mp", "lil", "final_scaled",
                                  "abs_mean"]},
                "p": {"type": "number", "exclusiveMinimum": 1},
                "window_fraction": {"type": "number",
                                    "exclusiveMinimum": 0, "maximum": 1}}}},
        "checks": {"type": "array", "items": {
            "type": "object", "additionalProperties": False,
            "required": ["condition"],
            "properties": {
                "condition": {"enum": ["hannan", "hanbis", "markov_sqrt_sum",
                                       "markov_normal_sq_sum", "ddm",
                                       "dynsys", "fourier_tail"]},
                "p": {"type": "number"},
                "horizon": {"type": "integer", "minimum": 1},
                "beta": {"type": "number"}, "C": {"type": "number"},
                "m_grid": {"type": "array", "items": {"type": "integer"}}}}},
        "out": {"type": "string"},
    },
}

_DEFAULTS = {"seed": 0, "n_grid": [1024], "n_paths": 16, "workers": 1,
             "memory_budget": engine.DEFAULT_MEMORY_BUDGET,
             "strict_sums": True, "statistics": [], "checks": []}


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    return canonical_config(cfg)


def canonical_config(cfg: dict) -> dict:
    """Fill defaults and normalize the model block through its dataclass."""
    out = dict(_DEFAULTS)
    out.update(cfg)
    out["model"] = processes.model_to_config(
        processes.model_from_config(cfg["model"]))
    if "space" in cfg:
        out["space"] = NormSpec.from_config(cfg["space"]).to_config()
    return out


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def _config_hash(cfg: dict) -> str:
    # the worker count affects scheduling, never results: keep it out of the hash
    cfg = {k: v for k, v in cfg.items() if k != "workers"}
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")


def _write_manifest(out_dir: str, cfg: dict, files: list) -> str:
    manifest = {
        "config_sha256": _config_hash(cfg),
        "seed": cfg["seed"],
        "files": sorted(files),
        "versions": {"lilab": lilab.__version__, "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# check


def _run_check(cfg: dict, spec: dict) -> dict:
    model = processes.model_from_config(cfg["model"])
    cond = spec["condition"]
    horizon = spec.get("horizon", 64)
    if cond == "hannan":
        rep = filtration.projection_norms(model, spec.get("p", 2.0), horizon)
        return {"condition": "hannan",
                "verdict": "holds" if rep.verdict == "finite" else rep.verdict,
                "value": rep.hannan_value, "tail": rep.tail_bound}
    if cond == "hanbis":
        rep = filtration.hanbis_check(model, horizon)
        return {"condition": "hanbis",
                "verdict": "holds" if rep.verdict == "finite" else rep.verdict,
                "value": rep.past_sum + rep.future_sum,
                "tail": rep.past_tail + rep.future_tail}
    if cond in ("markov_sqrt_sum", "markov_normal_sq_sum"):
        if not isinstance(model, processes.MarkovChainFn):
            raise ConfigError(f"{cond} requires a markov_chain model")
        kind = "sqrt_sum" if cond.endswith("sqrt_sum") else "normal_sq_sum"
        rep = operators.markov_condition(model.kernel, model.stationary,
                                         model.f_centered, kind, horizon)
        return {"condition": cond, "verdict": rep.verdict,
                "value": rep.total, "tail": rep.tail_bound}
    if cond == "ddm":
        if not isinstance(model, processes.MarkovChainFn):
            raise ConfigError("ddm requires a markov_chain model")
        if model.dim != 1:
            raise ConfigError("ddm requires a scalar observable")
        phi = operators.phi_mixing_coeffs(model.kernel, model.stationary,
                                          model.f[:, 0], horizon)
        rep = operators.cond_ddm(phi, spec.get("p", 2.0))
        return {"condition": "ddm", "verdict": rep.verdict,
                "value": rep.total, "tail": rep.tail_bound}
    if cond == "dynsys":
        if not isinstance(model, processes.DoublingMap):
            raise ConfigError("dynsys requires a doubling_map model")
        rep = operators.cond_dynsys(model.observable, horizon)
        return {"condition": "dynsys", "verdict": rep.verdict,
                "value": rep.total, "tail": rep.tail_bound}
    if cond == "fourier_tail":
        obs = getattr(model, "observable", None)
        if obs is None:
            raise ConfigError("fourier_tail requires a model with an observable")
        rep = operators.fourier_tail_check(
            obs, spec.get("beta", 3.0), spec.get("C", 1.0),
            spec.get("m_grid", [1, 2, 4, 8, 16, 32]))
        return {"condition": "fourier_tail", "verdict": rep.verdict,
                "value": rep.total, "tail": rep.tail_bound}
    raise ConfigError(f"unknown condition {cond!r}")


def cmd_check(cfg: dict, out_dir: str | None) -> int:
    rows = [_run_check(cfg, spec) for spec in cfg["checks"]]
    for r in rows:
        print(f"{r['condition']}: {r['verdict']} "
              f"(value={r['value']!r}, tail={r['tail']!r})")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "conditions.csv")
        _write_csv(path, ["condition", "verdict", "value", "tail"],
                   [(r["condition"], r["verdict"],
                     float(r["value"]) if r["value"] is not None else math.nan,
                     float(r["tail"]) if r["tail"] is not None else math.nan)
                    for r in rows])
        _write_manifest(out_dir, cfg, ["conditions.csv"])
    return EXIT_OK if all(r["verdict"] == "holds" for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------------------
# simulate


def _build_plan(cfg: dict) -> engine.ExperimentPlan:
    model = processes.model_from_config(cfg["model"])
    space = NormSpec.from_config(cfg["space"]) if "space" in cfg else None
    stats = tuple((s["name"], {k: v for k, v in s.items() if k != "name"})
                  for s in cfg["statistics"])
    return engine.ExperimentPlan(
        model=model, statistics=stats, n_grid=tuple(cfg["n_grid"]),
        n_paths=cfg["n_paths"], master_seed=cfg["seed"],
        memory_budget=cfg["memory_budget"], workers=cfg["workers"],
        space=space, strict_sums=cfg["strict_sums"])


def cmd_simulate(cfg: dict, out_dir: str) -> int:
    plan = _build_plan(cfg)
    bundle = engine.run(plan)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    summary_rows = []
    for name, rep in bundle["statistics"].items():
        summary_rows.append((name, rep["count"], rep["mean"], rep["se"],
                             rep["max"]))
        hpath = f"{name}_histogram.csv"
        _write_csv(os.path.join(out_dir, hpath), ["bin", "count"],
                   list(enumerate(rep["histogram"].tolist())))
        files.append(hpath)
        rpath = f"{name}_reservoir.csv"
        res = rep["reservoir"]
        width = res.shape[1] if res.ndim == 2 and len(res) else 1
        _write_csv(os.path.join(out_dir, rpath),
                   ["path"] + [f"v{i}" for i in range(width)],
                   [(i,) + tuple(float(x) for x in np.atleast_1d(v))
                    for i, v in enumerate(res)])
        files.append(rpath)
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["statistic", "count", "mean", "se", "max"], summary_rows)
    files.append("summary.csv")
    _write_manifest(out_dir, cfg, files)
    print(f"wrote {len(files)} files + manifest.json to {out_dir} "
          f"({bundle['elapsed_s']:.2f}s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _suite_trivial() -> list:
    rows = []
    h1 = limits.bennett_h(1.0)
    rows.append(("bennett_h(1) = 2 ln 2 - 1",
                 abs(h1 - (2 * math.log(2) - 1)) < 1e-12))
    rows.append(("log_plus(0) = 1", limits.log_plus(0.0) == 1.0))
    acc = engine.Accumulator.empty((("m2", {}),))
    rows.append(("merge(x, empty) = x",
                 engine.merge(acc, acc).states["m2"].count == 0))
    return rows


def _suite_smoke(seed: int, workers: int) -> list:
    model = processes.MartingaleDifference(processes.InnovationSpec("rademacher"))
    plan = engine.ExperimentPlan(model=model,
                                 statistics=(("m2", {}), ("final_scaled", {})),
                                 n_grid=(2 ** 14,), n_paths=256,
                                 master_seed=seed, workers=workers)
    bundle = engine.run(plan)
    m2 = bundle["statistics"]["m2"]
    return [
        ("smoke run completes", m2["count"] == 256),
        ("maximal statistic is positive and finite",
         0 < m2["mean"] < math.inf),
        ("scaled endpoint centered",
         abs(bundle["statistics"]["final_scaled"]["reservoir"].mean()) < 0.5),
    ]


def _suite_lil_scalar(seed: int, workers: int) -> list:
    model = processes.MartingaleDifference(processes.InnovationSpec("rademacher"))
    src = processes.PathStream(model, 2 ** 18, 64, seed)
    rep = limits.lil_limsup(src)
    return [("windowed limsup estimate in [0.7, 1.4] at reduced scale",
             0.7 <= rep.estimate <= 1.4)]


SUITES = {"trivial": lambda seed, workers: _suite_trivial(),
          "smoke": _suite_smoke,
          "lil-scalar": _suite_lil_scalar}


def cmd_verify(suite: str, seed: int, workers: int) -> int:
    if suite not in SUITES:
        print(f"unknown suite {suite!r}; available: {sorted(SUITES)}",
              file=sys.stderr)
        return EXIT_USAGE
    rows = SUITES[suite](seed, workers)
    ok = True
    for name, passed in rows:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok = ok and passed
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lilab",
                                 description="simulation and verification "
                                 "toolkit for iterated-logarithm limit laws")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("check", "simulate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--workers", type=int, help="worker count "
                       "(falls back to LILAB_WORKERS, then config)")
        p.add_argument("--strict-sums", action="store_true",
                       help="fixed-order reductions for reproducible sums "
                       "(always on; flag recorded in the plan)")
        if name == "verify":
            p.add_argument("--suite", default="trivial",
                           help="named suite: trivial | smoke | lil-scalar")
    return ap


def _resolve_workers(args, cfg: dict | None) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("LILAB_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"bad LILAB_WORKERS value {env!r}") from exc
    return (cfg or {}).get("workers", 1)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else None
        if args.command == "verify":
            seed = args.seed if args.seed is not None else \
                (cfg or {}).get("seed", 0)
            return cmd_verify(args.suite, seed, _resolve_workers(args, cfg))
        if cfg is None:
            print("--config is required for this command", file=sys.stderr)
            return EXIT_USAGE
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg["workers"] = _resolve_workers(args, cfg)
        if args.strict_sums:
            cfg["strict_sums"] = True
        if args.command == "check":
            return cmd_check(cfg, args.out)
        out_dir = args.out or cfg.get("out")
        if not out_dir:
            print("simulate needs --out or an 'out' entry in the config",
                  file=sys.stderr)
            return EXIT_USAGE
        return cmd_simulate(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, KeyError, processes.MemoryBudgetError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
