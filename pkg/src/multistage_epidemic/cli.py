"""Command-line entry point.

Every run resolves its configuration (defaults < ``--config`` file < flags),
validates it, writes ``manifest.json`` into the output directory and only then
starts computing. A manifest is itself a valid ``--config`` file: keys starting
with ``_`` (timestamps, output lists) are ignored when it is read back.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np

from . import rng


def _list(conv):
    def parse(value):
        if isinstance(value, (list, tuple)):
            return [conv(v) for v in value]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [conv(value)]
        text = str(value).strip()
        if not text:
            return []
        try:
            return [conv(v.strip()) for v in text.split(",")]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid list {value!r}: {exc}") from None
    parse.__name__ = f"{conv.__name__} list"
    return parse


def _int(value):
    if isinstance(value, bool):
        raise ValueError(f"expected an integer, got {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    try:
        return int(str(value))
    except ValueError:
        f = float(str(value))
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {value!r}") from None
        return int(f)


def _float(value):
    if isinstance(value, bool):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def _str(value):
    return str(value)


def _seed(value):
    v = _int(value)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return v


# name -> (converter, help)
FIELDS = {
    "K": (_int, "number of infection stages"),
    "n": (_list(_int), "population size (comma list for studies)"),
    "gamma": (_list(_float), "limit drift parameters gamma_1..gamma_K (comma list)"),
    "delta": (_list(_float), "progression perturbations delta_1..delta_K (comma list)"),
    "epsilon": (_list(_float), "infection perturbations epsilon_1..epsilon_K (comma list)"),
    "init": (_list(_float), "initial state (comma list)"),
    "init_stage1": (_int, "initial stage-1 count; everyone else susceptible"),
    "regime": (_str, "scaling regime: small, intermediate or large"),
    "alpha1": (_float, "stage-1 space scale (small and large regimes)"),
    "dt": (_float, "time step of the SDE / ODE integrators"),
    "horizon": (_float, "time horizon"),
    "replicas": (_int, "number of independent replicas"),
    "seed": (_seed, "master seed (64-bit); drawn from entropy and recorded when absent"),
    "workers": (_int, "worker processes for replica fan-out"),
    "output_dir": (_str, "directory for the manifest and data files"),
    "format": (_str, "data format: csv or json"),
    "variant": (_str, "SDE drift: intermediate, small or feller"),
    "times": (_list(_float), "observation times (rescaled)"),
    "window": (_float, "post-extinction comparison window (rescaled)"),
    "partition_replicas": (_int, "random partitions per n"),
    "forcing": (_float, "constant stage-1 forcing y of the ODE"),
    "method": (_str, "ODE solver: rk4 or closed-form"),
    "n_boot": (_int, "bootstrap resamples for exponent CIs"),
}

COMMON = {"seed": None, "workers": None, "output_dir": ".", "format": "csv"}

SUBCOMMANDS = {
    "simulate": {
        "help": "one exact run of the chain",
        "required": ["K", "n"],
        "defaults": {"gamma": None, "delta": None, "epsilon": None, "init": None, "init_stage1": None,
                     "regime": "intermediate", "alpha1": None, "horizon": None},
    },
    "sde": {
        "help": "one Euler-Maruyama path of the limiting SDE",
        "required": ["K", "init", "horizon"],
        "defaults": {"gamma": None, "variant": "intermediate", "dt": 1e-3},
    },
    "ode": {
        "help": "the deterministic post-extinction ODE",
        "required": ["K", "init", "horizon"],
        "defaults": {"gamma": None, "dt": 1e-3, "forcing": 0.0, "method": "rk4"},
    },
    "study-convergence": {
        "help": "KS distance of the rescaled chain to the SDE along n",
        "required": ["K", "n", "replicas"],
        "defaults": {"gamma": None, "times": [1.0], "dt": 1e-3},
    },
    "study-outbreak": {
        "help": "growth exponent of the final outbreak",
        "required": ["K", "n", "replicas"],
        "defaults": {"gamma": None, "n_boot": 1000},
    },
    "study-collapse": {
        "help": "post-extinction chain versus ODE along n",
        "required": ["K", "n", "replicas"],
        "defaults": {"gamma": None, "window": 5.0, "dt": 1e-3, "horizon": math.inf},
    },
    "study-conjecture": {
        "help": "growth exponents of E N_{n,k} from one infected",
        "required": ["K", "n", "replicas"],
        "defaults": {"partition_replicas": 0, "n_boot": 1000},
    },
    "partition": {
        "help": "random partition of the population into epidemic clusters",
        "required": ["K", "n"],
        "defaults": {"delta": None, "epsilon": None, "replicas": 1},
    },
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    master_seed: int
    output_dir: str
    format: str
    workers: int
    seed_drawn: bool = False
    extra: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {"subcommand": self.subcommand}
        rec.update({k: _plain(v) for k, v in sorted(self.params.items())})
        rec.update({"seed": self.master_seed, "output_dir": self.output_dir, "format": self.format,
                    "workers": self.workers})
        return rec


def _plain(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multistage-epidemic",
                                     description="Simulation laboratory for the multistage critical epidemic.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, spec in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=spec["help"], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="flat JSON file of settings; flags override it")
        for key in list(spec["required"]) + list(spec["defaults"]) + list(COMMON):
            conv, helptext = FIELDS[key]
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=conv, help=helptext)
    return parser


def _convert(key, value):
    if key not in FIELDS:
        raise UsageError(f"unknown configuration key {key!r}")
    if value is None:
        return None
    if isinstance(value, str) and value in ("inf", "-inf") and FIELDS[key][0] is _float:
        return float(value)
    try:
        return FIELDS[key][0](value)
    except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"invalid value for {key}: {exc}") from None


def _load_config(path, subcommand):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a flat JSON object")
    out = {}
    for key, value in data.items():
        if key.startswith("_"):
            continue
        if key == "subcommand":
            if value != subcommand:
                raise UsageError(f"config file is for {value!r}, not {subcommand!r}")
            continue
        if isinstance(value, dict):
            raise UsageError(f"config key {key!r} is nested; only flat key-value files are supported")
        allowed = set(SUBCOMMANDS[subcommand]["required"]) | set(SUBCOMMANDS[subcommand]["defaults"]) | set(COMMON)
        if key not in allowed:
            raise UsageError(f"config key {key!r} does not apply to {subcommand}")
        out[key] = _convert(key, value)
    return out


def parse_config(argv=None) -> RunConfig:
    """Resolve argv (and an optional config file) into a :class:`RunConfig`.

    Raises :class:`UsageError` for missing fields, bad types or unknown keys;
    argparse itself exits with status 2 on unknown flags.
    """
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    sub = ns.pop("subcommand")
    spec = SUBCOMMANDS[sub]
    values = dict(COMMON)
    values.update(spec["defaults"])
    if "config" in ns:
        values.update(_load_config(ns.pop("config"), sub))
    values.update(ns)
    missing = [k for k in spec["required"] if values.get(k) is None]
    if missing:
        raise UsageError(f"{sub}: missing required field(s): {', '.join(missing)}")
    fmt = values.pop("format")
    if fmt not in ("csv", "json"):
        raise UsageError(f"format must be 'csv' or 'json', got {fmt!r}")
    seed = values.pop("seed")
    drawn = seed is None
    if drawn:
        seed = rng.fresh_master_seed()
    workers = values.pop("workers")
    workers = (os.cpu_count() or 1) if workers is None else workers
    if workers < 1:
        raise UsageError("workers must be >= 1")
    out = values.pop("output_dir")
    return RunConfig(sub, values, int(seed), out, fmt, int(workers), drawn)


# ---------------------------------------------------------------- resolution


def _single_n(cfg):
    ns = cfg.params["n"]
    if len(ns) != 1:
        raise UsageError(f"{cfg.subcommand} takes a single --n, got {ns}")
    return ns[0]


def _gamma(cfg, K):
    g = cfg.params.get("gamma")
    if g is None:
        return [0.0] * K
    if len(g) == 1:
        return g * K
    if len(g) != K:
        raise UsageError(f"gamma must have K={K} entries, got {len(g)}")
    return g


def _model_params(cfg):
    from .ctmc import ModelParams
    from .scaling import model_for_gamma, scaling_constants

    p = cfg.params
    K, n = p["K"], _single_n(cfg)
    if p.get("gamma") is not None:
        if p.get("delta") is not None or p.get("epsilon") is not None:
            raise UsageError("give either --gamma or --delta/--epsilon, not both")
        c = scaling_constants(p.get("regime") or "intermediate", n, K, p.get("alpha1"))
        return model_for_gamma(_gamma(cfg, K), c), c
    return ModelParams(n, K, tuple(p.get("delta") or ()), tuple(p.get("epsilon") or ())), None


def resolve(cfg: RunConfig):
    """Validate a configuration by building the objects it describes (no heavy work)."""
    p = cfg.params
    K = p["K"]
    try:
        if cfg.subcommand == "simulate":
            from .ctmc import StopRule, initial_state

            params, constants = _model_params(cfg)
            if p.get("init") is not None and p.get("init_stage1") is not None:
                raise UsageError("give either --init or --init-stage1, not both")
            if p.get("init") is not None:
                init = [_int(v) for v in p["init"]]
                if len(init) == K:
                    init = initial_state(params, init)
            elif p.get("init_stage1") is not None:
                init = initial_state(params, p["init_stage1"])
            else:
                raise UsageError("simulate: missing required field(s): init or init_stage1")
            from .ctmc import check_state

            init = check_state(init, params)
            stop = StopRule.absorption() if p.get("horizon") is None else StopRule.at(p["horizon"])
            return {"params": params, "constants": constants, "init": init, "stop": stop}
        if cfg.subcommand == "sde":
            from .limit.sde import SdeSpec, _check_init, _n_steps

            spec = SdeSpec(K, tuple(_gamma(cfg, K)), p["variant"])
            _check_init(p["init"], spec)
            _n_steps(p["horizon"], p["dt"])
            return {"spec": spec}
        if cfg.subcommand == "ode":
            if len(p["init"]) != K + 1:
                raise UsageError(f"ode: init must have K+1={K + 1} entries (x_0, x_2, ..., x_{{K+1}})")
            if p["method"] not in ("rk4", "closed-form"):
                raise UsageError("method must be 'rk4' or 'closed-form'")
            if p["method"] == "closed-form" and p["forcing"] != 0:
                raise UsageError("the closed form needs zero forcing")
            if p["horizon"] <= 0 or p["dt"] <= 0 or p["forcing"] < 0 or min(p["init"]) < 0:
                raise UsageError("ode needs horizon > 0, dt > 0 and nonnegative init and forcing")
            return {"gamma": _gamma(cfg, K)}
        if cfg.subcommand.startswith("study-"):
            if p["replicas"] < 1:
                raise UsageError("replicas must be >= 1")
            if cfg.subcommand != "study-conjecture":
                from .scaling import perturbations_for_gamma, scaling_constants

                for n in p["n"]:
                    perturbations_for_gamma(_gamma(cfg, K), scaling_constants("intermediate", n, K))
            if cfg.subcommand == "study-outbreak" and len(p["n"]) < 3:
                raise UsageError("study-outbreak needs at least 3 values of n")
            if cfg.subcommand == "study-conjecture" and len(p["n"]) < 2:
                raise UsageError("study-conjecture needs at least 2 values of n")
            if cfg.subcommand == "study-collapse" and K < 2:
                raise UsageError("study-collapse needs K >= 2")
            return {}
        if cfg.subcommand == "partition":
            params, _ = _model_params(cfg)
            if p["replicas"] < 1:
                raise UsageError("replicas must be >= 1")
            return {"params": params}
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raise UsageError(f"unknown subcommand {cfg.subcommand}")


# ------------------------------------------------------------------- running


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _table_text(table, fmt):
    if fmt == "csv":
        return table.to_csv()
    return json.dumps(table.as_records(), indent=1) + "\n"


def _manifest(cfg, started, outputs=None, finished=None):
    rec = cfg.as_record()
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    rec["_started"] = started
    rec["_seed_drawn_from_entropy"] = cfg.seed_drawn
    rec["_package_version"] = version
    if finished is not None:
        rec["_finished"] = finished
        rec["_outputs"] = outputs
    return json.dumps(rec, indent=2) + "\n"


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(cfg: RunConfig, resolved: dict) -> list:
    from .experiments.report import Table, jsonable

    p = cfg.params
    out = cfg.output_dir
    ext = "csv" if cfg.format == "csv" else "json"
    written = []
    K = p["K"]
    if cfg.subcommand == "simulate":
        from .ctmc import simulate_path

        path = simulate_path(resolved["params"], resolved["init"], resolved["stop"], rng.ReplicaSeed(cfg.master_seed))
        table = Table(["time"] + [f"a_{k}" for k in range(K + 2)],
                      [[float(t)] + [int(v) for v in s] for t, s in zip(path.times, path.states)])
        written.append(_write(os.path.join(out, f"trajectory.{ext}"), _table_text(table, cfg.format)))
        summary = path.summary()
        if resolved["constants"] is not None:
            summary["scaling"] = resolved["constants"].as_record()
        written.append(_write(os.path.join(out, "summary.json"), json.dumps(jsonable(summary), indent=2) + "\n"))
    elif cfg.subcommand == "sde":
        from .limit.sde import integrate_sde

        spec = resolved["spec"]
        path = integrate_sde(spec, p["init"], p["horizon"], p["dt"], rng.ReplicaSeed(cfg.master_seed))
        table = Table(["time"] + [f"A_{k}" for k in range(K + 2)],
                      [[float(t)] + [float(v) for v in row] for t, row in zip(path.grid, path.values)])
        written.append(_write(os.path.join(out, f"path.{ext}"), _table_text(table, cfg.format)))
    elif cfg.subcommand == "ode":
        from .limit.ode import closed_form_y0, integrate_ode, uniform_grid, verify_properties

        if p["method"] == "rk4":
            sol = integrate_ode(p["init"], resolved["gamma"], p["horizon"], p["dt"], y=p["forcing"])
        else:
            sol = closed_form_y0(p["init"], resolved["gamma"], uniform_grid(p["horizon"], p["dt"]))
        table = Table(["time", "x_0"] + [f"x_{k}" for k in range(2, K + 2)],
                      [[float(t)] + [float(v) for v in row] for t, row in zip(sol.grid, sol.values)])
        written.append(_write(os.path.join(out, f"solution.{ext}"), _table_text(table, cfg.format)))
        written.append(_write(os.path.join(out, "properties.json"), verify_properties(sol).to_text() + "\n"))
    elif cfg.subcommand == "partition":
        from .experiments.common import PARTITION
        from .experiments.partition import random_partition

        params = resolved["params"]
        rows = []
        summaries = []
        for r in range(p["replicas"]):
            res = random_partition(params, rng.ReplicaSeed(cfg.master_seed, (PARTITION,), r))
            rows.extend([r, b, int(s)] + [int(v) for v in c] for b, (s, c) in enumerate(zip(res.sizes, res.counters)))
            summaries.append({"replica": r, "blocks": res.blocks, "largest": int(res.sizes.max()),
                              "size_biased_mean": res.size_biased_mean(),
                              "largest_sq_over_n": res.largest_squared_over_n()})
        table = Table(["replica", "block", "size"] + [f"N_{k}" for k in range(1, K + 1)], rows)
        written.append(_write(os.path.join(out, f"blocks.{ext}"), _table_text(table, cfg.format)))
        written.append(_write(os.path.join(out, "summary.json"),
                              json.dumps(jsonable({"params": params.as_record(), "partitions": summaries}), indent=2) + "\n"))
    else:
        report = _run_study(cfg)
        written.extend(report.write(out, cfg.format))
    return written


def _run_study(cfg):
    from . import experiments as ex

    p = cfg.params
    K = p["K"]
    seed = rng.ReplicaSeed(cfg.master_seed)
    if cfg.subcommand == "study-convergence":
        return ex.convergence_study(K, _gamma(cfg, K), p["n"], p["replicas"], p["times"], seed, p["dt"],
                                    workers=cfg.workers)
    if cfg.subcommand == "study-outbreak":
        return ex.outbreak_scaling_fit(K, _gamma(cfg, K), p["n"], p["replicas"], seed, p["n_boot"],
                                       workers=cfg.workers)
    if cfg.subcommand == "study-collapse":
        return ex.collapse_check(K, _gamma(cfg, K), p["n"], p["replicas"], seed, p["window"], ode_dt=p["dt"],
                                 t0_horizon=p["horizon"])
    return ex.conjecture_exponents(K, p["n"], p["replicas"], seed, p["partition_replicas"], p["n_boot"],
                                   workers=cfg.workers)


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        resolved = resolve(cfg)
    except UsageError as exc:
        print(f"multistage-epidemic: usage error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(cfg.output_dir, exist_ok=True)
    started = _now()
    manifest_path = os.path.join(cfg.output_dir, "manifest.json")
    _write(manifest_path, _manifest(cfg, started))
    try:
        outputs = run(cfg, resolved)
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"multistage-epidemic: {cfg.subcommand} failed: {exc}", file=sys.stderr)
        return 1
    _write(manifest_path, _manifest(cfg, started, [os.path.basename(o) for o in outputs], _now()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
