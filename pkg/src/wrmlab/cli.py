"""Command line front end: config parsing, orchestration, persistence.

One TOML config file describes a run; every command takes --config plus the
common overrides --seed, --out, --replicas.  All randomness descends from the
single seed, so a rerun with the same config and seed reproduces every output
byte.  Exit codes: 0 all verdicts consistent (or nothing verdict-bearing ran),
1 invalid config or usage, 2 at least one verdict violated, 3 no violations
but at least one inconclusive verdict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np
import tomli

from .geometry import (
    Ball,
    Box,
    ColoredConfiguration,
    Window,
    config_from_json,
    config_to_json,
    window_contains_window,
)
from .kernels import KernelMode, Observable, ObservableKind, eval_kernel_family
from .model import ModelParams
from .oracle import oracle_eval
from .probes import (
    VERDICT_INCONCLUSIVE,
    VERDICT_VIOLATED,
    phase_scan_csv,
    probe_color_discontinuity,
    probe_decay,
    probe_percolation,
    probe_spatial_discontinuity,
    scan_phase_diagram,
)
from .sampler import (
    BoundaryCondition,
    RngStream,
    evolve_spinflip,
    sample_wrm_exact,
    sample_wrm_mcmc,
)
from .svg import render_svg

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VIOLATED = 2
EXIT_INCONCLUSIVE = 3

PROBE_NAMES = ("decay", "color", "spatial", "percolation")

_SPIN_VALUES = {"+": 1, "-": -1, 1: 1, -1: -1}


class ConfigError(Exception):
    """Invalid run configuration; message carries the field path."""


class _Parser(argparse.ArgumentParser):
    # usage errors share the invalid-config exit code so 2 stays unambiguous
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config parsing


def _expect_table(obj: Any, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a table")
    return obj


def _get_number(table: dict, key: str, path: str, required: bool = False, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    return float(v)


def _get_int(table: dict, key: str, path: str, required: bool = False, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}: expected an integer")
    return int(v)


def _get_str(table: dict, key: str, path: str, required: bool = False, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = table[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key}: expected a string")
    return v


def _parse_time(v: Any, path: str) -> float:
    if isinstance(v, str):
        if v.strip().lower() == "inf":
            return math.inf
        raise ConfigError(f'{path}: only the string "inf" is accepted, else a number')
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number or \"inf\"")
    return float(v)


def _parse_window(obj: Any, dimension: int, path: str) -> Window:
    table = _expect_table(obj, path)
    kind = _get_str(table, "kind", path, required=True)
    if kind == "ball":
        center = table.get("center")
        radius = _get_number(table, "radius", path, required=True)
        if not isinstance(center, (list, tuple)) or len(center) != dimension:
            raise ConfigError(f"{path}.center: expected {dimension} coordinates")
        try:
            return Ball(tuple(float(c) for c in center), float(radius))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if kind == "box":
        lower = table.get("lower")
        upper = table.get("upper")
        for name, val in (("lower", lower), ("upper", upper)):
            if not isinstance(val, (list, tuple)) or len(val) != dimension:
                raise ConfigError(f"{path}.{name}: expected {dimension} coordinates")
        try:
            return Box(tuple(float(c) for c in lower), tuple(float(c) for c in upper))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f'{path}.kind: expected "ball" or "box"')


def _parse_layer(obj: Any, dimension: int, path: str) -> ColoredConfiguration | None:
    if obj is None:
        return None
    table = _expect_table(obj, path)
    points = table.get("points", [])
    spins = table.get("spins", [])
    if not isinstance(points, list) or not isinstance(spins, list):
        raise ConfigError(f"{path}: points and spins must be arrays")
    if len(points) != len(spins):
        raise ConfigError(f"{path}: points and spins must have equal length")
    if not points:
        return None
    rows = []
    for i, p in enumerate(points):
        if dimension == 1 and isinstance(p, (int, float)) and not isinstance(p, bool):
            p = [p]
        if not isinstance(p, (list, tuple)) or len(p) != dimension:
            raise ConfigError(f"{path}.points[{i}]: expected {dimension} coordinates")
        rows.append([float(c) for c in p])
    sp = []
    for i, s in enumerate(spins):
        if isinstance(s, bool) or (s not in _SPIN_VALUES):
            raise ConfigError(f'{path}.spins[{i}]: expected "+", "-", 1, or -1')
        sp.append(_SPIN_VALUES[s])
    return ColoredConfiguration(np.asarray(rows, dtype=np.float64), np.asarray(sp, dtype=np.int8))


class RunConfig:
    """Validated run description; see load_config."""

    def __init__(
        self,
        raw: dict,
        seed: int,
        out: str,
        replicas: int,
        params: ModelParams,
        windows: dict,
        sections: dict,
    ) -> None:
        self.raw = raw
        self.seed = seed
        self.out = out
        self.replicas = replicas
        self.params = params
        self.windows = windows
        self.sample = sections.get("sample")
        self.evolve = sections.get("evolve")
        self.kernel = sections.get("kernel")
        self.probes = sections.get("probes", {})
        self.scan = sections.get("scan")
        self.render = sections.get("render")

    def echo_dict(self) -> dict:
        body = dict(self.raw)
        body["seed"] = self.seed
        body["out"] = self.out
        body["replicas"] = self.replicas
        return body


_KNOWN_TOP = {
    "seed", "out", "replicas", "model", "windows",
    "sample", "evolve", "kernel", "probes", "scan", "render",
}


def load_config(
    path: str,
    seed_override: int | None = None,
    out_override: str | None = None,
    replicas_override: int | None = None,
) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"config file: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config file: {exc}") from None

    for key in raw:
        if key not in _KNOWN_TOP:
            raise ConfigError(f"{key}: unknown section or key")

    model = _expect_table(raw.get("model"), "model") if "model" in raw else None
    if model is None:
        raise ConfigError("model: section required")
    for key in model:
        if key not in {"dimension", "a", "lambda_plus", "lambda_minus", "t"}:
            raise ConfigError(f"model.{key}: unknown key")
    dimension = _get_int(model, "dimension", "model", required=True)
    try:
        params = ModelParams(
            dimension=dimension,
            a=_get_number(model, "a", "model", required=True),
            lambda_plus=_get_number(model, "lambda_plus", "model", required=True),
            lambda_minus=_get_number(model, "lambda_minus", "model", required=True),
            t=_parse_time(model.get("t", None), "model.t") if "t" in model else math.inf,
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("seed: required (config key or --seed)")
    if isinstance(seed, bool) or not isinstance(seed, int) or not (0 <= seed < 2**64):
        raise ConfigError("seed: must be an unsigned 64-bit integer")

    out = out_override if out_override is not None else raw.get("out", ".")
    if not isinstance(out, str):
        raise ConfigError("out: expected a string path")

    replicas = replicas_override if replicas_override is not None else raw.get("replicas", 1)
    if isinstance(replicas, bool) or not isinstance(replicas, int) or replicas < 1:
        raise ConfigError("replicas: expected a positive integer")

    windows: dict[str, Window] = {}
    if "windows" in raw:
        wtable = _expect_table(raw["windows"], "windows")
        for name in wtable:
            if name not in ("observation", "domain", "ambient"):
                raise ConfigError(f"windows.{name}: unknown window (use observation/domain/ambient)")
            windows[name] = _parse_window(wtable[name], dimension, f"windows.{name}")
    for inner, outer in (("observation", "domain"), ("domain", "ambient"), ("observation", "ambient")):
        if inner in windows and outer in windows:
            if not window_contains_window(windows[outer], windows[inner]):
                raise ConfigError(f"windows: {inner} must nest inside {outer}")
    if "ambient" in windows and not isinstance(windows["ambient"], Box):
        raise ConfigError("windows.ambient: must be a box")

    sections: dict[str, Any] = {}
    for name in ("sample", "evolve", "kernel", "probes", "scan", "render"):
        if name in raw:
            sections[name] = _expect_table(raw[name], name)

    cfg = RunConfig(raw, seed, out, replicas, params, windows, sections)
    _validate_sections(cfg)
    return cfg


def _validate_sections(cfg: RunConfig) -> None:
    if cfg.sample is not None:
        for key in cfg.sample:
            if key not in {"method", "boundary", "n_samples", "burn_in", "thinning", "dump"}:
                raise ConfigError(f"sample.{key}: unknown key")
        method = _get_str(cfg.sample, "method", "sample", default="mcmc")
        if method not in ("exact", "mcmc"):
            raise ConfigError('sample.method: expected "exact" or "mcmc"')
        boundary = _get_str(cfg.sample, "boundary", "sample", default="empty")
        if boundary not in ("empty", "plus", "minus"):
            raise ConfigError('sample.boundary: expected "empty", "plus", or "minus"')
        n = _get_int(cfg.sample, "n_samples", "sample", default=1)
        if n < 1:
            raise ConfigError("sample.n_samples: expected a positive integer")
        if "domain" not in cfg.windows:
            raise ConfigError("windows.domain: required when [sample] is present")
    if cfg.evolve is not None:
        for key in cfg.evolve:
            if key not in {"time"}:
                raise ConfigError(f"evolve.{key}: unknown key")
        if "time" not in cfg.evolve:
            raise ConfigError("evolve.time: required")
        t = _parse_time(cfg.evolve["time"], "evolve.time")
        if t < 0:
            raise ConfigError("evolve.time: must be nonnegative")
    if cfg.kernel is not None:
        _validate_kernel(cfg)
    if cfg.probes:
        for key in cfg.probes:
            if key not in set(PROBE_NAMES) | {"run"}:
                raise ConfigError(f"probes.{key}: unknown probe")
        run = cfg.probes.get("run", [])
        if not isinstance(run, list) or any(p not in PROBE_NAMES for p in run):
            raise ConfigError(f"probes.run: expected a list drawn from {PROBE_NAMES}")
        for name in PROBE_NAMES:
            if name in cfg.probes:
                _expect_table(cfg.probes[name], f"probes.{name}")
    if cfg.scan is not None:
        for key in cfg.scan:
            if key not in {"lambda_pairs", "times"}:
                raise ConfigError(f"scan.{key}: unknown key")
        pairs = cfg.scan.get("lambda_pairs")
        times = cfg.scan.get("times")
        if not isinstance(pairs, list) or not pairs or any(
            not isinstance(p, list) or len(p) != 2 for p in pairs
        ):
            raise ConfigError("scan.lambda_pairs: expected a list of [lambda_plus, lambda_minus] pairs")
        if not isinstance(times, list) or not times:
            raise ConfigError("scan.times: expected a nonempty list")
        for i, t in enumerate(times):
            _parse_time(t, f"scan.times[{i}]")
    if cfg.render is not None:
        for key in cfg.render:
            if key not in {"input"}:
                raise ConfigError(f"render.{key}: unknown key")


_KERNEL_KEYS = {
    "mode", "observable", "budget", "pinned_sign", "proposal_intensity",
    "horizon_shell", "oracle_audit", "n_max", "grid_cells", "tail_limit",
    "conditioning", "constraint",
}


def _validate_kernel(cfg: RunConfig) -> None:
    k = cfg.kernel
    for key in k:
        if key not in _KERNEL_KEYS:
            raise ConfigError(f"kernel.{key}: unknown key")
    mode = _get_str(k, "mode", "kernel", default="finite")
    try:
        KernelMode(mode)
    except ValueError:
        raise ConfigError('kernel.mode: expected "finite", "infinity", "free", or "pinned"') from None
    obs = _get_str(k, "observable", "kernel", default="indicator_empty")
    try:
        ObservableKind(obs)
    except ValueError:
        raise ConfigError(f"kernel.observable: unknown kind {obs!r}") from None
    budget = _get_int(k, "budget", "kernel", default=100_000)
    if budget < 1:
        raise ConfigError("kernel.budget: expected a positive integer")
    sign = _get_int(k, "pinned_sign", "kernel", default=1)
    if sign not in (-1, 1):
        raise ConfigError("kernel.pinned_sign: expected 1 or -1")
    if "observation" not in cfg.windows:
        raise ConfigError("windows.observation: required when [kernel] is present")
    if KernelMode(mode) is not KernelMode.FINITE and "ambient" not in cfg.windows:
        raise ConfigError("windows.ambient: required for non-finite kernel modes")
    d = cfg.params.dimension
    _parse_layer(k.get("conditioning"), d, "kernel.conditioning")
    _parse_layer(k.get("constraint"), d, "kernel.constraint")
    if k.get("oracle_audit") and d != 1:
        raise ConfigError("kernel.oracle_audit: the series audit supports dimension 1 only")


# ---------------------------------------------------------------------------
# output tray and manifest


def _jsonify(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


class OutputTray:
    """Owns all file writes for one run and records content hashes."""

    def __init__(self, out_dir: str) -> None:
        self.out_dir = out_dir
        self.records: list[dict] = []
        os.makedirs(out_dir, exist_ok=True)

    def write_text(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        with open(os.path.join(self.out_dir, name), "wb") as fh:
            fh.write(data)
        self.records = [r for r in self.records if r["file"] != name]
        self.records.append(
            {"file": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        )

    def manifest(self) -> dict:
        return {"files": sorted(self.records, key=lambda r: r["file"])}


def _suffixed(name: str, replica: int) -> str:
    if replica == 0:
        return name
    stem, dot, ext = name.rpartition(".")
    return f"{stem}_r{replica}.{ext}" if dot else f"{name}_r{replica}"


# ---------------------------------------------------------------------------
# command pieces; each returns a list of verdict strings


def _replica_streams(cfg: RunConfig) -> list[RngStream]:
    base = RngStream(cfg.seed)
    return [base.child(k) for k in range(cfg.replicas)]


def _boundary(cfg: RunConfig) -> BoundaryCondition:
    name = _get_str(cfg.sample, "boundary", "sample", default="empty")
    return {
        "empty": BoundaryCondition.empty,
        "plus": BoundaryCondition.all_plus,
        "minus": BoundaryCondition.all_minus,
    }[name]()


def _sample_configs(cfg: RunConfig, stream: RngStream) -> list[ColoredConfiguration]:
    if cfg.sample is None:
        raise ConfigError("sample: section required")
    domain = cfg.windows["domain"]
    method = _get_str(cfg.sample, "method", "sample", default="mcmc")
    n = _get_int(cfg.sample, "n_samples", "sample", default=1)
    bc = _boundary(cfg)
    if method == "exact":
        return [
            sample_wrm_exact(domain, cfg.params, bc, stream.child(i).generator())
            for i in range(n)
        ]
    kwargs = {}
    burn = _get_int(cfg.sample, "burn_in", "sample")
    thin = _get_int(cfg.sample, "thinning", "sample")
    if burn is not None:
        kwargs["burn_in"] = burn
    if thin is not None:
        kwargs["thinning"] = thin
    return sample_wrm_mcmc(
        domain, cfg.params, bc, stream.child(0).generator(), n_samples=n, **kwargs
    )


def _dump_configs(tray: OutputTray, name: str, configs: Sequence[ColoredConfiguration]) -> None:
    tray.write_text(name, "".join(config_to_json(c) + "\n" for c in configs))


def _load_configs(path: str) -> list[ColoredConfiguration]:
    try:
        with open(path, "r") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"input file: {exc}") from None
    configs = []
    for i, ln in enumerate(lines):
        try:
            c = config_from_json(ln)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"input file line {i + 1}: {exc}") from None
        if not isinstance(c, ColoredConfiguration):
            raise ConfigError(f"input file line {i + 1}: expected a colored configuration")
        configs.append(c)
    if not configs:
        raise ConfigError("input file: no configurations found")
    return configs


def cmd_sample(cfg: RunConfig, tray: OutputTray, _args: argparse.Namespace) -> list[str]:
    for k, stream in enumerate(_replica_streams(cfg)):
        configs = _sample_configs(cfg, stream.child(0))
        _dump_configs(tray, _suffixed("samples.jsonl", k), configs)
    return []


def cmd_evolve(
    cfg: RunConfig,
    tray: OutputTray,
    args: argparse.Namespace,
    presampled: list[list[ColoredConfiguration]] | None = None,
) -> list[str]:
    if cfg.evolve is None:
        raise ConfigError("evolve: section required")
    t = _parse_time(cfg.evolve["time"], "evolve.time")
    source = getattr(args, "input", None)
    for k, stream in enumerate(_replica_streams(cfg)):
        if source:
            configs = _load_configs(source)
        elif presampled is not None:
            configs = presampled[k]
        else:
            configs = _sample_configs(cfg, stream.child(0))
            _dump_configs(tray, _suffixed("samples.jsonl", k), configs)
        evolved = [
            evolve_spinflip(c, t, stream.child(1, i).generator())
            for i, c in enumerate(configs)
        ]
        _dump_configs(tray, _suffixed("evolved.jsonl", k), evolved)
    return []


def _estimate_dict(est) -> dict:
    return {
        "value": est.value,
        "std_error": est.std_error,
        "n_samples": est.n_samples,
        "ess": est.ess,
        "max_log_weight": est.max_log_weight,
        "min_log_weight": est.min_log_weight,
        "notes": list(est.notes),
    }


def cmd_kernel(cfg: RunConfig, tray: OutputTray, _args: argparse.Namespace) -> list[str]:
    if cfg.kernel is None:
        raise ConfigError("kernel: section required")
    k = cfg.kernel
    mode = KernelMode(_get_str(k, "mode", "kernel", default="finite"))
    observable = Observable(ObservableKind(_get_str(k, "observable", "kernel", default="indicator_empty")))
    budget = _get_int(k, "budget", "kernel", default=100_000)
    sign = _get_int(k, "pinned_sign", "kernel", default=1)
    d = cfg.params.dimension
    switch = _parse_layer(k.get("conditioning"), d, "kernel.conditioning")
    constraint = _parse_layer(k.get("constraint"), d, "kernel.constraint")
    window = cfg.windows["observation"]
    ambient = cfg.windows.get("ambient")
    shell = _get_number(k, "horizon_shell", "kernel")
    proposal = _get_number(k, "proposal_intensity", "kernel")
    switch = switch if switch is not None else ColoredConfiguration.empty(d)

    verdicts: list[str] = []
    replicas_out = []
    for stream in _replica_streams(cfg):
        fam = eval_kernel_family(
            mode,
            observable,
            window,
            [switch],
            cfg.params,
            budget,
            stream.generator(),
            ambient=ambient if mode is not KernelMode.FINITE else None,
            horizon_shell=shell,
            pinned_sign=sign,
            constraint_layers=[constraint] if mode is KernelMode.FINITE else None,
            proposal_intensity=proposal,
        )
        est = fam.estimates[0]
        entry: dict[str, Any] = {"estimate": _estimate_dict(est)}
        if k.get("oracle_audit"):
            oracle = oracle_eval(
                observable,
                window,
                cfg.params,
                cond_inside=switch if switch.n else None,
                cond_outside=constraint,
                ambient=ambient,
                mode=mode,
                pinned_sign=sign,
                n_max=_get_int(k, "n_max", "kernel", default=6),
                grid_cells=_get_int(k, "grid_cells", "kernel", default=1024),
                tail_limit=_get_number(k, "tail_limit", "kernel", default=0.05),
            )
            gap = abs(est.value - oracle.value)
            tolerance = 3.0 * est.std_error + oracle.error_bound
            verdict = "consistent" if gap <= tolerance else VERDICT_VIOLATED
            entry["oracle"] = {
                "value": oracle.value,
                "error_bound": oracle.error_bound,
                "gap": gap,
                "tolerance": tolerance,
                "verdict": verdict,
            }
            verdicts.append(verdict)
        replicas_out.append(entry)

    payload = {
        "mode": mode.value,
        "observable": observable.kind.value,
        "budget": budget,
        "replicas": replicas_out,
    }
    tray.write_text("kernel.json", json.dumps(_jsonify(payload), indent=2, sort_keys=True) + "\n")
    return verdicts


_PROBE_SETTINGS = {
    "decay": {"budget", "distances", "spacing", "head_gap", "jitter"},
    "color": {"budget", "distances", "spacing", "head_gap"},
    "spatial": {"budget", "lengths", "spacing", "head_gap", "jitter"},
    "percolation": {
        "sizes", "n_samples", "n_comparator", "burn_in", "thinning", "source_radius",
    },
}

_PROBE_FUNCS = {
    "decay": probe_decay,
    "color": probe_color_discontinuity,
    "spatial": probe_spatial_discontinuity,
    "percolation": probe_percolation,
}


def _probe_kwargs(cfg: RunConfig, name: str) -> dict:
    table = cfg.probes.get(name, {})
    allowed = _PROBE_SETTINGS[name]
    kwargs = {}
    for key, value in table.items():
        if key not in allowed:
            raise ConfigError(f"probes.{name}.{key}: unknown setting")
        if isinstance(value, list):
            kwargs[key] = tuple(float(v) for v in value)
        else:
            kwargs[key] = value
    return kwargs


def cmd_probe(cfg: RunConfig, tray: OutputTray, name: str) -> list[str]:
    func = _PROBE_FUNCS[name]
    kwargs = _probe_kwargs(cfg, name)
    verdicts = []
    for k, stream in enumerate(_replica_streams(cfg)):
        try:
            report = func(cfg.params, stream, **kwargs)
        except TypeError as exc:
            raise ConfigError(f"probes.{name}: {exc}") from None
        tray.write_text(_suffixed(f"probe_{name}.csv", k), report.to_csv())
        tray.write_text(_suffixed(f"probe_{name}.json", k), report.to_json())
        print(f"probe_{name}[{k}]: {report.verdict}")
        verdicts.append(report.verdict)
    return verdicts


def cmd_scan(cfg: RunConfig, tray: OutputTray, _args: argparse.Namespace) -> list[str]:
    if cfg.scan is None:
        raise ConfigError("scan: section required")
    pairs = [(float(p[0]), float(p[1])) for p in cfg.scan["lambda_pairs"]]
    times = [_parse_time(t, "scan.times") for t in cfg.scan["times"]]
    rows = scan_phase_diagram(cfg.params.a, cfg.params.dimension, pairs, times)
    tray.write_text("phase_scan.csv", phase_scan_csv(rows))
    return []


def cmd_render(cfg: RunConfig, tray: OutputTray, args: argparse.Namespace) -> list[str]:
    source = getattr(args, "input", None)
    if source is None and cfg.render is not None:
        source = cfg.render.get("input")
    if source:
        config = _load_configs(source)[0]
    elif cfg.sample is not None:
        config = _sample_configs(cfg, RngStream(cfg.seed).child(0, 0))[0]
    else:
        config = ColoredConfiguration.empty(cfg.params.dimension)
    wins = [cfg.windows[n] for n in ("observation", "domain", "ambient") if n in cfg.windows]
    tray.write_text("render.svg", render_svg(config, cfg.params.a, windows=wins))
    return []


def cmd_run(cfg: RunConfig, tray: OutputTray, args: argparse.Namespace) -> list[str]:
    verdicts: list[str] = []
    presampled: list[list[ColoredConfiguration]] | None = None
    if cfg.sample is not None:
        presampled = []
        for k, stream in enumerate(_replica_streams(cfg)):
            configs = _sample_configs(cfg, stream.child(0))
            if cfg.sample.get("dump", True):
                _dump_configs(tray, _suffixed("samples.jsonl", k), configs)
            presampled.append(configs)
    if cfg.evolve is not None:
        verdicts += cmd_evolve(cfg, tray, args, presampled=presampled)
    if cfg.kernel is not None:
        verdicts += cmd_kernel(cfg, tray, args)
    for name in cfg.probes.get("run", []):
        verdicts += cmd_probe(cfg, tray, name)
    if cfg.scan is not None:
        verdicts += cmd_scan(cfg, tray, args)
    if cfg.render is not None:
        verdicts += cmd_render(cfg, tray, args)
    return verdicts


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> _Parser:
    parser = _Parser(prog="wrmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "sample": "draw equilibrium configurations and dump them",
        "evolve": "apply independent spin flips to configurations",
        "kernel": "evaluate one conditional kernel (optional series audit)",
        "probe-decay": "influence decay along a bonded channel",
        "probe-color": "color sensitivity to an arbitrarily distant tail",
        "probe-spatial": "sensitivity to far-away chain surgery",
        "probe-percolation": "sandwich the grey connection probability",
        "scan": "tabulate the phase classification over a grid",
        "render": "render a configuration to SVG",
        "run": "execute every section present in the config",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--replicas", type=int, default=None, help="independent repetitions")
        if name in ("evolve", "render"):
            p.add_argument("--input", default=None, help="configuration dump to read instead of sampling")
    return parser


def _exit_code(verdicts: Sequence[str]) -> int:
    if any(v == VERDICT_VIOLATED for v in verdicts):
        return EXIT_VIOLATED
    if any(v == VERDICT_INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.replicas)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    tray = OutputTray(cfg.out)
    dispatch = {
        "sample": cmd_sample,
        "evolve": cmd_evolve,
        "kernel": cmd_kernel,
        "scan": cmd_scan,
        "render": cmd_render,
        "run": cmd_run,
    }
    try:
        if args.command.startswith("probe-"):
            verdicts = cmd_probe(cfg, tray, args.command.removeprefix("probe-"))
        else:
            verdicts = dispatch[args.command](cfg, tray, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    tray.write_text(
        "config_echo.json", json.dumps(_jsonify(cfg.echo_dict()), indent=2, sort_keys=True) + "\n"
    )
    manifest = tray.manifest()
    with open(os.path.join(cfg.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return _exit_code(verdicts)


if __name__ == "__main__":
    sys.exit(main())
