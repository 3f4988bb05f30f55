"""Experiment configuration: a TOML file with a fixed schema.

::

    [model]
    family = "brownian"        # brownian | power | multiplex_fbm | srd_exponential | lrd_power | tabulated
    rate = 1.0                 # family parameters (see MODEL_FAMILIES)

    [process]
    c = 1.0
    gamma = [0.5]              # each in (0, 1)
    u = [2.5, 3.0, 3.5]        # strictly increasing, positive
    horizon = 1.0              # positive number or "inf"

    [grid]
    delta = 6.103515625e-05    # finite horizon: grid step (<= horizon / 2^10)
    delta_rel = 1e-3           # infinite horizon: step relative to the window width
    window_k = 6.0             # infinite horizon: truncation multiplier

    [mc]
    n = 100000
    seed = 1

    [constants]
    source = "closed_form"     # closed_form | estimate | literal
    scaling = "exact"          # exact | leading
    # estimate: n, seed, S1 (Piterbarg horizon in natural units)
    # literal: pickands, piterbarg (number or one per gamma), note (required)

    [passages]                 # optional
    u = 3.0
    gamma = 0.5                # default: first gamma
    n_target = 2000
    delta = 6.103515625e-05    # default: the ruin grid step
    budget = 1000000000
    bins = 30

    [output]
    dir = "results"
    plots = false              # SVG plots (needs matplotlib)
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import asdict, dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import tomli_w

from .variance_models import (
    VarianceModel,
    brownian_model,
    exponential_correlation,
    integrated_model,
    multiplex_fbm_model,
    power_correlation,
    power_model,
    tabulated_correlation,
)

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "dump_config", "build_model",
           "MODEL_FAMILIES"]

MODEL_FAMILIES = {
    "brownian": {"rate": (float, 1.0)},
    "power": {"alpha": (float, None), "scale": (float, 1.0)},
    "multiplex_fbm": {"hurst": (list, None)},
    "srd_exponential": {"rate": (float, 1.0)},
    "lrd_power": {"hurst": (float, None)},
    "tabulated": {"t": (list, None), "values": (list, None), "kind": (str, "SRD"), "hurst": (float, None)},
}
CONSTANT_SOURCES = ("closed_form", "estimate", "literal")
_TABLES = ("model", "process", "grid", "mc", "constants", "passages", "output")


class ConfigError(ValueError):
    """Schema violation, reported with the table, key and (when known) line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key:
            where = f"[{key}]" if line is None else f"[{key}] line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass
class ExperimentConfig:
    model: dict
    c: float
    gammas: list
    us: list
    horizon: float
    n: int
    seed: int
    delta: float | None = None
    delta_rel: float | None = None
    window_k: float = 6.0
    constants: dict = field(default_factory=lambda: {"source": "closed_form"})
    scaling: str = "exact"
    passages: dict | None = None
    output_dir: str = "results"
    plots: bool = False

    @property
    def infinite(self) -> bool:
        return math.isinf(self.horizon)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["horizon"] = "inf" if self.infinite else self.horizon
        return d


def _locate(text: str, table: str, key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[table]`` (or of the table header)."""
    current = None
    header = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if current == table:
                header = i
            continue
        if current == table and key is not None and re.match(rf"{re.escape(key)}\s*=", s):
            return i
    return header


class _Reader:
    def __init__(self, data: dict, text: str):
        self.data, self.text = data, text

    def fail(self, table: str, key: str | None, message: str):
        raise ConfigError(message, f"{table}.{key}" if key else table, _locate(self.text, table, key))

    def table(self, name: str, required: bool = True) -> dict:
        t = self.data.get(name)
        if t is None:
            if required:
                raise ConfigError(f"missing table [{name}]", name)
            return {}
        if not isinstance(t, dict):
            self.fail(name, None, "must be a table")
        return t

    def get(self, table: str, key: str, kind, default=None, required: bool = False):
        t = self.data.get(table) or {}
        if key not in t:
            if required:
                self.fail(table, None, f"missing key {key!r}")
            return default
        v = t[key]
        try:
            if kind is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise TypeError
                v = float(v)
                if not math.isfinite(v):
                    raise TypeError
            elif kind is int:
                if isinstance(v, bool) or not isinstance(v, int):
                    if isinstance(v, float) and v.is_integer():
                        v = int(v)
                    else:
                        raise TypeError
            elif kind is list:
                if not isinstance(v, list):
                    raise TypeError
            elif kind is str:
                if not isinstance(v, str):
                    raise TypeError
            elif kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
        except TypeError:
            self.fail(table, key, f"expected {kind.__name__}, got {v!r}")
        return v

    def float_list(self, table: str, key: str, required: bool = True) -> list:
        v = self.get(table, key, list, required=required)
        if v is None:
            return []
        if isinstance(v, (int, float)):
            v = [v]
        out = []
        for x in v:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                self.fail(table, key, f"expected numbers, got {x!r}")
            out.append(float(x))
        return out


def _scalar_or_list(reader: _Reader, table: str, key: str) -> list:
    t = reader.data.get(table) or {}
    if key in t and isinstance(t[key], (int, float)) and not isinstance(t[key], bool):
        return [float(t[key])]
    return reader.float_list(table, key)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML configuration string."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", None, int(m.group(1)) if m else None) from exc
    r = _Reader(data, text)
    for name in data:
        if name not in _TABLES:
            r.fail(name, None, f"unknown table; expected one of {', '.join(_TABLES)}")

    r.table("model")
    family = r.get("model", "family", str, required=True)
    if family not in MODEL_FAMILIES:
        r.fail("model", "family", f"unknown family {family!r}; expected one of {', '.join(MODEL_FAMILIES)}")
    model = {"family": family}
    schema = MODEL_FAMILIES[family]
    for key in data["model"]:
        if key != "family" and key not in schema:
            r.fail("model", key, f"unknown parameter for family {family!r}")
    for key, (kind, default) in schema.items():
        if kind is list:
            v = r.float_list("model", key, required=default is None and not (family == "tabulated" and key == "hurst"))
        else:
            v = r.get("model", key, kind, default)
        if v is None and not (family == "tabulated" and key == "hurst"):
            r.fail("model", None, f"missing key {key!r}")
        if v is not None:
            model[key] = v

    r.table("process")
    c = r.get("process", "c", float, required=True)
    if not c > 0:
        r.fail("process", "c", "must be positive")
    gammas = _scalar_or_list(r, "process", "gamma")
    if not gammas:
        r.fail("process", "gamma", "needs at least one value")
    if any(not 0.0 < g < 1.0 for g in gammas):
        r.fail("process", "gamma", "every gamma must lie in (0, 1)")
    if len(set(gammas)) != len(gammas):
        r.fail("process", "gamma", "values must be distinct")
    us = _scalar_or_list(r, "process", "u")
    if not us:
        r.fail("process", "u", "the u ladder is empty")
    if any(u <= 0 for u in us):
        r.fail("process", "u", "every u must be positive")
    if any(b <= a for a, b in zip(us, us[1:])):
        r.fail("process", "u", "the u ladder must be strictly increasing")
    h = (data["process"] or {}).get("horizon")
    if h is None:
        r.fail("process", None, "missing key 'horizon'")
    if isinstance(h, str):
        if h.lower() not in ("inf", "infinity"):
            r.fail("process", "horizon", "must be a positive number or \"inf\"")
        horizon = math.inf
    else:
        horizon = r.get("process", "horizon", float)
        if not horizon > 0:
            r.fail("process", "horizon", "must be positive")

    r.table("grid")
    delta = r.get("grid", "delta", float)
    delta_rel = r.get("grid", "delta_rel", float)
    window_k = r.get("grid", "window_k", float, 6.0)
    if math.isinf(horizon):
        if delta_rel is None:
            r.fail("grid", None, "infinite horizon needs 'delta_rel'")
        if not (0 < delta_rel < 1):
            r.fail("grid", "delta_rel", "must lie in (0, 1)")
        if not window_k > 0:
            r.fail("grid", "window_k", "must be positive")
    else:
        if delta is None:
            r.fail("grid", None, "finite horizon needs 'delta'")
        if not delta > 0:
            r.fail("grid", "delta", "must be positive")
        if delta > horizon / 1024 * (1 + 1e-12):
            r.fail("grid", "delta", f"must not exceed horizon / 2^10 = {horizon / 1024:g}")
        k = horizon / delta
        if abs(k - round(k)) > 1e-9 * k:
            r.fail("grid", "delta", "horizon must be a whole number of grid steps")

    r.table("mc")
    n = r.get("mc", "n", int, required=True)
    if n < 100:
        r.fail("mc", "n", "must be at least 100")
    seed = r.get("mc", "seed", int, required=True)
    if seed < 0:
        r.fail("mc", "seed", "must be nonnegative")

    ct = r.table("constants", required=False)
    source = r.get("constants", "source", str, "closed_form")
    if source not in CONSTANT_SOURCES:
        r.fail("constants", "source", f"expected one of {', '.join(CONSTANT_SOURCES)}")
    scaling = r.get("constants", "scaling", str, "exact")
    if scaling not in ("exact", "leading"):
        r.fail("constants", "scaling", "expected 'exact' or 'leading'")
    constants: dict[str, Any] = {"source": source}
    allowed = {"source", "scaling"}
    if source == "estimate":
        allowed |= {"n", "seed", "S1"}
        constants["n"] = r.get("constants", "n", int, 4000)
        constants["seed"] = r.get("constants", "seed", int, seed)
        constants["S1"] = r.get("constants", "S1", float, 32.0)
        if constants["n"] < 100:
            r.fail("constants", "n", "must be at least 100")
        if not constants["S1"] > 0:
            r.fail("constants", "S1", "must be positive")
    elif source == "literal":
        allowed |= {"pickands", "piterbarg", "note"}
        note = r.get("constants", "note", str)
        if not note:
            r.fail("constants", "note", "literal constants need a provenance note")
        constants["note"] = note
        if "pickands" in ct:
            constants["pickands"] = r.get("constants", "pickands", float)
        if "piterbarg" in ct:
            p = _scalar_or_list(r, "constants", "piterbarg")
            if len(p) not in (1, len(gammas)):
                r.fail("constants", "piterbarg", "give one value or one per gamma")
            constants["piterbarg"] = p
        for key in ("pickands",):
            if key in constants and not constants[key] > 0:
                r.fail("constants", key, "must be positive")
        if any(p <= 0 for p in constants.get("piterbarg", [])):
            r.fail("constants", "piterbarg", "must be positive")
    for key in ct:
        if key not in allowed:
            r.fail("constants", key, f"unknown key for source {source!r}")

    passages = None
    if "passages" in data:
        r.table("passages")
        pu = r.get("passages", "u", float, required=True)
        if not pu > 0:
            r.fail("passages", "u", "must be positive")
        pg = r.get("passages", "gamma", float, gammas[0])
        if not 0 <= pg <= 1:
            r.fail("passages", "gamma", "must lie in [0, 1]")
        nt = r.get("passages", "n_target", int, 2000)
        if nt < 200:
            r.fail("passages", "n_target", "must be at least 200")
        pdelta = r.get("passages", "delta", float)
        if pdelta is not None and not pdelta > 0:
            r.fail("passages", "delta", "must be positive")
        budget = r.get("passages", "budget", int, 10 ** 9)
        if budget < 1:
            r.fail("passages", "budget", "must be positive")
        bins = r.get("passages", "bins", int, 30)
        if bins < 2:
            r.fail("passages", "bins", "must be at least 2")
        for key in data["passages"]:
            if key not in ("u", "gamma", "n_target", "delta", "budget", "bins"):
                r.fail("passages", key, "unknown key")
        passages = {"u": pu, "gamma": pg, "n_target": nt, "budget": budget, "bins": bins}
        if pdelta is not None:
            passages["delta"] = pdelta

    r.table("output", required=False)
    out = r.get("output", "dir", str, "results")
    plots = r.get("output", "plots", bool, False)

    cfg = ExperimentConfig(model=model, c=c, gammas=gammas, us=us, horizon=horizon, n=n, seed=seed,
                           delta=None if math.isinf(horizon) else delta,
                           delta_rel=delta_rel if math.isinf(horizon) else None,
                           window_k=window_k, constants=constants, scaling=scaling, passages=passages,
                           output_dir=out, plots=plots)
    try:
        build_model(cfg.model)
    except ValueError as exc:
        raise ConfigError(str(exc), "model", _locate(text, "model", None)) from exc
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    """TOML text that parses back to ``cfg``."""
    data: dict[str, Any] = {
        "model": dict(cfg.model),
        "process": {"c": cfg.c, "gamma": list(cfg.gammas), "u": list(cfg.us),
                    "horizon": "inf" if cfg.infinite else cfg.horizon},
        "grid": ({"delta_rel": cfg.delta_rel, "window_k": cfg.window_k} if cfg.infinite
                 else {"delta": cfg.delta, "window_k": cfg.window_k}),
        "mc": {"n": cfg.n, "seed": cfg.seed},
        "constants": {**cfg.constants, "scaling": cfg.scaling},
        "output": {"dir": cfg.output_dir, "plots": cfg.plots},
    }
    if cfg.passages is not None:
        data["passages"] = dict(cfg.passages)
    return tomli_w.dumps(data)


def build_model(spec: dict) -> VarianceModel:
    """Variance model for a ``[model]`` table."""
    family = spec["family"]
    if family == "brownian":
        return brownian_model(spec.get("rate", 1.0))
    if family == "power":
        return power_model(spec["alpha"], spec.get("scale", 1.0))
    if family == "multiplex_fbm":
        return multiplex_fbm_model(spec["hurst"])
    if family == "srd_exponential":
        return integrated_model(exponential_correlation(spec.get("rate", 1.0)))
    if family == "lrd_power":
        return integrated_model(power_correlation(spec["hurst"]))
    if family == "tabulated":
        corr = tabulated_correlation(spec["t"], spec["values"], spec.get("kind", "SRD"), spec.get("hurst"))
        return integrated_model(corr)
    raise ValueError(f"unknown model family {family!r}")
