"""TOML model configuration.

Schema (all times in the model's time unit)::

    mu = 1.0            # death rate, > 0
    x_m = 0.0           # minimal height, >= 0
    rho = 0.5           # phase-space weight, 0 < rho < mu

    [beta]
    family = "affine"   # ramp | affine | table
    params = [0.0, 2.0] # ramp: [c, x_A]; affine: [d, c]; table: [[x, y], ...]

    [g]
    family = "exp_decay"  # exp_decay | rational_decay | table
    params = [1.0, 1.0]   # [g0, k] or [[x, y], ...]

    [history]           # optional; default is the constant history 1
    S = 10.0
    h = 0.02
    constant = 1.0      # exactly one of: constant, samples, oscillation
    # samples = [...]   # values at s = -S, -S + h, ..., 0
    # oscillation = {base = 1.0, amplitude = 0.5, frequency = 1.0}
    tail = "constant"   # "constant" | "zero" | a number (constant tail value)

    [solver]            # optional
    h = 0.02
    T = 80.0
    trunc_tol = 1e-10

    [verify]            # optional
    scenarios = [{constant = 0.1}, {oscillation = {base = 1.0, amplitude = 0.5}}]
    pairs = 20
    majorant_scenarios = 10
    pair_T = 20.0

Errors raise :class:`ConfigError` naming the key path and, when it can be
located, the line in the file.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import History, ModelError, ModelParams, RateSpec


class ConfigError(ValueError):
    def __init__(self, key: str, message: str, line: Optional[int] = None):
        self.key, self.line = key, line
        where = f" (line {line})" if line else ""
        super().__init__(f"{key}{where}: {message}")


@dataclass(frozen=True)
class HistorySpec:
    """A history described independently of the grid step, so it can be rebuilt at any h."""

    S: float
    kind: str                      # constant | samples | oscillation
    value: Any                     # float, sample array, or (base, amplitude, frequency)
    tail: str = "constant"
    tail_value: Optional[float] = None
    sample_step: Optional[float] = None

    def build(self, h: float) -> History:
        if self.kind == "constant":
            c = float(self.value)
            n = int(round(self.S / h))
            tv = c if self.tail_value is None else self.tail_value
            return History(self.S, h, np.full(n + 1, c), self.tail, tv)
        if self.kind == "oscillation":
            base, amp, freq = self.value
            tv = base if self.tail_value is None else self.tail_value
            return History.from_function(lambda s: base + amp * np.sin(freq * s), self.S, h,
                                         self.tail, tv)
        tv = float(self.value[0]) if self.tail_value is None else self.tail_value
        hist = History(self.S, self.sample_step, np.asarray(self.value), self.tail, tv)
        return hist.resample(h)

    @property
    def max_value(self) -> float:
        if self.kind == "constant":
            top = float(self.value)
        elif self.kind == "oscillation":
            top = self.value[0] + abs(self.value[1])
        else:
            top = float(np.max(self.value))
        return max(top, self.tail_value or 0.0)


@dataclass(frozen=True)
class SolverSettings:
    h: float = 0.02
    T: float = 80.0
    trunc_tol: float = 1e-10


@dataclass(frozen=True)
class VerifySettings:
    scenarios: tuple = ()
    pairs: int = 20
    majorant_scenarios: int = 10
    pair_T: float = 20.0


@dataclass(frozen=True)
class ModelConfig:
    params: ModelParams
    history: HistorySpec
    solver: SolverSettings = SolverSettings()
    verify: VerifySettings = VerifySettings()
    digest: str = ""
    source: str = field(default="", compare=False)


def _line_of(text: str, path: str) -> Optional[int]:
    """Best-effort line number of a dotted key in TOML source."""
    path = re.sub(r"\[\d+\]", "", path)
    parts = path.split(".")
    lines = text.splitlines()
    section, key = ".".join(parts[:-1]), parts[-1]
    start = 0
    if section:
        hdr = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
        for i, ln in enumerate(lines):
            if hdr.match(ln):
                start = i + 1
                break
        else:
            # inline tables and arrays: fall back to the enclosing key
            return _line_of(text, section) if len(parts) > 1 else None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if re.match(r"^\s*\[", lines[i]):
            break
        if pat.match(lines[i]):
            return i + 1
    return start or None


class _Reader:
    def __init__(self, data: dict, text: str):
        self.data, self.text = data, text

    def fail(self, path: str, msg: str):
        raise ConfigError(path, msg, _line_of(self.text, path))

    def get(self, path: str, default=Ellipsis):
        node = self.data
        for p in path.split("."):
            if not isinstance(node, dict) or p not in node:
                if default is Ellipsis:
                    self.fail(path, "missing required key")
                return default
            node = node[p]
        return node

    def number(self, path: str, default=Ellipsis) -> float:
        v = self.get(path, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        return float(v)

    def integer(self, path: str, default=Ellipsis) -> int:
        v = self.get(path, default)
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(path, f"expected an integer, got {v!r}")
        return v


def _rate(r: _Reader, section: str, kind: str) -> RateSpec:
    family = r.get(f"{section}.family")
    raw = r.get(f"{section}.params")
    if not isinstance(raw, list):
        r.fail(f"{section}.params", "expected a list")
    try:
        if family == "table":
            if not all(isinstance(p, list) and len(p) == 2 for p in raw):
                r.fail(f"{section}.params", "table params must be a list of [x, y] pairs")
            return RateSpec.table([float(p[0]) for p in raw], [float(p[1]) for p in raw], kind)
        return RateSpec(str(family), tuple(float(p) for p in raw), kind)
    except (ModelError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        r.fail(f"{section}.params" if family in ("ramp", "affine", "table", "exp_decay",
                                                 "rational_decay") else f"{section}.family", str(exc))


def _history(r: _Reader, node: dict, path: str, default_S: float = 10.0) -> HistorySpec:
    if not isinstance(node, dict):
        r.fail(path, "expected a table")
    given = [k for k in ("constant", "samples", "oscillation") if k in node]
    if len(given) != 1:
        r.fail(path, "give exactly one of constant, samples, oscillation")
    kind = given[0]
    S = node.get("S", default_S)
    if isinstance(S, bool) or not isinstance(S, (int, float)) or S <= 0:
        r.fail(f"{path}.S", "history span must be a positive number")
    tail = node.get("tail", "constant")
    tail_value = None
    if isinstance(tail, (int, float)) and not isinstance(tail, bool):
        tail_value, tail = float(tail), "constant"
    elif tail not in ("constant", "zero"):
        r.fail(f"{path}.tail", "tail must be 'constant', 'zero' or a number")
    step = None
    if kind == "constant":
        value = node["constant"]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            r.fail(f"{path}.constant", "expected a non-negative number")
        value = float(value)
    elif kind == "samples":
        value = node["samples"]
        if not isinstance(value, list) or len(value) < 2:
            r.fail(f"{path}.samples", "expected a list of at least two values")
        value = np.asarray(value, dtype=float)
        step = node.get("h")
        if step is None:
            r.fail(f"{path}.h", "sampled histories need their sample step h")
        if abs((len(value) - 1) * step - S) > 1e-9 * S:
            r.fail(f"{path}.samples", f"{len(value)} samples do not span S={S} at step {step}")
        if np.any(value < 0):
            r.fail(f"{path}.samples", "history values must be non-negative")
    else:
        osc = node["oscillation"]
        if not isinstance(osc, dict):
            r.fail(f"{path}.oscillation", "expected {base, amplitude, frequency}")
        base = float(osc.get("base", 1.0))
        amp = float(osc.get("amplitude", 0.5))
        freq = float(osc.get("frequency", 1.0))
        if abs(amp) > base:
            r.fail(f"{path}.oscillation", "amplitude larger than base makes the history negative")
        value = (base, amp, freq)
    return HistorySpec(float(S), kind, value, tail, tail_value, step)


def parse_config(text: str, source: str = "<string>") -> ModelConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError("<document>", str(exc), line) from None
    r = _Reader(data, text)
    beta = _rate(r, "beta", "beta")
    g = _rate(r, "g", "g")
    try:
        params = ModelParams(r.number("mu"), r.number("x_m", 0.0), r.number("rho"), beta, g)
    except ModelError as exc:
        key = "rho" if "rho" in str(exc) else "mu"
        r.fail(key, str(exc))

    hist = _history(r, data.get("history", {"constant": 1.0}), "history")
    solver = SolverSettings(r.number("solver.h", SolverSettings.h),
                            r.number("solver.T", SolverSettings.T),
                            r.number("solver.trunc_tol", SolverSettings.trunc_tol))
    raw_sc = r.get("verify.scenarios", [])
    if not isinstance(raw_sc, list):
        r.fail("verify.scenarios", "expected a list of history tables")
    scen = tuple(_history(r, node, f"verify.scenarios[{i}]", hist.S) for i, node in enumerate(raw_sc))
    verify = VerifySettings(scen, r.integer("verify.pairs", 20),
                            r.integer("verify.majorant_scenarios", 10),
                            r.number("verify.pair_T", 20.0))
    digest = hashlib.sha256(text.encode()).hexdigest()
    return ModelConfig(params, hist, solver, verify, digest, source)


def load_config(path) -> ModelConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
