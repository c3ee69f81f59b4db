"""Run configuration.

Files are INI-style with sections ``[run] [domain] [target] [potential]
[flow] [checks] [stability] [output]``, or flat ``section.key = value``
lines.  Unknown keys are rejected.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domain import CHART_NAMES, TWO_PI
from .errors import ConfigError, ValidationError
from .flow import INITIAL_KINDS, FlowOptions
from .target import POTENTIAL_KINDS

CHECK_SUITES = ("first_variation", "divergence_identity", "second_variation")


@dataclass
class DomainConfig:
    name: str = "twisted-torus"
    resolution: tuple = (16, 16, 16)
    periods: tuple = (TWO_PI, TWO_PI, TWO_PI)
    order: int = 4


@dataclass
class TargetConfig:
    kind: str = "sphere"
    n: int = 2


@dataclass
class PotentialConfig:
    kind: str = "constant"
    params: dict = field(default_factory=dict)


@dataclass
class FlowConfig:
    options: FlowOptions = field(default_factory=FlowOptions)
    initial: str = "wrap"
    point: Optional[tuple] = None


@dataclass
class ChecksConfig:
    suites: tuple = CHECK_SUITES
    levels: tuple = (8, 16, 32)
    charts: tuple = ()
    orders: tuple = ()
    dt: Optional[float] = None
    literal_hessian_sign: bool = False
    amplitude: float = 0.5


@dataclass
class StabilityConfig:
    samples: int = 200
    iters: int = 100
    margin: Optional[float] = None
    slack: float = 1e-8
    tension_threshold: Optional[float] = None


@dataclass
class RunConfig:
    seed: int = 0
    domain: DomainConfig = field(default_factory=DomainConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    out: str = "out"

    @property
    def tension_threshold(self) -> float:
        if self.stability.tension_threshold is not None:
            return self.stability.tension_threshold
        return 10.0 * self.flow.options.tol


_PI_RE = re.compile(r"^\s*([-+0-9.eE]*)\s*\*?\s*pi\s*$")


def _float(text: str) -> float:
    text = text.strip()
    m = _PI_RE.match(text)
    try:
        if m:
            coef = m.group(1)
            return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}") from None


def _list(text: str) -> list[str]:
    text = text.strip().strip("[]()")
    return [t.strip() for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _params(text: str) -> dict:
    out = {}
    for item in _list(text.replace(";", ",")):
        if "=" not in item and ":" not in item:
            raise ConfigError(f"potential params must be name=value pairs, got {item!r}")
        k, v = re.split(r"[=:]", item, maxsplit=1)
        out[k.strip()] = _float(v)
    return out


def _read_sections(text: str) -> dict[str, dict[str, str]]:
    if re.search(r"^\s*\[[^\]]+\]\s*$", text, re.MULTILINE):
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        return {s: dict(cp.items(s)) for s in cp.sections()}
    sections: dict[str, dict[str, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: flat keys must look like section.key, got {key!r}")
        sec, sub = key.split(".", 1)
        sections.setdefault(sec, {})[sub] = value
    return sections


_KNOWN = {
    "run": {"seed"},
    "domain": {"name", "resolution", "periods", "order"},
    "target": {"kind", "n"},
    "potential": {"kind", "params", "value", "coef"},
    "flow": {"dt", "tol", "max_steps", "backtrack", "backtracking", "initial", "point", "checkpoint_every"},
    "checks": {"suites", "levels", "charts", "orders", "dt", "literal_hessian_sign", "amplitude"},
    "stability": {"samples", "iters", "margin", "slack", "tension_threshold"},
    "output": {"dir"},
}


def parse_config(text: str) -> RunConfig:
    sections = _read_sections(text)
    for sec, items in sections.items():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown config section {sec!r}")
        extra = set(items) - _KNOWN[sec]
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(extra))}")

    cfg = RunConfig()
    run = sections.get("run", {})
    if "seed" in run:
        cfg.seed = _int(run["seed"])

    d = sections.get("domain", {})
    if "name" in d:
        cfg.domain.name = d["name"].strip()
    if "resolution" in d:
        res = [_int(v) for v in _list(d["resolution"])]
        if len(res) == 1:
            res = res * 3
        cfg.domain.resolution = tuple(res)
    if "periods" in d:
        per = [_float(v) for v in _list(d["periods"])]
        if len(per) == 1:
            per = per * 3
        cfg.domain.periods = tuple(per)
    if "order" in d:
        cfg.domain.order = _int(d["order"])

    t = sections.get("target", {})
    if "kind" in t:
        cfg.target.kind = t["kind"].strip()
    if "n" in t:
        cfg.target.n = _int(t["n"])

    p = sections.get("potential", {})
    if "kind" in p:
        cfg.potential.kind = p["kind"].strip()
    if "params" in p:
        cfg.potential.params.update(_params(p["params"]))
    for key in ("value", "coef"):
        if key in p:
            cfg.potential.params[key] = _float(p[key])

    fl = sections.get("flow", {})
    opts = {}
    for key, conv in (("dt", _float), ("tol", _float), ("max_steps", _int), ("backtrack", _float),
                      ("backtracking", _bool), ("checkpoint_every", _int)):
        if key in fl:
            opts[key] = conv(fl[key])
    if "initial" in fl:
        cfg.flow.initial = fl["initial"].strip()
    if "point" in fl:
        cfg.flow.point = tuple(_float(v) for v in _list(fl["point"]))

    ch = sections.get("checks", {})
    if "suites" in ch:
        cfg.checks.suites = tuple(_list(ch["suites"]))
    if "levels" in ch:
        cfg.checks.levels = tuple(_int(v) for v in _list(ch["levels"]))
    if "charts" in ch:
        cfg.checks.charts = tuple(_list(ch["charts"]))
    if "orders" in ch:
        cfg.checks.orders = tuple(_int(v) for v in _list(ch["orders"]))
    if "dt" in ch:
        cfg.checks.dt = _float(ch["dt"])
    if "literal_hessian_sign" in ch:
        cfg.checks.literal_hessian_sign = _bool(ch["literal_hessian_sign"])
    if "amplitude" in ch:
        cfg.checks.amplitude = _float(ch["amplitude"])

    st = sections.get("stability", {})
    for key, conv in (("samples", _int), ("iters", _int), ("margin", _float), ("slack", _float),
                      ("tension_threshold", _float)):
        if key in st:
            setattr(cfg.stability, key, conv(st[key]))

    out = sections.get("output", {})
    if "dir" in out:
        cfg.out = out["dir"].strip()

    try:
        cfg.flow.options = FlowOptions(**{**cfg.flow.options.__dict__, **opts})
    except (TypeError, ValidationError) as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.domain.name not in CHART_NAMES:
        raise ConfigError(f"unknown chart {cfg.domain.name!r}")
    if cfg.target.kind not in ("sphere", "flat"):
        raise ConfigError(f"unknown target kind {cfg.target.kind!r}")
    if cfg.potential.kind not in POTENTIAL_KINDS or cfg.potential.kind == "ambient-custom":
        raise ConfigError(f"potential kind {cfg.potential.kind!r} cannot be configured from a file")
    if cfg.flow.initial not in INITIAL_KINDS:
        raise ConfigError(f"unknown initial map {cfg.flow.initial!r}")
    bad = set(cfg.checks.suites) - set(CHECK_SUITES)
    if bad:
        raise ConfigError(f"unknown check suites: {', '.join(sorted(bad))}")
    for name in cfg.checks.charts:
        if name not in CHART_NAMES:
            raise ConfigError(f"unknown chart {name!r} in checks.charts")
    if len(cfg.checks.levels) < 2:
        raise ConfigError("checks.levels needs at least two refinement levels")
    if cfg.stability.samples < 0 or cfg.stability.iters < 1:
        raise ConfigError("stability.samples must be >= 0 and stability.iters >= 1")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
