"""Run configuration: TOML documents mapped onto frozen dataclasses.

Every table is validated strictly; an unknown key is an error that names the
key, so a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import tomli

__all__ = [
    "ConfigError",
    "ManifoldConfig",
    "FunctionConfig",
    "FlowConfig",
    "CriticalConfig",
    "ConnectionsConfig",
    "ComplexConfig",
    "CurrentsConfig",
    "FormConfig",
    "PairingConfig",
    "ChecksConfig",
    "ExpectConfig",
    "RunConfig",
    "load_config",
    "parse_config",
    "catalog_names",
    "section_hash",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ManifoldConfig:
    kind: str = "sphere"  # sphere | circle | torus | klein
    dim: int = 2


@dataclass(frozen=True)
class FunctionConfig:
    expression: str = ""


@dataclass(frozen=True)
class FlowConfig:
    kind: str = "gradient"  # gradient | sphere17
    direction: tuple[float, ...] = ()
    rtol: float = 1e-9
    atol: float = 1e-11
    max_time: float = 200.0
    capture_radius: float = 1e-4


@dataclass(frozen=True)
class CriticalConfig:
    grad_tol: float = 1e-10
    nondegen_tol: float = 1e-6
    merge_tol: float = 1e-6
    pairing_radius: float = 1e-3
    seed: int = 20240917
    count: int | None = None
    grid: tuple[int, ...] | None = None


@dataclass(frozen=True)
class ConnectionsConfig:
    eps: float = 5e-4
    strategy: str = "auto"


@dataclass(frozen=True)
class ComplexConfig:
    modes: tuple[str, ...] = ("Z",)  # "Z", "Q", "Z/p", "twisted"
    local_system: tuple = ()
    duality: bool = True


@dataclass(frozen=True)
class CurrentsConfig:
    eps0: float = 1e-3
    int_tol: float = 1e-4
    fme_tol: float = 1e-3
    chain_tol: float = 1e-4
    pairing_tol: float = 1e-5
    samples: int = 20
    margin: float = 1e-2
    fd_step: float = 1e-4
    sample_seed: int = 7


@dataclass(frozen=True)
class FormConfig:
    name: str
    degree: int
    terms: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class PairingConfig:
    alphas: tuple[str, ...] = ()
    betas: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChecksConfig:
    residues: tuple[str, ...] = ()
    fme: tuple[str, ...] = ()
    chain_map: tuple[str, ...] = ()
    pairing: PairingConfig = field(default_factory=PairingConfig)


@dataclass(frozen=True)
class ExpectConfig:
    """Optional reference values; a mismatch is a verification failure."""

    counts: tuple[int, ...] | None = None
    betti: tuple[int, ...] | None = None
    betti_mod2: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    name: str
    manifold: ManifoldConfig
    function: FunctionConfig
    flow: FlowConfig = field(default_factory=FlowConfig)
    critical: CriticalConfig = field(default_factory=CriticalConfig)
    connections: ConnectionsConfig = field(default_factory=ConnectionsConfig)
    complex: ComplexConfig = field(default_factory=ComplexConfig)
    currents: CurrentsConfig = field(default_factory=CurrentsConfig)
    forms: tuple[FormConfig, ...] = ()
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    expect: ExpectConfig = field(default_factory=ExpectConfig)
    source: str = field(default="", compare=False)

    def form(self, name: str) -> FormConfig:
        for f in self.forms:
            if f.name == name:
                return f
        raise ConfigError(f"unknown form {name!r}")

    def section(self, name: str) -> dict:
        return _plain(getattr(self, name))


def _plain(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.name != "source"}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def section_hash(parts: dict, version: str) -> str:
    """Content hash of config sections plus the code version."""
    blob = json.dumps({"parts": parts, "version": version}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _tuple(v):
    return tuple(_tuple(x) for x in v) if isinstance(v, list) else v


def _build(cls, table: Any, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in table:
        if key not in names or key == "source":
            raise ConfigError(f"unknown key {where}.{key}")
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in table:
            kw[f.name] = _tuple(table[f.name])
    try:
        obj = cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"[{where}]: {exc}") from None
    _check_positive(obj, where)
    return obj


_POSITIVE = {"rtol", "atol", "max_time", "capture_radius", "grad_tol", "nondegen_tol",
             "merge_tol", "pairing_radius", "eps", "eps0", "int_tol", "fme_tol", "chain_tol",
             "pairing_tol", "margin", "fd_step", "samples"}


def _check_positive(obj, where):
    for f in dataclasses.fields(obj):
        if f.name in _POSITIVE:
            v = getattr(obj, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"{where}.{f.name} must be a positive number, got {v!r}")


_TOP = {"name", "manifold", "function", "flow", "critical", "connections", "complex",
        "currents", "forms", "checks", "expect"}


def parse_config(data: dict, source: str = "") -> RunConfig:
    for key in data:
        if key not in _TOP:
            raise ConfigError(f"unknown key {key}")
    missing = [k for k in ("name", "manifold") if k not in data]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    manifold = _build(ManifoldConfig, data["manifold"], "manifold")
    if manifold.kind not in ("sphere", "circle", "torus", "klein"):
        raise ConfigError(f"unknown manifold kind {manifold.kind!r}")
    function = _build(FunctionConfig, data.get("function", {}), "function")
    flow = _build(FlowConfig, data.get("flow", {}), "flow")
    if flow.kind not in ("gradient", "sphere17"):
        raise ConfigError(f"unknown flow kind {flow.kind!r}")
    if flow.kind == "gradient" and not function.expression:
        raise ConfigError("missing required key function.expression")

    forms = []
    for name, table in data.get("forms", {}).items():
        if not isinstance(table, dict):
            raise ConfigError(f"[forms.{name}] must be a table")
        for key in table:
            if key not in ("degree", "terms"):
                raise ConfigError(f"unknown key forms.{name}.{key}")
        if "degree" not in table or "terms" not in table:
            raise ConfigError(f"forms.{name} needs degree and terms")
        terms = tuple(sorted((str(k), str(v)) for k, v in table["terms"].items()))
        forms.append(FormConfig(name, int(table["degree"]), terms))

    checks_table = dict(data.get("checks", {}))
    pairing = _build(PairingConfig, checks_table.pop("pairing", {}), "checks.pairing")
    checks = _build(ChecksConfig, checks_table, "checks")
    checks = dataclasses.replace(checks, pairing=pairing)
    known = {f.name for f in forms}
    for ref in (*checks.residues, *checks.fme, *checks.chain_map, *pairing.alphas,
                *pairing.betas):
        if ref not in known:
            raise ConfigError(f"check refers to unknown form {ref!r}")

    return RunConfig(
        name=str(data["name"]),
        manifold=manifold,
        function=function,
        flow=flow,
        critical=_build(CriticalConfig, data.get("critical", {}), "critical"),
        connections=_build(ConnectionsConfig, data.get("connections", {}), "connections"),
        complex=_build(ComplexConfig, data.get("complex", {}), "complex"),
        currents=_build(CurrentsConfig, data.get("currents", {}), "currents"),
        forms=tuple(forms),
        checks=checks,
        expect=_build(ExpectConfig, data.get("expect", {}), "expect"),
        source=source,
    )


def catalog_names() -> list[str]:
    root = resources.files("morseflow") / "catalog"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_config(path_or_name: str | Path) -> RunConfig:
    """Read a TOML file, or a bundled catalog entry by name."""
    path = Path(path_or_name)
    if path.is_file():
        text, source = path.read_text(), str(path)
    elif str(path_or_name) in catalog_names():
        entry = resources.files("morseflow") / "catalog" / f"{path_or_name}.toml"
        text, source = entry.read_text(), f"catalog:{path_or_name}"
    else:
        raise ConfigError(f"no config file or catalog entry named {str(path_or_name)!r}")
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return parse_config(data, source)
