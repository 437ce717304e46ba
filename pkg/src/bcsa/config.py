"""Experiment configuration files.

A config is plain ``key = value`` text grouped in sections::

    [experiment]
    name = fig5_n172
    protocols = bcsa, csma, floor
    seed = 2024

    [phy]
    payload_size = 400

    [load]
    g = 0.3, 0.4, 0.5

    [bcsa]
    dist = 0.86x^3+0.14x^8

Every key is optional except where a protocol needs it; see README for the
full list.  ``ExperimentConfig.to_text`` writes every field explicitly, so
``parse(to_text(c)) == c`` holds for any valid config.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .model import DegreeDistribution, PhyParams, slot_count

__all__ = ["ConfigError", "ExperimentConfig", "PROTOCOLS", "load_config", "bundled_config"]

PROTOCOLS = ("bcsa", "csma", "floor", "threshold", "optimize", "table1")
CONFIG_DIR = Path(__file__).parent / "configs"

_PHY_FIELDS = [f.name for f in dataclasses.fields(PhyParams)]


class ConfigError(ValueError):
    """Malformed or infeasible experiment description."""


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _receiver_degrees(text: str) -> tuple:
    out = []
    for tok in text.replace(",", " ").split():
        out.append(None if tok == "sampled" else int(tok))
    return tuple(out)


def _fmt_list(values) -> str:
    return ", ".join("sampled" if v is None else repr(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    protocols: tuple = ("bcsa",)
    seed: int = 0
    output: str = ""
    phy: PhyParams = field(default_factory=PhyParams)
    slots: int | None = None
    """Slot count override; derived from ``phy`` when unset."""
    loads: tuple = ()
    dist: DegreeDistribution | None = None
    receiver_k: tuple = (None,)
    trials: int = 10_000
    min_errors: int = 50
    max_trials: int = 10_000_000
    csma_windows: tuple = (11,)
    csma_runs: int = 1000
    catalog_users: int = 4
    catalog_degrees: tuple = (1, 2, 3)
    opt_degrees: tuple = (2, 3, 8)
    opt_step: float = 0.01
    opt_load: float = 0.5
    min_threshold: float | None = None
    payloads: tuple = (200, 400)

    def __post_init__(self):
        unknown = [p for p in self.protocols if p not in PROTOCOLS]
        if unknown:
            raise ConfigError(f"unknown protocol(s) {unknown}; expected some of {PROTOCOLS}")
        if not self.protocols:
            raise ConfigError("no protocol selected")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        needs_grid = {"bcsa", "csma", "floor"} & set(self.protocols)
        if needs_grid and not self.loads:
            raise ConfigError(f"empty g grid for {sorted(needs_grid)}")
        if any(g <= 0 for g in self.loads):
            raise ConfigError("loads must be positive")
        if any(b < a for a, b in zip(self.loads, self.loads[1:])):
            raise ConfigError("g grid must be non-decreasing")
        if {"bcsa", "floor", "threshold"} & set(self.protocols) and self.dist is None:
            raise ConfigError("a degree distribution is required ([bcsa] dist)")
        if self.trials < 1 or self.max_trials < self.trials or self.min_errors < 0:
            raise ConfigError("need 1 <= trials <= max_trials and min_errors >= 0")
        if self.csma_runs < 1 or any(u < 1 for u in self.csma_windows):
            raise ConfigError("csma runs and window exponents must be positive")
        if self.slots is not None and self.slots < 1:
            raise ConfigError("slots must be positive")
        n = self.n
        if self.dist is not None and self.dist.max_degree > n:
            raise ConfigError(f"maximum degree {self.dist.max_degree} exceeds {n} slots")
        for k in self.receiver_k:
            if k is not None and not 0 <= k <= n:
                raise ConfigError(f"forced receiver degree {k} outside [0, {n}]")
        for g in self.loads:
            if "bcsa" in self.protocols or "floor" in self.protocols:
                if round(g * n) < 2:
                    raise ConfigError(f"load {g} gives fewer than two users at n={n}")

    @property
    def n(self) -> int:
        if self.slots is not None:
            return self.slots
        try:
            return slot_count(self.phy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def users(self, g: float) -> int:
        return max(1, round(g * self.n))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # --- text form -------------------------------------------------------

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        known = {
            "experiment": {"name", "protocols", "seed", "output"},
            "phy": set(_PHY_FIELDS),
            "frame": {"slots"},
            "load": {"g"},
            "bcsa": {"dist", "receiver_k", "trials", "min_errors", "max_trials"},
            "csma": {"u", "runs"},
            "floor": {"catalog_users", "catalog_degrees"},
            "optimize": {"degrees", "step", "g", "min_threshold"},
            "table1": {"payloads"},
        }
        for section in cp.sections():
            if section not in known:
                raise ConfigError(f"unknown section [{section}]")
            extra = set(cp[section]) - known[section]
            if extra:
                raise ConfigError(f"unknown key(s) {sorted(extra)} in [{section}]")

        def get(section, key, conv, default):
            if not cp.has_option(section, key):
                return default
            raw = cp.get(section, key).strip()
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None

        def optional(conv):
            return lambda raw: None if raw in ("", "none") else conv(raw)

        phy_kw = {}
        for f in dataclasses.fields(PhyParams):
            if cp.has_option("phy", f.name):
                conv = int if f.type in ("int", int) else float
                phy_kw[f.name] = get("phy", f.name, conv, None)
        try:
            phy = PhyParams(**phy_kw)
        except ValueError as exc:
            raise ConfigError(f"[phy] {exc}") from None
        protocols = get("experiment", "protocols",
                        lambda s: tuple(p.strip() for p in s.split(",") if p.strip()), ("bcsa",))
        try:
            return cls(
                name=get("experiment", "name", str, "experiment"),
                protocols=protocols,
                seed=get("experiment", "seed", int, 0),
                output=get("experiment", "output", str, ""),
                phy=phy,
                slots=get("frame", "slots", optional(int), None),
                loads=get("load", "g", _floats, ()),
                dist=get("bcsa", "dist", optional(DegreeDistribution.parse), None),
                receiver_k=get("bcsa", "receiver_k", _receiver_degrees, (None,)),
                trials=get("bcsa", "trials", int, 10_000),
                min_errors=get("bcsa", "min_errors", int, 50),
                max_trials=get("bcsa", "max_trials", int, 10_000_000),
                csma_windows=get("csma", "u", _ints, (11,)),
                csma_runs=get("csma", "runs", int, 1000),
                catalog_users=get("floor", "catalog_users", int, 4),
                catalog_degrees=get("floor", "catalog_degrees", _ints, (1, 2, 3)),
                opt_degrees=get("optimize", "degrees", _ints, (2, 3, 8)),
                opt_step=get("optimize", "step", float, 0.01),
                opt_load=get("optimize", "g", float, 0.5),
                min_threshold=get("optimize", "min_threshold", optional(float), None),
                payloads=get("table1", "payloads", _ints, (200, 400)),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {"name": self.name, "protocols": ", ".join(self.protocols),
                            "seed": str(self.seed), "output": self.output}
        cp["phy"] = {k: repr(getattr(self.phy, k)) for k in _PHY_FIELDS}
        cp["frame"] = {"slots": "none" if self.slots is None else str(self.slots)}
        cp["load"] = {"g": _fmt_list(self.loads)}
        cp["bcsa"] = {"dist": "none" if self.dist is None else str(self.dist),
                      "receiver_k": _fmt_list(self.receiver_k), "trials": str(self.trials),
                      "min_errors": str(self.min_errors), "max_trials": str(self.max_trials)}
        cp["csma"] = {"u": _fmt_list(self.csma_windows), "runs": str(self.csma_runs)}
        cp["floor"] = {"catalog_users": str(self.catalog_users),
                       "catalog_degrees": _fmt_list(self.catalog_degrees)}
        cp["optimize"] = {"degrees": _fmt_list(self.opt_degrees), "step": repr(self.opt_step),
                          "g": repr(self.opt_load),
                          "min_threshold": "none" if self.min_threshold is None else repr(self.min_threshold)}
        cp["table1"] = {"payloads": _fmt_list(self.payloads)}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        """SHA-256 of the canonical text form."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def bundled_config(name: str) -> Path:
    path = CONFIG_DIR / f"{name}.ini"
    if not path.is_file():
        choices = sorted(p.stem for p in CONFIG_DIR.glob("*.ini"))
        raise ConfigError(f"no bundled config {name!r}; available: {choices}")
    return path


def load_config(source: str) -> ExperimentConfig:
    """Load a config from a path, or by the name of a bundled config."""
    path = Path(source)
    if not path.is_file():
        path = bundled_config(source)
    return ExperimentConfig.parse(path.read_text())
