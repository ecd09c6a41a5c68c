"""Modification toggles and preset loading."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, fields
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

MD_FLAGS = tuple(f"md{i}" for i in range(1, 6))
MBD_FLAGS = tuple(f"mbd{i}" for i in range(1, 13))
ALL_FLAGS = MD_FLAGS + MBD_FLAGS
PRESET_NAMES = ("bd", "bdopt", "lat", "bdw", "latbdw")


@dataclass(frozen=True)
class ModificationConfig:
    """Independent on/off switches for MD.1-5 and MBD.1-12.

    ``local_id_bits`` is the width of the per-sender compact payload ID
    used by mbd1.
    """

    md1: bool = False
    md2: bool = False
    md3: bool = False
    md4: bool = False
    md5: bool = False
    mbd1: bool = False
    mbd2: bool = False
    mbd3: bool = False
    mbd4: bool = False
    mbd5: bool = False
    mbd6: bool = False
    mbd7: bool = False
    mbd8: bool = False
    mbd9: bool = False
    mbd10: bool = False
    mbd11: bool = False
    mbd12: bool = False
    local_id_bits: int = 16

    def __post_init__(self):
        if not 1 <= self.local_id_bits <= 32:
            raise ConfigError("local_id_bits must be in 1..32", field="local_id_bits")

    @classmethod
    def from_flags(cls, enabled, **extra) -> ModificationConfig:
        enabled = list(enabled)
        unknown = [name for name in enabled if name not in ALL_FLAGS]
        if unknown:
            raise ConfigError(f"unknown modification(s): {', '.join(unknown)}")
        return cls(**{name: True for name in enabled}, **extra)

    def enabled(self) -> tuple[str, ...]:
        return tuple(name for name in ALL_FLAGS if getattr(self, name))

    def with_flags(self, **changes) -> ModificationConfig:
        return dataclasses.replace(self, **changes)

    @property
    def label(self) -> str:
        for name in PRESET_NAMES:
            if preset(name) == self:
                return name
        on = self.enabled()
        return "+".join(on) if on else "bd"


def _preset_text(name: str) -> str:
    try:
        return resources.files("bdsim.presets").joinpath(f"{name}.toml").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None


_PRESET_CACHE: dict[str, ModificationConfig] = {}


def preset(name: str) -> ModificationConfig:
    """Load one of the shipped presets (``bd``, ``bdopt``, ``lat``, ``bdw``, ``latbdw``)."""
    if name not in _PRESET_CACHE:
        if name not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
        data = tomllib.loads(_preset_text(name))
        _PRESET_CACHE[name] = ModificationConfig.from_flags(data.get("enable", []))
    return _PRESET_CACHE[name]


def single_modification_configs() -> dict[str, ModificationConfig]:
    """One config per modification: each MD alone on top of bd, each MBD alone on top of bdopt."""
    base = preset("bdopt")
    out = {name: ModificationConfig(**{name: True}) for name in MD_FLAGS}
    for name in MBD_FLAGS:
        out[name] = base.with_flags(**{name: True})
    return out


def config_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(ModificationConfig))
