"""Named (V, D, k, m, mode) bundles for the published model configurations."""
from __future__ import annotations

from dataclasses import dataclass

from .core import AsgConfig, Mode
from .errors import ValidationError


@dataclass(frozen=True)
class Preset:
    V: int
    D: int
    k: int
    m: int
    mode: Mode = Mode.SEPARATE

    def config(self) -> AsgConfig:
        return AsgConfig(k=self.k, m=self.m, D=self.D, V=self.V, mode=self.mode)


MBERT_V = 119_547
XLMR_V = 250_000
MT5_V = 250_112

PRESETS = {
    "mbert-k512-m48": Preset(MBERT_V, 768, 512, 48),
    "xlmr-k1024-m48": Preset(XLMR_V, 768, 1024, 48),
    "mt5-k1024-m32": Preset(MT5_V, 512, 1024, 32),
    "mt5-k2048-m32": Preset(MT5_V, 512, 2048, 32),
    "mt5-k8192-m32": Preset(MT5_V, 512, 8192, 32),
    "mt5-shared-k16384-m32": Preset(MT5_V, 512, 16384, 32, Mode.SHARED),
    "mt5-shared-k32768-m32": Preset(MT5_V, 512, 32768, 32, Mode.SHARED),
    "mt5-shared-k32768-m64": Preset(MT5_V, 512, 32768, 64, Mode.SHARED),
    "mt5-k1024-m64": Preset(MT5_V, 512, 1024, 64),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
