"""Geometry-based stochastic channel simulator for non-stationary massive MIMO links."""

from .channel import ChannelRealization, FieldPattern, LsfModel, apply_lsf, ctf, full_matrix, generate_rays
from .config import ConfigError, ScenarioConfig, parse_config
from .metrics import capacity, cdf, svs, svs_db
from .statistics import StatResult, coherence_scale, fcf, space_ccf, stfcf, temporal_acf

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "ConfigError",
    "FieldPattern",
    "LsfModel",
    "ScenarioConfig",
    "StatResult",
    "apply_lsf",
    "capacity",
    "cdf",
    "coherence_scale",
    "ctf",
    "fcf",
    "full_matrix",
    "generate_rays",
    "parse_config",
    "space_ccf",
    "stfcf",
    "svs",
    "svs_db",
    "temporal_acf",
]
