"""Named run presets, grouped by config section.

Each preset overrides only what it names; later layers (config file,
environment, command-line flags) override it in turn.
"""

from __future__ import annotations

from copy import deepcopy
from typing import Any

_PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "fig2": {
        "chain": {"L": 100_000, "J": 1.0, "gamma": 0.01},
        "run": {
            "command": "density",
            "initial": "domain-wall",
            "method": "transfer-contour",
            "window": 400,
        },
        "times": {"values": [0.05, 0.2, 1.0, 5.0], "scale": "gamma_t"},
    },
    "fig3": {
        "chain": {"L": 100_000, "J": 1.0, "gamma": 0.01},
        "run": {
            "command": "beta",
            "initial": "domain-wall",
            "method": "transfer-contour",
        },
        "times": {
            "start": 1e-3,
            "stop": 30.0,
            "spacing": "log",
            "per_decade": 24,
            "scale": "gamma_t",
        },
    },
    "fig4": {
        "chain": {"L": 200, "J": 1.0, "gamma": 0.5},
        "run": {
            "command": "offdiag",
            "initial": "delta",
            "method": "ed",
            "lmax": 4,
            "site": 100,
        },
        "times": {
            "start": 3.0,
            "stop": 20.0,
            "spacing": "log",
            "per_decade": 24,
            "scale": "gamma_t",
        },
    },
    "oracle": {
        "chain": {"L": 64, "J": 1.0, "gamma": 0.5},
        "run": {
            "command": "compare",
            "initial": "delta",
            "method": "transfer-talbot",
            "lmax": 4,
        },
        "times": {"values": [0.5, 1.0, 2.0]},
    },
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def get_preset(name: str) -> dict[str, dict[str, Any]]:
    try:
        return deepcopy(_PRESETS[name])
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; choose from {', '.join(preset_names())}"
        ) from None
