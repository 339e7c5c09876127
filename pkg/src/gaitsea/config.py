"""Flat ``section.key = value`` run configuration.

Every key has a typed default; a config file only lists overrides.  Lines
starting with ``#`` are comments.  The literal file contents ``default``
(or an empty file) select all defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError

# section -> key -> default; the default's type fixes how values are parsed
DEFAULTS: dict[str, dict[str, object]] = {
    "generator": {
        "speeds": (0.5, 0.8, 1.25, 1.5, 1.8, 2.0, 2.5, 2.8, 3.0, 3.3, 3.5, 4.5),
        "cycles_per_speed": 30,
        "sample_rate_hz": 100.0,
        "noise_angle_deg": 0.5,
        "noise_rate_dps": 5.0,
        "seed": 0,
    },
    "network": {
        "hidden_width": 64,
        "hidden_stage1": 6,
        "hidden_stage2": 6,
        "stage2_hidden_features": False,
        "phase_encoding": "sincos",
        "seed": 0,
    },
    "training": {
        "learning_rate": 1e-2,
        "weight_decay": 1e-2,
        "epochs": 200,
        "batch_size": 512,
        "lambda_mid": 1e4,
        "lambda_fin": 1.0,
        "decoupled_weight_decay": False,
        "lr_schedule": "constant",
        "min_learning_rate": 0.0,
        "k_folds": 5,
        "validation_fraction": 0.30,
        "fold_seed": 0,
    },
    "filter": {
        "safety_factor": 1.5,
        "bound_floor": 1e-3,
        "rejection_limit": 5,
        "rate_hz": 100.0,
    },
    "plant": {
        "mode": "rigid",
        "speed": 1.2,
        "cycles": 30,
        "kp": 0.7,
        "ki": 0.1,
        "kd": 0.015,
        "integral_clamp": 2.0,
        "idle_current": 0.3,
        "load_inertia": 0.05,
        "load_damping": 0.5,
        "reflected_motor_inertia": 0.02,
        "per_layer_stiffness": 7.5,
        "layer_count": 3,
        "hard_stops": False,
        "substep": 1e-4,
        "current_noise_std": 0.0,
    },
}


def _parse_value(default, text: str, line: int, key: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            vals = tuple(float(v) for v in text.split(",") if v.strip())
            if not vals:
                raise ValueError(text)
            return vals
    except ValueError:
        raise ParseError(line, f"bad value {text!r} for {key}") from None
    return text


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]] = field(
        default_factory=lambda: {s: dict(kv) for s, kv in DEFAULTS.items()}
    )

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def set(self, dotted: str, value) -> None:
        section, key = dotted.split(".", 1)
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise KeyError(dotted)
        self.values[section][key] = value

    def section(self, name: str) -> dict[str, object]:
        return dict(self.values[name])

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every seed key set to ``seed``."""
        out = RunConfig({s: dict(kv) for s, kv in self.values.items()})
        for dotted in ("generator.seed", "network.seed", "training.fold_seed"):
            out.set(dotted, int(seed))
        return out

    def render(self) -> str:
        """Fully resolved config; parsing this text yields an equal config."""
        lines = []
        for section, kv in self.values.items():
            for key, value in kv.items():
                lines.append(f"{section}.{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    if text.strip() in ("", "default"):
        return cfg
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(n, f"expected 'section.key = value', found {line!r}")
        dotted, value = (s.strip() for s in line.split("=", 1))
        section, _, key = dotted.partition(".")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ParseError(n, f"unknown config key {dotted!r}")
        cfg.values[section][key] = _parse_value(DEFAULTS[section][key], value, n, dotted)
    return cfg


def load_config(path_or_word: str | None) -> RunConfig:
    if path_or_word is None or path_or_word == "default":
        return RunConfig()
    with open(path_or_word) as fh:
        return parse_config(fh.read())
