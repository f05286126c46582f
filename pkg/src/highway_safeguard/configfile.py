"""Flat key-value configuration files.

Lines look like `traffic.q_max = 15`, with `#` comments.  Interval
values take two comma-separated numbers (`traffic.T = 0.3, 0.5`).
Every key overrides one field of the experiment configuration; the full
schema is listed in the README.
"""

from __future__ import annotations

from dataclasses import replace

from .calibration import COMPONENT_FIELDS, NaturalisticModel, UniformDensity
from .harness import ExperimentConfig
from .traffic import PARAM_FIELDS

_FLOAT_FIELDS = {
    "road": ("lane_width", "speed_limit", "corridor_half_length"),
    "traffic": ("q_max", "speed_lo", "speed_hi", "sigma_vel",
                "delta_a_threshold", "max_braking", "delta"),
    "planner": ("discount", "reward_per_step", "adapter_value",
                "exploration", "min_speed"),
    "gipps": ("v_ave", "a_cmax", "a_cmin", "a_hat_e", "a_hat_f", "k"),
    "human": ("T", "g0", "a", "b", "p", "v_ave", "delta_a_threshold"),
    "rss": ("a_e_max", "a_e_hb", "a_f_hb", "reaction_dt"),
    "reachable": ("a_max", "a_e_b", "a_e_hb", "a_f_hb", "t_lc"),
    "harness": ("episode_duration", "hard_brake_threshold",
                "observation_noise"),
}

_INT_FIELDS = {
    "road": ("lane_count",),
    "planner": ("depth", "iterations"),
}

_SECTION_ATTR = {
    "road": "road",
    "traffic": "spawn",
    "planner": "planner",
    "gipps": "gipps",
    "human": "human",
    "rss": "rss",
    "reachable": "reachable",
}

_HARNESS_ATTR = {
    "episode_duration": "episode_duration",
    "hard_brake_threshold": "hard_brake_threshold",
    "observation_noise": "observation_noise",
}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _parse_interval(text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"interval needs two values, got {text!r}")
    return float(parts[0]), float(parts[1])


def apply_overrides(cfg: ExperimentConfig, values: dict[str, str]) -> ExperimentConfig:
    """Return a configuration with every key of `values` applied."""
    sections: dict[str, dict] = {}
    for key, text in values.items():
        if "." not in key:
            raise ValueError(f"key {key!r} needs a section prefix")
        section, name = key.split(".", 1)
        sections.setdefault(section, {})[name] = text

    for section, items in sections.items():
        if section == "naturalistic":
            densities = dict(cfg.naturalistic.densities)
            for name, text in items.items():
                if name not in COMPONENT_FIELDS:
                    raise ValueError(f"unknown naturalistic key {name!r}")
                densities[name] = UniformDensity(*_parse_interval(text))
            cfg.naturalistic = NaturalisticModel(densities)
            continue
        if section == "harness":
            for name, text in items.items():
                if name not in _HARNESS_ATTR:
                    raise ValueError(f"unknown harness key {name!r}")
                setattr(cfg, _HARNESS_ATTR[name], float(text))
            continue
        if section == "traffic":
            for name in list(items):
                if name in PARAM_FIELDS:
                    cfg.spawn.param_intervals[name] = _parse_interval(items.pop(name))
            for name, text in items.items():
                if name not in _FLOAT_FIELDS["traffic"]:
                    raise ValueError(f"unknown traffic key {name!r}")
                setattr(cfg.spawn, name, float(text))
            continue
        if section not in _SECTION_ATTR:
            raise ValueError(f"unknown section {section!r}")
        fields = {}
        for name, text in items.items():
            if name in _FLOAT_FIELDS.get(section, ()):
                fields[name] = float(text)
            elif name in _INT_FIELDS.get(section, ()):
                fields[name] = int(text)
            else:
                raise ValueError(f"unknown key {section}.{name}")
        attr = _SECTION_ATTR[section]
        setattr(cfg, attr, replace(getattr(cfg, attr), **fields))

    # keep the planner's lane-change permission in sync with the group
    cfg.planner = replace(cfg.planner, allow_lane_change=cfg.allow_lane_change)
    return cfg
