"""Flat typed run configuration.

An INI file with fixed sections (run/grid/prior/physics/measurement/
dataset/schedule/train/sample/validate) and a closed key schema: unknown
sections or keys are rejected, values are parsed to declared types, and
every key has a default except the three ``kind`` selectors. Canonical
serialization writes every resolved key in schema order so configs hash
stably and round-trip exactly.
"""

from __future__ import annotations

import configparser
import io

from .errors import ConfigError
from .fields import Grid2D
from .forward import ElastostaticPhysics, HelmholtzPhysics
from .elasticity import ElastostaticSetup
from .helmholtz import HelmholtzSetup
from .measurement import TruncatedGaussianMeasurement, WrappedPhaseMeasurement
from .priors import InclusionPriorFixed, InclusionPriorRich
from .sampler import SamplerConfig
from .schedule import NoiseSchedule, make_schedule
from .scorenet import ScoreNetConfig, TrainConfig

_REQUIRED = object()

# section -> key -> (type tag, default). Type tags: int, float, str, bool.
SCHEMA: dict = {
    "run": {
        "seed": ("int", 0),
        "out": ("str", "runs/out"),
    },
    "grid": {
        "nx": ("int", 16),
        "ny": ("int", 16),
    },
    "prior": {
        "kind": ("str", _REQUIRED),        # inclusion-fixed | inclusion-rich
        "side": ("float", 1.0),
        "center_low": ("float", 0.2),
        "center_high": ("float", 0.8),
        "radius": ("float", 0.12),
        "background": ("float", 0.1),
        "inclusion": ("float", 1.5),
    },
    "physics": {
        "kind": ("str", _REQUIRED),        # elastostatic | helmholtz
        "component": ("str", "uy"),
        "top_displacement": ("float", -0.01),
        "poisson": ("float", 0.5),
        "omega": ("float", 0.0),           # 0 = quarter-wavelength default
        "alpha": ("float", 5e-5),
        "density": ("float", 1000.0),
    },
    "measurement": {
        "kind": ("str", _REQUIRED),        # truncated-gaussian | wrapped-phase
        "sigma_frac": ("float", 0.025),
        "snr_k": ("float", 50.0),
    },
    "dataset": {
        "n_train": ("int", 2000),
    },
    "schedule": {
        "sigma1": ("float", 20.0),
        "sigma_l": ("float", 0.01),
        "levels": ("int", 128),
    },
    "train": {
        "iterations": ("int", 10000),
        "batch_size": ("int", 128),
        "lr": ("float", 1e-4),
        "lr_final": ("float", 0.0),        # 0 = constant learning rate
        "ema_decay": ("float", 0.999),
        "width": ("int", 32),
        "depth": ("int", 2),
        "dilations": ("str", "2,4"),
        "checkpoint_every": ("int", 1000),
        "seed": ("int", 0),
    },
    "sample": {
        "epsilon": ("float", 5.7e-6),
        "steps_per_level": ("int", 5),
        "n_samples": ("int", 1000),
        "batch_size": ("int", 256),
        "seed": ("int", 0),
    },
    "validate": {
        "ensemble": ("int", 20000),
        "noise_fracs": ("str", "0.025,0.05,0.1"),
        "index": ("int", 0),
    },
}


def _parse_value(section: str, key: str, raw: str):
    tag = SCHEMA[section][key][0]
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"bad value for {section}.{key}: {raw!r} is not a {tag}")


def _format_value(section: str, key: str, value) -> str:
    tag = SCHEMA[section][key][0]
    if tag == "bool":
        return "true" if value else "false"
    if tag == "float":
        return repr(float(value))
    return str(value)


class RunConfig:
    """Parsed configuration: every schema key resolved (defaults filled)."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}")
        values: dict = {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser[section]:
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
        for section, keys in SCHEMA.items():
            values[section] = {}
            for key, (_tag, default) in keys.items():
                if parser.has_option(section, key):
                    values[section][key] = _parse_value(
                        section, key, parser.get(section, key))
                elif default is _REQUIRED:
                    raise ConfigError(f"missing required config key {section}.{key}")
                else:
                    values[section][key] = default
        return cls(values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        buf = io.StringIO()
        for section, keys in SCHEMA.items():
            buf.write(f"[{section}]\n")
            for key in keys:
                buf.write(f"{key} = "
                          f"{_format_value(section, key, self.values[section][key])}\n")
            buf.write("\n")
        return buf.getvalue()

    def with_overrides(self, seed: int | None = None,
                       out: str | None = None) -> "RunConfig":
        values = {s: dict(kv) for s, kv in self.values.items()}
        if seed is not None:
            values["run"]["seed"] = int(seed)
        if out is not None:
            values["run"]["out"] = str(out)
        return RunConfig(values)


def _parse_floats(raw: str, what: str) -> tuple:
    try:
        items = tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"bad {what}: {raw!r}")
    if not items:
        raise ConfigError(f"empty {what}")
    return items


def _parse_ints(raw: str, what: str) -> tuple:
    return tuple(int(v) for v in _parse_floats(raw, what))


def build_prior(cfg: RunConfig):
    p = cfg["prior"]
    if p["kind"] == "inclusion-fixed":
        return InclusionPriorFixed(side=p["side"], center_low=p["center_low"],
                                   center_high=p["center_high"], radius=p["radius"],
                                   background=p["background"], inclusion=p["inclusion"])
    if p["kind"] == "inclusion-rich":
        return InclusionPriorRich()
    raise ConfigError(f"unknown prior.kind {p['kind']!r}")


def build_grid(cfg: RunConfig, prior) -> Grid2D:
    nx, ny = cfg.get("grid", "nx"), cfg.get("grid", "ny")
    if isinstance(prior, InclusionPriorFixed):
        w = h = prior.side
    elif isinstance(prior, InclusionPriorRich):
        w, h = prior.width, prior.height
    else:
        w = h = 1.0
    return Grid2D(nx=nx, ny=ny, dx=w / nx, dy=h / ny)


def build_physics(cfg: RunConfig):
    p = cfg["physics"]
    if p["kind"] == "elastostatic":
        setup = ElastostaticSetup(top_displacement=p["top_displacement"],
                                  poisson=p["poisson"])
        return ElastostaticPhysics(setup=setup, component=p["component"])
    if p["kind"] == "helmholtz":
        setup = HelmholtzSetup(omega=p["omega"] if p["omega"] > 0 else None,
                               alpha=p["alpha"], rho=p["density"])
        return HelmholtzPhysics(setup=setup)
    raise ConfigError(f"unknown physics.kind {p['kind']!r}")


def build_measurement(cfg: RunConfig):
    m = cfg["measurement"]
    if m["kind"] == "truncated-gaussian":
        return TruncatedGaussianMeasurement(sigma_frac=m["sigma_frac"])
    if m["kind"] == "wrapped-phase":
        return WrappedPhaseMeasurement(k_profile=(m["snr_k"],))
    raise ConfigError(f"unknown measurement.kind {m['kind']!r}")


def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    s = cfg["schedule"]
    return make_schedule(s["sigma1"], s["sigma_l"], s["levels"])


def build_net_config(cfg: RunConfig, x_channels: int, y_channels: int
                     ) -> ScoreNetConfig:
    t = cfg["train"]
    return ScoreNetConfig(x_channels=x_channels, y_channels=y_channels,
                          width=t["width"], depth=t["depth"],
                          dilations=_parse_ints(t["dilations"], "train.dilations"))


def build_train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(iterations=t["iterations"], batch_size=t["batch_size"],
                       lr=t["lr"],
                       lr_final=t["lr_final"] if t["lr_final"] > 0 else None,
                       ema_decay=t["ema_decay"], seed=t["seed"])


def build_sampler_config(cfg: RunConfig) -> SamplerConfig:
    s = cfg["sample"]
    return SamplerConfig(epsilon=s["epsilon"],
                         steps_per_level=s["steps_per_level"],
                         n_samples=s["n_samples"], batch_size=s["batch_size"],
                         seed=s["seed"])


def validate_noise_fracs(cfg: RunConfig) -> tuple:
    return _parse_floats(cfg.get("validate", "noise_fracs"),
                         "validate.noise_fracs")
