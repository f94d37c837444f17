"""TOML run configuration with field-level validation.

Example::

    experiment = "dynamics"
    seed = 7
    output_dir = "runs/dyn"

    [preset]            # overrides of reported values, by field name
    tau_rad = 192e-12

    [emitter]           # overrides of the calibrated emitter model
    discharge_shape = 0.5

    [detector]
    efficiency = 0.2

    [optics]
    dtheta_deg = [-0.3, 0.0, 0.3]
    power = 7.0

    [sequence]          # rows of [duration_us, p_resonant_nw, p_aboveband_nw]
    rows = [[5.0, 0.0, 40.0], [1.2, 0.0, 0.0], [4.0, 1000.0, 0.0]]
    initial = "D"
    dt_ns = 2.0
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .dynamics import EmitterModel, PulseSequence
from .errors import ConfigError, DomainError
from .montecarlo import DetectorModel
from .preset import PaperPreset

__all__ = ["EXPERIMENTS", "RunConfig", "load_config", "parse_config", "dump_config"]

EXPERIMENTS = ("spectrum", "g2", "interferogram", "dynamics", "recovery")
_EMITTER_FIELDS = {f.name for f in fields(EmitterModel)} - {"telegraph", "recharge_table"}
_DETECTOR_FIELDS = {f.name for f in fields(DetectorModel)}
_PRESET_FIELDS = {f.name for f in fields(PaperPreset)}
_OPTICS_FIELDS = {"dtheta_deg", "power", "extinction"}
_SEQUENCE_FIELDS = {"rows", "initial", "dt_ns"}
_TOP = {"experiment", "seed", "output_dir", "p_ab", "preset", "emitter", "detector", "optics",
        "sequence"}
_NEEDS_SEED = {"spectrum", "g2"}


@dataclass
class RunConfig:
    experiment: str
    seed: int | None = None
    output_dir: str = "out"
    p_ab: float | None = None
    preset: dict = field(default_factory=dict)
    emitter: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)
    optics: dict = field(default_factory=dict)
    sequence: dict | None = None

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.seed is not None:
            if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
                raise ConfigError("seed", "must be an integer in [0, 2**64)")
        elif self.experiment in _NEEDS_SEED:
            raise ConfigError("seed", f"experiment {self.experiment!r} needs an explicit seed")
        _check_keys("preset", self.preset, _PRESET_FIELDS)
        _check_keys("emitter", self.emitter, _EMITTER_FIELDS)
        _check_keys("detector", self.detector, _DETECTOR_FIELDS)
        _check_keys("optics", self.optics, _OPTICS_FIELDS)
        for sect in ("preset", "emitter", "detector"):
            for k, v in getattr(self, sect).items():
                if v is not None and not isinstance(v, (int, float)):
                    raise ConfigError(f"{sect}.{k}", "must be a number")
        try:
            if self.detector:
                DetectorModel(**self.detector)
            if self.emitter:
                EmitterModel(**self.emitter)
        except (DomainError, TypeError) as exc:
            raise ConfigError("detector" if self.detector else "emitter", str(exc)) from None
        if "dtheta_deg" in self.optics:
            d = self.optics["dtheta_deg"]
            if not isinstance(d, list) or not d or any(abs(float(v)) >= 45 for v in d):
                raise ConfigError("optics.dtheta_deg", "must be a non-empty list with |value| < 45")
        if self.optics.get("power", 0) < 0:
            raise ConfigError("optics.power", "must be >= 0")
        if self.experiment == "dynamics":
            if self.sequence is None:
                raise ConfigError("sequence", "required for the dynamics experiment")
        if self.sequence is not None:
            _check_keys("sequence", self.sequence, _SEQUENCE_FIELDS)
            rows = self.sequence.get("rows")
            if not isinstance(rows, list) or not rows:
                raise ConfigError("sequence.rows", "must be a non-empty list of [duration_us, p_res, p_ab]")
            for i, row in enumerate(rows):
                if not isinstance(row, list) or len(row) != 3:
                    raise ConfigError(f"sequence.rows[{i}]", "must have three numbers")
            try:
                self.pulse_sequence()
            except DomainError as exc:
                raise ConfigError("sequence.rows", str(exc)) from None
            if self.sequence.get("initial", "G") not in ("G", "X", "D"):
                raise ConfigError("sequence.initial", "must be 'G', 'X' or 'D'")
            if not self.sequence.get("dt_ns", 1.0) > 0:
                raise ConfigError("sequence.dt_ns", "must be > 0")
        if self.experiment == "recovery" and self.p_ab is not None and not self.p_ab > 0:
            raise ConfigError("p_ab", "must be > 0")
        return self

    def pulse_sequence(self):
        return PulseSequence.from_rows(self.sequence["rows"])

    def to_dict(self):
        d = {"experiment": self.experiment, "output_dir": self.output_dir}
        if self.seed is not None:
            d["seed"] = self.seed
        if self.p_ab is not None:
            d["p_ab"] = self.p_ab
        for sect in ("preset", "emitter", "detector", "optics"):
            if getattr(self, sect):
                d[sect] = dict(getattr(self, sect))
        if self.sequence is not None:
            d["sequence"] = dict(self.sequence)
        return d


def _check_keys(section, table, allowed):
    if not isinstance(table, dict):
        raise ConfigError(section, "must be a table")
    for k in table:
        if k not in allowed:
            raise ConfigError(f"{section}.{k}", "unknown field")


def parse_config(text) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<toml>", str(exc)) from None
    for k in raw:
        if k not in _TOP:
            raise ConfigError(k, "unknown field")
    if "experiment" not in raw:
        raise ConfigError("experiment", "missing")
    return RunConfig(**raw).validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())
