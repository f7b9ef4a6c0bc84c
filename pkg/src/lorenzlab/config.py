"""Experiment configuration: structured text (key = value under named
blocks), strictly validated.

Unknown blocks or keys are hard errors, so a misspelled key can never fall
back to a silent default.  Command-line flags mirror config keys and win
over the file.
"""

from __future__ import annotations

import configparser
import io
from pathlib import Path

from .errors import ConfigError
from .model import ModelParams
from .ode import Params3

_REQUIRED = object()


def _f(s: str) -> float:
    return float(s)


def _i(s: str) -> int:
    return int(s)


def _b(s: str) -> bool:
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _s(s: str) -> str:
    return str(s).strip()


def _choice(*options):
    def conv(s):
        v = str(s).strip()
        if v not in options:
            raise ConfigError(f"{v!r} not one of {options}")
        return v
    return conv


def _float_list(s: str) -> list:
    return [float(v) for v in str(s).split(",") if v.strip()]


def _int_list(s: str) -> list:
    return [int(v) for v in str(s).split(",") if v.strip()]


_CLASSICAL = ModelParams.classical()

SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (_i, 12345),
        "out": (_s, "runs/out"),
        "workers": (_i, 0),  # 0 = auto; execution is vectorized, key kept
                             # so archived configs round-trip
    },
    "ode": {
        "a": (_f, 10.0),
        "r": (_f, 28.0),
        "b": (_f, 8.0 / 3.0),
    },
    "model": {
        "lambda1": (_f, _CLASSICAL.lam1),
        "lambda2": (_f, _CLASSICAL.lam2),
        "lambda3": (_f, _CLASSICAL.lam3),
        "a_cusp": (_f, 0.3),
        "B": (_f, 0.5),
        "D": (_f, 0.25),
        "r0": (_f, 1.0),
    },
    "simulate": {
        "x0": (_f, 1.0), "y0": (_f, 1.0), "z0": (_f, 1.0),
        "t_final": (_f, 100.0),
        "method": (_choice("rk4", "dp45"), "rk4"),
        "dt": (_f, 1e-3),
        "sample_every": (_f, 1e-2),
        "rtol": (_f, 1e-9), "atol": (_f, 1e-9),
        "emit_events": (_b, False),
        "section_z": (_f, 27.0),
        "section_direction": (_i, -1),  # -1 down, +1 up, 0 both
    },
    "spectrum": {},
    "lyapunov": {
        "system": (_choice("flow", "map"), "flow"),
        "x0": (_f, 1.0), "y0": (_f, 1.0), "z0": (_f, 1.0),
        "T": (_f, 500.0),
        "renorm_period": (_f, 0.5),
        "dt": (_f, 1e-3),
        "map_x0": (_f, 0.2345),
        "map_n": (_i, 10_000_000),
    },
    "measure": {
        "system": (_choice("map", "section", "suspension", "flow"), "map"),
        "n": (_i, 1_000_000),
        "bins": (_i, 256),
        "burn_in": (_i, 1000),
        "x0": (_f, 0.2345), "y0": (_f, 0.1),
        "dt_sample": (_f, 0.11),
        "flow_t": (_f, 1000.0), "flow_dt": (_f, 1e-3),
        "dump_orbit": (_b, False),
    },
    "dimension": {
        "system": (_choice("map", "suspension", "section"), "suspension"),
        "n_samples": (_i, 10_000_000),
        "dt_sample": (_f, 0.11),
        "burn_in": (_i, 1000),
        "probes": (_i, 10),
        "r_min": (_f, 1e-3), "r_max": (_f, 10**-1.5), "r_count": (_i, 8),
        "min_count": (_i, 100),
        "x0": (_f, 0.2345), "y0": (_f, 0.1),
    },
    "hitting": {
        "n_seeds": (_i, 200),
        "horizon": (_f, 2e5),
        "r_min": (_f, 1e-3), "r_max": (_f, 10**-1.5), "r_count": (_i, 8),
        "n_samples": (_i, 10_000_000),
        "dt_sample": (_f, 0.11),
        "x0": (_f, 0.2345),
    },
    "recurrence": {
        "n_probes": (_i, 400),
        "horizon": (_i, 3_000_000),
        "r_min": (_f, 1e-3), "r_max": (_f, 10**-1.5), "r_count": (_i, 8),
        "n_orbit": (_i, 10_000_000),
        "x0": (_f, 0.2345),
    },
    "loglaw": {
        "records": (_s, _REQUIRED),
        "reference": (_f, _REQUIRED),
    },
    "correlations": {
        "n": (_i, 30_000_000),
        "max_lag": (_i, 30),
        "burn_in": (_i, 1000),
        "x0": (_f, 0.2345), "y0": (_f, 0.1),
    },
    "deviations": {
        "system": (_choice("semiflow", "flow", "coin"), "semiflow"),
        "eps": (_f, 0.1),
        "t_min": (_f, 20.0), "t_max": (_f, 200.0), "t_step": (_f, 20.0),
        "M": (_i, 100_000),
        "observable": (_s, "x"),
        "ref_laps": (_i, 1_000_000),
        "ref_horizon": (_f, 1e4), "ref_dt": (_f, 2e-3),
        "dt": (_f, 5e-3),
    },
    "escape": {
        "t_min": (_f, 5.0), "t_max": (_f, 50.0), "t_step": (_f, 5.0),
        "M": (_i, 100_000),
        "ball_radius": (_f, 1.0),
        "ball_center": (_s, "auto"),  # "auto" or "cx,cy,cz"
        "ref_horizon": (_f, 500.0),
        "dt": (_f, 5e-3),
    },
    "lapcheck": {
        "n_checks": (_i, 1000),
        "T_min": (_f, 10.0), "T_max": (_f, 50.0),
        "observable": (_choice("one", "mixed", "xcos"), "mixed"),
        "quad_order": (_i, 64),
        "ratio_T": (_f, 1e4),
        "ref_laps": (_i, 10_000_000),
    },
    "diagnose-nue": {
        "n_seeds": (_i, 10_000),
        "n": (_i, 10_000),
        "delta": (_f, 0.01),
        "eps": (_f, 0.5),
        "n_grid": (_int_list, [100, 1000, 10000]),
    },
    "sensitivity": {
        "system": (_choice("flow", "map"), "flow"),
        "d0": (_f, 1e-10),
        "delta_star": (_f, 1.0),
        "horizon": (_f, 80.0),
        "n_probes": (_i, 12),
        "dt": (_f, 1e-3),
    },
    "entropy": {
        "x0": (_f, 0.2345),
        "n": (_i, 2_000_000),
        "k": (_i, 12),
    },
}


class ExperimentConfig:
    """Typed, validated view of one configuration."""

    def __init__(self, blocks: dict[str, dict]):
        self.blocks = blocks

    def __getitem__(self, block: str) -> dict:
        return self.blocks[block]

    def params3(self) -> Params3:
        o = self.blocks["ode"]
        return Params3(a=o["a"], r=o["r"], b=o["b"])

    def model_params(self) -> ModelParams:
        m = self.blocks["model"]
        return ModelParams(lam1=m["lambda1"], lam2=m["lambda2"],
                           lam3=m["lambda3"], a_cusp=m["a_cusp"],
                           B=m["B"], D=m["D"], r0=m["r0"])

    def as_dict(self) -> dict:
        return {b: dict(v) for b, v in self.blocks.items()}


def _parse_ini(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep keys case-sensitive (B vs b matters)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    return cp


def load_config(path_or_text, overrides: list[str] | None = None
                ) -> ExperimentConfig:
    """Load and validate a config file (or literal text).

    `overrides` are "block.key=value" strings (command-line flags); they are
    validated against the same schema and win over the file.
    """
    if (isinstance(path_or_text, Path)
            or (path_or_text and Path(str(path_or_text)).is_file())):
        text = Path(path_or_text).read_text()
    else:
        text = str(path_or_text)
    cp = _parse_ini(text)
    raw: dict[str, dict[str, str]] = {s: dict(cp.items(s)) for s in cp.sections()}
    for ov in overrides or []:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like block.key=value: {ov!r}")
        key, value = ov.split("=", 1)
        block, name = key.split(".", 1)
        raw.setdefault(block.strip(), {})[name.strip()] = value.strip()
    blocks: dict[str, dict] = {}
    for block, entries in raw.items():
        if block not in SCHEMA:
            raise ConfigError(f"unknown config block [{block}]")
        spec = SCHEMA[block]
        parsed = {}
        for key, value in entries.items():
            if key not in spec:
                raise ConfigError(f"unknown key {key!r} in block [{block}]")
            conv = spec[key][0]
            try:
                parsed[key] = conv(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"bad value for [{block}] {key} = {value!r}: {exc}") from exc
        blocks[block] = parsed
    # fill defaults everywhere so downstream code sees complete blocks
    for block, spec in SCHEMA.items():
        filled = blocks.setdefault(block, {})
        for key, (_, default) in spec.items():
            if key not in filled:
                if default is _REQUIRED:
                    if block in raw:  # required keys bite only when used
                        raise ConfigError(
                            f"missing required key {key!r} in [{block}]")
                    filled[key] = None
                else:
                    filled[key] = default
    return ExperimentConfig(blocks)


def default_config_text() -> str:
    """Complete config with every key at its default, ready to archive."""
    out = io.StringIO()
    for block, spec in SCHEMA.items():
        lines = []
        for key, (_, default) in spec.items():
            if default is _REQUIRED:
                continue  # purely-required blocks (loglaw) are omitted
            if isinstance(default, list):
                val = ",".join(str(v) for v in default)
            elif isinstance(default, bool):
                val = "true" if default else "false"
            elif isinstance(default, float):
                val = repr(default)
            else:
                val = str(default)
            lines.append(f"{key} = {val}\n")
        if lines:
            out.write(f"[{block}]\n")
            out.writelines(lines)
            out.write("\n")
    return out.getvalue()
