"""Run configuration files: INI sections with strict key validation.

Every key has a default except ``run.modulation`` and ``run.mapping``;
unknown sections or keys are rejected with a diagnostic naming the file,
section, and key. The same schema drives parsing, the generated help text,
and the annotated example shipped in ``configs/``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Any, Callable

from .channel import ChannelConfig, ChannelModel
from .phase_noise import PnConfig, PnMode
from .sim import MappingMode, SimConfig
from .transceiver import Compensation

__all__ = ["ConfigError", "CONFIG_SCHEMA", "load_sim_config", "schema_help"]


class ConfigError(ValueError):
    """Configuration problem with file/section/key context in the message."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_snr_grid(text: str) -> tuple[float, ...]:
    """Either 'start:step:stop' (inclusive) or a comma list of dB values."""
    text = text.strip()
    if ":" in text:
        start, step, stop = (float(p) for p in text.split(":"))
        if step <= 0:
            raise ValueError("SNR grid step must be positive")
        out = []
        v = start
        while v <= stop + 1e-9:
            out.append(round(v, 9))
            v += step
        return tuple(out)
    return tuple(float(p) for p in text.split(","))


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    default: Any          # None marks a required key
    help: str


CONFIG_SCHEMA: dict[str, dict[str, _Key]] = {
    "run": {
        "modulation": _Key(int, None, "MQAM order, 4 or 16 (required)"),
        "mapping": _Key(str, None, "classical | pn-aware (required)"),
        "compensation": _Key(str, "none", "none | single | double"),
        "snr_db": _Key(_parse_snr_grid, "0:5:40",
                       "SNR grid: start:step:stop or comma list"),
        "trials_per_point": _Key(int, 10000, "trial cap per SNR point"),
        "min_errors": _Key(int, 100,
                           "stop a point early after this many bit errors (0 = never)"),
        "master_seed": _Key(int, 0, "master seed for all random streams"),
        "channel_redraw_period": _Key(int, 100, "trials per channel realization"),
        "se": _Key(int, 8, "spectral efficiency in bits per symbol slot"),
        "na": _Key(int, 0, "active branch count; 0 derives se - log2(M)"),
        "n_tx": _Key(int, 32, "transmit antennas"),
        "n_rx": _Key(int, 8, "receive antennas"),
        "active_prior": _Key(float, 0.5,
                             "branch activation prior used by the threshold design"),
    },
    "pn": {
        "variance": _Key(float, 0.1, "phase-noise variance in rad^2 (0 disables)"),
        "mode": _Key(str, "clo", "clo | independent | general"),
        "correlation": _Key(float, 1.0,
                            "correlation coefficient, used by mode=general"),
    },
    "channel": {
        "model": _Key(str, "sv", "sv (clustered) | rayleigh (i.i.d. oracle)"),
        "n_clusters": _Key(int, 5, "clusters in the clustered model"),
        "n_rays": _Key(int, 10, "rays per cluster"),
        "angular_spread_deg": _Key(float, 7.5, "per-ray angular spread, degrees"),
        "los": _Key(_parse_bool, False, "replace the first cluster by a LOS ray"),
        "alpha_realizations": _Key(int, 10000,
                                   "draws for the power-normalization estimate"),
    },
}

_COMPENSATION = {"none": Compensation.NONE, "single": Compensation.SINGLE_STAGE,
                 "double": Compensation.DOUBLE_STAGE}
_PN_MODES = {"clo": PnMode.CLO, "independent": PnMode.INDEPENDENT,
             "general": PnMode.GENERAL}
_CHANNEL_MODELS = {"sv": ChannelModel.SALEH_VALENZUELA,
                   "rayleigh": ChannelModel.RAYLEIGH_IID}
_MAPPINGS = {"classical": MappingMode.CLASSICAL, "pn-aware": MappingMode.PN_AWARE}


def _extract(parser: configparser.ConfigParser, path: str) -> dict[str, dict[str, Any]]:
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}: [{section}]: unknown section")
        values[section] = {}
        for key, raw in parser.items(section):
            spec = CONFIG_SCHEMA[section].get(key)
            if spec is None:
                raise ConfigError(f"{path}: [{section}] {key}: unknown key")
            try:
                values[section][key] = spec.parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: [{section}] {key}: {exc}") from exc
    for section, keys in CONFIG_SCHEMA.items():
        values.setdefault(section, {})
        for key, spec in keys.items():
            if key not in values[section]:
                if spec.default is None:
                    raise ConfigError(f"{path}: [{section}] {key}: required key missing")
                default = spec.default
                if isinstance(default, str) and spec.parse is not str:
                    default = spec.parse(default)
                values[section][key] = default
    return values


def _lookup(path: str, section: str, key: str, table: dict, value: str):
    try:
        return table[value.strip().lower()]
    except KeyError:
        raise ConfigError(f"{path}: [{section}] {key}: {value!r} not one of "
                          f"{sorted(table)}") from None


def load_sim_config(path: str) -> SimConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"{path}: cannot read config file")
    v = _extract(parser, path)
    run, pn, chan = v["run"], v["pn"], v["channel"]

    mode = _lookup(path, "pn", "mode", _PN_MODES, pn["mode"])
    pn_cfg = PnConfig(
        variance=pn["variance"], mode=mode,
        correlation=pn["correlation"] if mode is PnMode.GENERAL else None)
    ch_cfg = ChannelConfig(
        n_tx=run["n_tx"], n_rx=run["n_rx"],
        model=_lookup(path, "channel", "model", _CHANNEL_MODELS, chan["model"]),
        n_clusters=chan["n_clusters"], n_rays=chan["n_rays"],
        angular_spread_deg=chan["angular_spread_deg"],
        los_present=chan["los"], alpha_realizations=chan["alpha_realizations"])
    try:
        return SimConfig(
            modulation=run["modulation"],
            mapping_mode=_lookup(path, "run", "mapping", _MAPPINGS, run["mapping"]),
            n_tx=run["n_tx"], n_rx=run["n_rx"],
            spectral_efficiency=run["se"],
            n_branches=run["na"] if run["na"] > 0 else None,
            snr_grid_db=run["snr_db"],
            pn=pn_cfg, channel=ch_cfg,
            compensation=_lookup(path, "run", "compensation", _COMPENSATION,
                                 run["compensation"]),
            trials_per_point=run["trials_per_point"],
            min_errors=run["min_errors"],
            master_seed=run["master_seed"],
            channel_redraw_period=run["channel_redraw_period"],
            active_prior=run["active_prior"],
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def schema_help() -> str:
    lines = ["configuration keys (INI sections, defaults in brackets):"]
    for section, keys in CONFIG_SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, spec in keys.items():
            default = "required" if spec.default is None else f"default {spec.default!r}"
            lines.append(f"    {key:22s} {spec.help} [{default}]")
    return "\n".join(lines)
