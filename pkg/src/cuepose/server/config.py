"""Server configuration: a JSON file plus environment overrides.

Endpoints are "host:port" strings. ``CUEPOSE_OSC_IN``, ``CUEPOSE_OSC_OUT``
and ``CUEPOSE_WS`` override the corresponding file fields.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from ..cues import DetectorCfg

DEFAULT_STEMS = ("drums", "bass", "vocals", "melody")

ENV_OSC_IN = "CUEPOSE_OSC_IN"
ENV_OSC_OUT = "CUEPOSE_OSC_OUT"
ENV_WS = "CUEPOSE_WS"


class ConfigError(Exception):
    pass


def _parse_endpoint(value: str, fieldname: str) -> tuple[str, int]:
    host, sep, port = str(value).rpartition(":")
    if not sep or not host:
        raise ConfigError(f"{fieldname}: expected host:port, got {value!r}")
    try:
        port_num = int(port)
    except ValueError:
        raise ConfigError(f"{fieldname}: bad port in {value!r}") from None
    if not 0 < port_num < 65536:
        raise ConfigError(f"{fieldname}: port out of range in {value!r}")
    return host, port_num


@dataclass(frozen=True)
class ServerConfig:
    osc_listen: tuple[str, int] = ("127.0.0.1", 9000)
    osc_out: tuple[str, int] = ("127.0.0.1", 9001)
    ws_listen: tuple[str, int] = ("127.0.0.1", 8765)
    model_path: str | None = None
    scaler_path: str | None = None
    mapping_path: str | None = None
    dataset_dir: str = "datasets"
    trace_path: str | None = None
    detector: DetectorCfg = field(default_factory=DetectorCfg)
    gain_unit: float = 0.05
    pitch_unit: int = 1
    tempo_unit: float = 1.0
    stems: tuple[str, ...] = DEFAULT_STEMS
    mode: str = "train"

    def __post_init__(self):
        ports = [self.osc_listen[1], self.osc_out[1], self.ws_listen[1]]
        if len(set(ports)) != len(ports):
            raise ConfigError(f"osc_listen/osc_out/ws_listen ports must be distinct: {ports}")
        if self.mode not in ("train", "perform"):
            raise ConfigError(f"mode must be train or perform, got {self.mode!r}")
        if not self.stems:
            raise ConfigError("stems must be non-empty")


def _apply_env(doc: dict) -> dict:
    for env, key in ((ENV_OSC_IN, "osc_listen"), (ENV_OSC_OUT, "osc_out"), (ENV_WS, "ws_listen")):
        if os.environ.get(env):
            doc[key] = os.environ[env]
    return doc


def config_from_dict(doc: dict) -> ServerConfig:
    doc = _apply_env(dict(doc))
    known = {"osc_listen", "osc_out", "ws_listen", "model_path", "scaler_path",
             "mapping_path", "dataset_dir", "trace_path", "detector", "units",
             "stems", "mode"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")
    det = doc.get("detector", {})
    units = doc.get("units", {})
    try:
        detector = DetectorCfg(float(det.get("theta", 0.8)), int(det.get("k", 3)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"detector: {exc}") from None
    return ServerConfig(
        osc_listen=_parse_endpoint(doc.get("osc_listen", "127.0.0.1:9000"), "osc_listen"),
        osc_out=_parse_endpoint(doc.get("osc_out", "127.0.0.1:9001"), "osc_out"),
        ws_listen=_parse_endpoint(doc.get("ws_listen", "127.0.0.1:8765"), "ws_listen"),
        model_path=doc.get("model_path"),
        scaler_path=doc.get("scaler_path"),
        mapping_path=doc.get("mapping_path"),
        dataset_dir=str(doc.get("dataset_dir", "datasets")),
        trace_path=doc.get("trace_path"),
        detector=detector,
        gain_unit=float(units.get("gain", 0.05)),
        pitch_unit=int(units.get("pitch", 1)),
        tempo_unit=float(units.get("tempo", 1.0)),
        stems=tuple(doc.get("stems", DEFAULT_STEMS)),
        mode=str(doc.get("mode", "train")),
    )


_PATH_FIELDS = ("model_path", "scaler_path", "mapping_path", "dataset_dir", "trace_path")


def load_config(path) -> ServerConfig:
    """Read a config file; relative paths resolve against the file's directory."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    base = os.path.dirname(os.path.abspath(path))
    for key in _PATH_FIELDS:
        value = doc.get(key)
        if isinstance(value, str) and value and not os.path.isabs(value):
            doc[key] = os.path.join(base, value)
    return config_from_dict(doc)
