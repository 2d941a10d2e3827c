from .config import ConfigError, ServerConfig, config_from_dict, load_config
from .core import DispatchCommand, EngineCore, EngineOutput, SyncTrainer
from .ingest import IngestError, datagram_to_event, decode_landmark_payload
from .runtime import EngineRuntime, Metronome, Outbox, UiHub
from .trace import ReplayResult, TraceError, TraceWriter, read_trace, replay_events, replay_file

__all__ = [
    "ConfigError", "ServerConfig", "config_from_dict", "load_config",
    "DispatchCommand", "EngineCore", "EngineOutput", "SyncTrainer",
    "IngestError", "datagram_to_event", "decode_landmark_payload",
    "EngineRuntime", "Metronome", "Outbox", "UiHub",
    "ReplayResult", "TraceError", "TraceWriter", "read_trace",
    "replay_events", "replay_file",
]
