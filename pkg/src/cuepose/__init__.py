"""cuepose: real-time gesture-to-sound-control engine.

Streams of pose/hand landmark frames come in over OSC or WebSocket, a
metronome-guided session turns deliberate gestures into a labeled dataset,
a small MLP learns to recognize them, and recognized cues go back out as
scheduled or continuous OSC sound-control commands.
"""

from . import cues, dataset, metrics, mlp, osc, pose, server, session

__version__ = "0.1.0"

__all__ = ["cues", "dataset", "metrics", "mlp", "osc", "pose", "server",
           "session", "__version__"]
