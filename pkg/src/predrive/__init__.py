"""predrive: prediction-aware social RL for mixed-autonomy highway driving."""

__version__ = "0.1.0"
