"""Goal-conditioned RL lab: hindsight relabeling variants on small 2-D games."""

__version__ = "0.1.0"
