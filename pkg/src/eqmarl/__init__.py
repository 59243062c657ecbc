"""Multi-agent actor-critic training with quantum and classical critics."""

__version__ = "0.1.0"
