"""NOMA sub-channel and power allocation for smart factories with a numpy DQN."""

__version__ = "0.1.0"
