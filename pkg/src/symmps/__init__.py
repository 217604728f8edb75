"""symmps: exact simulator for symmetric circuits, measurements and feedforward on MPS."""

__version__ = "0.1.0"
