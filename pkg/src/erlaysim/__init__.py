"""Erlay-style transaction relay: PinSketch set reconciliation plus
low-fanout flooding, with a deterministic discrete-event simulator that
compares it against plain flooding relay."""

__version__ = "0.1.0"
