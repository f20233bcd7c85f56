"""Cell-grid IR, RTF bridge, parity harness and macro-library analyzer for clinical TFL reporting."""

__version__ = "0.1.0"
