"""Calibration toolkit for post-fabrication frequency trimming of
readout/Purcell resonator pairs and companion transmon trimming."""

from . import errors, fitting, pairmodel, planner, readout, registry, transmon

__all__ = ["errors", "fitting", "pairmodel", "planner", "readout", "registry", "transmon"]

__version__ = "0.1.0"
