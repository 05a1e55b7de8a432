"""Disturbance-observer-based frequency and voltage regulation of an islanded
PV-diesel microgrid: LTI primitives, plant models, observer design, closed-loop
simulation, scenario sweeps, performance indices and identification."""

__version__ = "0.1.0"
