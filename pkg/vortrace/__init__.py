"""vortrace package: stochastic 2D vorticity, passive tracer and ensemble statistics."""

__version__ = "0.1.0"

__all__ = [
    "app",
    "dynamics",
    "errors",
    "harness",
    "kernels",
    "lab_gui",
    "linearization",
    "noise",
    "snapshot",
    "spectral",
    "statistics",
    "tracer",
]
