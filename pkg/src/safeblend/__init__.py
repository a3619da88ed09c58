"""Hard-constrained neural prediction by blending a task network with a
certified linear decision rule."""

__version__ = "0.1.0"
