"""Classical fidelity limits and quantum-domain certification for quantum channels."""

__version__ = "0.1.0"
