"""Planning-under-uncertainty toolkit for interactive driving simulation:
hierarchical intent/mode belief tracking, entropy-driven active probing,
KL-based behavior influence, and CVaR-capped receding-horizon control."""

__version__ = "0.1.0"
