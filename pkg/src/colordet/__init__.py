"""Vehicle colour detection toolkit: preprocessing, backbone/FPN shapes,
box machinery, losses, evaluation and dataset tooling."""

__version__ = "0.1.0"
