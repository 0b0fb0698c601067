"""Front-door debiased multi-hop claim verification over claim-evidence graphs."""

__version__ = "0.1.0"
