"""Regular two-level designs under blocking, split-plot and strip-plot restrictions."""

__version__ = "0.1.0"
