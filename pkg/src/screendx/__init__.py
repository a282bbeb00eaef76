"""screendx: camera-free capture-to-report pipeline for screen-photographed
medical images."""

__version__ = "0.1.0"
