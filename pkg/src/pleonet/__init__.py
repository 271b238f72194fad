"""pleonet: proliferated-LEO network simulation toolkit."""

__version__ = "0.1.0"
