"""Near-threshold optomechanical backaction amplifier simulator."""
__version__ = "0.1.0"
