"""Mixed-integer geometric programming for electric powertrain design."""
__version__ = "0.1.0"
