"""Oscillator coupled to a thermal Bose field: resonances, scattering operators and correlations."""
__version__ = "0.1.0"
