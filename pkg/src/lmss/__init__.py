"""Linear multifractional stable sheets: synthesis, local times and numerical checks."""

__version__ = "0.1.0"
