"""Higher orbital integrals on motion groups and reductive groups."""

__version__ = "0.1.0"
