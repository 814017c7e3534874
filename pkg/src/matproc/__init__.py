"""Process-provenance toolkit: graph compilation, benchmark generation, and
process-memory reasoning for materials synthesis records."""

__version__ = "0.1.0"
