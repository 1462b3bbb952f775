"""Population training with a shared-trunk meta-agent on cooperative matrix games."""
__version__ = "0.1.0"
