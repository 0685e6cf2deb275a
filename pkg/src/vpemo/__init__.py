"""Speaker anonymization and privacy/emotion evaluation at the feature level."""
__version__ = "0.1.0"
