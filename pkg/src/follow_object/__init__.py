"""Follow-the-object curriculum learning for sparse-reward manipulation."""
__version__ = "0.1.0"
