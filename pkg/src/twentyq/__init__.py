"""Private noisy twenty-questions estimation against an eavesdropper."""

__version__ = "0.1.0"
