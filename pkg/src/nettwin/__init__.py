"""Digital-twin controlled-rearing experiments for pixels-to-actions agents."""

__version__ = "0.1.0"
