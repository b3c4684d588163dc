class UndefinedMetric(ValueError):
    """A metric whose denominator is empty; report it as N/A, never as 0."""
