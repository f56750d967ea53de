class PlotkitError(Exception):
    """Malformed or unusable input file."""
