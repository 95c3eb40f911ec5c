"""Exception types shared across the toolkit."""


class DataError(Exception):
    """Malformed corpora, manifests, feature files, or empty inputs."""


class NumericalError(Exception):
    """Training or inference produced non-finite values."""


class UsageError(Exception):
    """Bad command-line arguments or configuration keys."""
