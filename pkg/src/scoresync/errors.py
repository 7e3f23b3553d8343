"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-contract user input (CLI exit code 2)."""


class InvariantError(RuntimeError):
    """An internal invariant was violated (CLI exit code 3)."""
