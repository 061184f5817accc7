"""Exception types raised by the simulator."""


class GeometryError(ValueError):
    """Degenerate or out-of-range geometry (zero vector, bad element index)."""


class ConfigError(ValueError):
    """Invalid configuration value or malformed scenario file.

    ``field`` names the offending key when known, ``line`` the 1-based line
    number in the source file.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(f"'{field}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class GridError(ValueError):
    """Empty grid, off-grid shift, or mismatched tensor dimensions."""
