"""Error types mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid or unknown configuration (exit code 2)."""


class NumericError(RuntimeError):
    """Non-finite loss or objective component (exit code 3)."""
