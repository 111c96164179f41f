"""
shefk.errors - Exception types shared by the numerics and the CLI
"""


class DomainError(ValueError):
    """Invalid mathematical input (index out of range, nonpositive step, ...)"""


class ConfigurationError(ValueError):
    """Invalid or incomplete run configuration"""
