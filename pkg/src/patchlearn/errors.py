"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input data (shapes, signs, non-finite values)."""


class ConfigError(ValueError):
    """Invalid configuration: geometry, resolution, or scheme parameters."""


class GeometryError(ConfigError):
    """Grids, teeth, or patches that do not fit the stated domain."""


class NumericalError(RuntimeError):
    """A numerical computation failed (blow-up, undefined metric)."""


class InstabilityError(NumericalError):
    """A time integration produced non-finite or unbounded values."""
