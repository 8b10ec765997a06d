"""Exception types shared across the package."""


class RooftempError(Exception):
    """Base class for all package errors."""


class DomainError(RooftempError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OutOfTableError(DomainError):
    """Exitance outside the range covered by a Planck lookup table."""

    def __init__(self, value, lo, hi):
        self.value = value
        self.lo = lo
        self.hi = hi
        super().__init__(
            f"exitance {value!r} W/m^2 outside lookup table range [{lo:.6g}, {hi:.6g}]"
        )


class ParseError(RooftempError, ValueError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class CoverageError(DomainError):
    """A spectral curve does not span the requested band."""


class DegenerateFitError(RooftempError, ValueError):
    pass


class GeometryError(RooftempError, ValueError):
    pass


class ConfigError(RooftempError, ValueError):
    pass


class MaterialLookupError(RooftempError, KeyError):
    def __init__(self, material, context=""):
        self.material = material
        msg = f"no emissivity for material {material!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class UnmatchedTargetError(RooftempError, ValueError):
    pass


class OutOfExtentError(RooftempError, ValueError):
    pass


class NodataError(RooftempError, ValueError):
    pass


class PruningRefusedError(RooftempError, ValueError):
    pass
