"""Exception types raised by the simulator.

Errors raised inside the outer fixed-point loop are annotated with the
iteration index ``k`` and timestep ``n`` at which they happened.
"""


class AleFsiError(Exception):
    """Base class for all simulator errors."""

    iteration: int | None = None
    timestep: int | None = None

    def annotate(self, iteration=None, timestep=None):
        if iteration is not None:
            self.iteration = iteration
        if timestep is not None:
            self.timestep = timestep
        return self

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.iteration is not None:
            where.append(f"k={self.iteration}")
        if self.timestep is not None:
            where.append(f"n={self.timestep}")
        if where:
            msg = f"{msg} ({', '.join(where)})"
        return msg


# mesh
class GeometryInfeasible(AleFsiError):
    pass


class MeshQualityFailure(AleFsiError):
    pass


class ElementInversion(AleFsiError):
    def __init__(self, triangle, area):
        super().__init__(f"triangle {triangle} has non-positive signed area {area:.3e}")
        self.triangle = int(triangle)
        self.area = float(area)


class SnapTooLarge(AleFsiError):
    pass


# linear algebra
class SingularSystem(AleFsiError):
    pass


class ResidualTooLarge(AleFsiError):
    pass


class PicardDiverged(AleFsiError):
    pass


# rigid body / iteration
class NonFiniteLoad(AleFsiError):
    pass


class CollisionGuard(AleFsiError):
    pass


# configuration
class ParseError(AleFsiError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InconsistentConfig(AleFsiError):
    pass
