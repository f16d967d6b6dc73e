"""Exception hierarchy.

Every error carries the process exit code the CLI reports for it:
2 validation, 3 numerical failure, 4 I/O failure.
"""


class MapesError(Exception):
    exit_code = 1


class ValidationError(MapesError, ValueError):
    exit_code = 2


class MalformedInput(ValidationError):
    pass


class ViaConstraintViolation(ValidationError):
    def __init__(self, offending):
        self.offending = list(offending)
        shown = ", ".join(str(t) for t in self.offending[:10])
        more = "" if len(self.offending) <= 10 else f" (+{len(self.offending) - 10} more)"
        super().__init__(f"via present above/below an absent pixel at (i, j, slice): {shown}{more}")


class DimensionMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class RepresentationMismatch(ValidationError):
    pass


class PortCountMismatch(ValidationError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class NonIncreasingFrequencies(ValidationError):
    pass


class HashMismatch(ValidationError):
    pass


class ReciprocityError(ValidationError):
    def __init__(self, violations):
        self.violations = list(violations)
        f, p, q, dev = self.violations[0]
        super().__init__(
            f"{len(self.violations)} non-reciprocal entries; first at freq index {f}, "
            f"ports ({p}, {q}), relative deviation {dev:.3g}"
        )


class SingularSystem(MapesError, ArithmeticError):
    exit_code = 3

    def __init__(self, freq_hz=None, cond=None, detail=""):
        self.freq_hz = freq_hz
        self.cond = cond
        msg = "loaded virtual-port system is numerically singular"
        if freq_hz is not None:
            msg += f" at {freq_hz:.6g} Hz"
        if cond is not None:
            msg += f" (condition estimate {cond:.3g})"
        if detail:
            msg += f": {detail}"
        msg += "; consider adding loss to the prior or to the via impedance"
        super().__init__(msg)


class IOFailure(MapesError, OSError):
    exit_code = 4


class CorruptCache(IOFailure):
    pass
