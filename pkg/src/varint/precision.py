"""Configurable-precision real arithmetic.

Every run computes either in native double precision or in software
extended precision (mpmath binary floating point, round-to-nearest-even),
selected once per run through a :class:`PrecisionContext`.  The context is
fixed before a run begins; values are plain ``float`` in the native path
and ``mpmath.mpf`` in the extended path, so the numerical kernels stay
generic over both.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Union

import mpmath
import numpy as np
from mpmath import mpf

from .errors import ConfigurationError, IllPosednessError

#: Significant decimal digits carried by IEEE double precision.
DOUBLE_DIGITS = 16

#: Minimum digits any experiment in scope can run with.
MIN_DIGITS = 10

#: Guard digits added to the working precision of extended contexts so that
#: rounding in long step sequences stays below the requested digit count.
GUARD_DIGITS = 3

Real = Union[float, mpf]


@dataclass(frozen=True)
class PrecisionContext:
    """Arithmetic context guaranteeing at least ``digits`` significant decimal digits.

    ``digits <= 16`` selects native IEEE double precision; anything above
    runs on mpmath's arbitrary-precision binary floats.  Scalars produced
    under a context are immutable values and safe to share across tasks.
    """

    digits: int

    def __post_init__(self):
        if self.digits < MIN_DIGITS:
            raise ConfigurationError(
                f"precision of {self.digits} digits is below the minimum of {MIN_DIGITS}"
            )

    # -- context properties -------------------------------------------------

    @property
    def is_native(self) -> bool:
        return self.digits <= DOUBLE_DIGITS

    @property
    def working_dps(self) -> int:
        return self.digits + GUARD_DIGITS

    @property
    def eps(self) -> float:
        """Machine epsilon of the working representation."""
        if self.is_native:
            return float(np.finfo(float).eps)
        prec = mpmath.libmp.libmpf.dps_to_prec(self.working_dps)
        return float(mpf(2) ** (1 - prec))

    @property
    def serialization_digits(self) -> int:
        """Significant digits written by :meth:`format`.

        Covers the context's digit guarantee and is large enough that
        ``parse(format(x)) == x`` exactly.
        """
        if self.is_native:
            return 17
        prec = mpmath.libmp.libmpf.dps_to_prec(self.working_dps)
        return int(math.ceil(prec * math.log10(2))) + 2

    @contextmanager
    def activate(self):
        """Set the global mpmath precision for the duration of a run.

        A no-op in the native path.  All run entry points wrap themselves
        in this so extended-precision arithmetic cannot silently fall back
        to mpmath's default precision.
        """
        if self.is_native:
            yield self
            return
        with mpmath.mp.workdps(self.working_dps):
            yield self

    # -- scalar and array construction --------------------------------------

    def real(self, x) -> Real:
        """Convert ``x`` (number or decimal string) to a context scalar."""
        if self.is_native:
            return float(x)
        with mpmath.mp.workdps(self.working_dps):
            return mpf(x)

    def array(self, values) -> np.ndarray:
        """1-D or 2-D array of context scalars."""
        if self.is_native:
            return np.asarray(values, dtype=float)
        arr = np.asarray(values, dtype=object)
        flat = [self.real(v) for v in arr.ravel()]
        return np.array(flat, dtype=object).reshape(arr.shape)

    def identity(self, n: int) -> np.ndarray:
        return self.array(np.eye(n))

    # -- elementary functions ------------------------------------------------

    def sqrt(self, x: Real) -> Real:
        return math.sqrt(x) if self.is_native else mpmath.sqrt(x)

    def cos(self, x: Real) -> Real:
        return math.cos(x) if self.is_native else mpmath.cos(x)

    def sin(self, x: Real) -> Real:
        return math.sin(x) if self.is_native else mpmath.sin(x)

    # -- linear algebra (systems here are tiny: n+1 or 2n unknowns) ----------

    def solve(self, A: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Solve ``A x = b``; raises :class:`IllPosednessError` when singular."""
        if self.is_native:
            try:
                return np.linalg.solve(A, b)
            except np.linalg.LinAlgError as exc:
                raise IllPosednessError(f"singular Jacobian: {exc}") from exc
        try:
            sol = mpmath.lu_solve(mpmath.matrix(A.tolist()), mpmath.matrix(list(b)))
        except ZeroDivisionError as exc:
            raise IllPosednessError(f"singular Jacobian: {exc}") from exc
        return np.array([sol[i] for i in range(len(b))], dtype=object)

    def cond_inf(self, A: np.ndarray) -> float:
        """Infinity-norm condition estimate; ``inf`` for a singular matrix."""
        if self.is_native:
            try:
                return float(np.linalg.norm(A, np.inf) * np.linalg.norm(np.linalg.inv(A), np.inf))
            except np.linalg.LinAlgError:
                return math.inf
        M = mpmath.matrix(A.tolist())
        try:
            return float(mpmath.mnorm(M, "inf") * mpmath.mnorm(M ** -1, "inf"))
        except ZeroDivisionError:
            return math.inf

    # -- textual serialization (decimal scientific notation) -----------------

    def format(self, x: Real) -> str:
        """Scientific-notation string carrying :attr:`serialization_digits` digits."""
        if self.is_native:
            return f"{float(x):.16e}"
        with mpmath.mp.workdps(self.working_dps):
            return mpmath.nstr(mpf(x), self.serialization_digits, min_fixed=1, max_fixed=0)

    def parse(self, s: str) -> Real:
        return self.real(s)


def with_precision(digits: int) -> PrecisionContext:
    """Create the arithmetic context for a run.

    ``digits=16`` gives standard double-precision behaviour; ``digits>=18``
    matches the extended-precision study settings.
    """
    if not isinstance(digits, int) or isinstance(digits, bool):
        raise ConfigurationError(f"precision digits must be an integer, got {digits!r}")
    return PrecisionContext(digits)


#: Default context: native IEEE double precision.
DOUBLE = PrecisionContext(DOUBLE_DIGITS)


def inf_norm(v) -> Real:
    """Max-abs of a scalar or vector, generic over both scalar types."""
    a = np.abs(v)
    return a.max() if isinstance(a, np.ndarray) else a
