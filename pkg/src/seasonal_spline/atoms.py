"""Atoms of the discretized search space.

Trend atoms live on the real line (shifted Green's functions and
monomials), seasonal atoms on the circle (shifted periodic Green's
functions and the constant).  Each atom knows how to evaluate itself and
how to integrate itself exactly over an interval, which is all the
sensing functionals need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import (
    OperatorSpec,
    PeriodicGreen,
    trend_green_antiderivative,
    trend_green_eval,
)


@dataclass(frozen=True, eq=False)
class TrendGreenAtom:
    """psi(. - knot) for a derivative trend operator."""

    op: OperatorSpec
    knot: float

    def eval(self, t):
        return trend_green_eval(self.op, np.asarray(t, dtype=float) - self.knot)

    def integral(self, a, b):
        return trend_green_antiderivative(self.op, a - self.knot, b - self.knot)


@dataclass(frozen=True, eq=False)
class MonomialAtom:
    """t^degree, degree in 0..N_T-1."""

    degree: int

    def eval(self, t):
        return np.asarray(t, dtype=float) ** self.degree

    def integral(self, a, b):
        d = self.degree
        return (b ** (d + 1) - a ** (d + 1)) / (d + 1)


@dataclass(frozen=True, eq=False)
class SeasonalGreenAtom:
    """rho(. - knot), 1-periodic."""

    green: PeriodicGreen
    knot: float

    def eval(self, t):
        return self.green.eval(np.asarray(t, dtype=float) - self.knot)

    def integral(self, a, b):
        return self.green.integral(a - self.knot, b - self.knot)

    def mean(self):
        return self.green.mean()


@dataclass(frozen=True, eq=False)
class ConstantAtom:
    """The constant function 1 on the circle."""

    def eval(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def integral(self, a, b):
        return b - a

    def mean(self):
        return 1.0


TREND_ATOM_TYPES = (TrendGreenAtom, MonomialAtom)
SEASONAL_ATOM_TYPES = (SeasonalGreenAtom, ConstantAtom)
