"""Admissible damping coefficients and the exponents of the extinction theory.

For ``0 < m < 1`` the admissible sector is

    C(m)     = {Im z > 0 and 2 sqrt(m) Im z >= (1 - m) |Re z|}
    D(m)     = {Im z > 0 and 2 sqrt(m) Im z  = (1 - m) Re z}
    C_int(m) = C(m) minus D(m)

with the degenerate cases C(0) = {Re z = 0, Im z > 0} and C(1) = {Im z > 0}.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoMultiplierFound

BOUNDARY_RTOL = 1e-12
ANGLE_GRID_SIZE = 4096


class Classification(enum.Enum):
    InteriorOfC = "InteriorOfC"
    OnBoundaryD = "OnBoundaryD"
    # Kept for interface completeness: with C(m) = C_int(m) u D(m) no coefficient
    # of C(m) falls outside the two classes above, so this value is never produced.
    InCNotInterior = "InCNotInterior"
    OutsideC = "OutsideC"


def _check_m(m):
    if not (0.0 <= m <= 1.0) or math.isnan(m):
        raise DomainError(f"saturation exponent m={m} outside [0, 1]")


def classify_coefficient(a: complex, m: float) -> Classification:
    """Classify ``a`` against C(m), D(m), C_int(m).

    The D-equality and the C(0) condition ``Re a = 0`` are tested with a
    relative tolerance of 1e-12 so that coefficients within roundoff of the
    excluded ray are flagged instead of being silently called interior.
    """
    _check_m(m)
    a = complex(a)
    re, im = a.real, a.imag
    if not im > 0.0:
        return Classification.OutsideC
    if m == 0.0:
        if abs(re) <= BOUNDARY_RTOL * im:
            return Classification.InteriorOfC
        return Classification.OutsideC
    if m == 1.0:
        return Classification.InteriorOfC
    lhs = 2.0 * math.sqrt(m) * im
    rhs = (1.0 - m) * abs(re)
    near = abs(lhs - rhs) <= BOUNDARY_RTOL * (lhs + rhs)
    if near and re > 0.0:
        return Classification.OnBoundaryD
    if lhs < rhs and not near:
        return Classification.OutsideC
    return Classification.InteriorOfC


def in_interior(a: complex, m: float) -> bool:
    return classify_coefficient(a, m) is Classification.InteriorOfC


def extinction_exponent(N: int, ell: int, m: float) -> float:
    """delta_ell = ((N + 2 ell) - m (N - 2 ell)) / (4 ell)."""
    if N < 1:
        raise DomainError(f"space dimension N={N} must be >= 1")
    if ell not in (1, 2):
        raise DomainError(f"regularity level ell={ell} must be 1 or 2")
    _check_m(m)
    return ((N + 2 * ell) - m * (N - 2 * ell)) / (4 * ell)


def multiplier_angles(n: int = ANGLE_GRID_SIZE) -> np.ndarray:
    """Uniform open grid in (-pi/2, 0), ordered by increasing |angle|."""
    k = np.arange(1, n + 1)
    return -0.5 * math.pi * k / (n + 1)


def is_valid_multiplier(a: complex, m: float, b: complex, atol: float = 1e-14) -> bool:
    """Check |b| = 1, Re b > 0, Im b < 0 and a*b in C_int(m)."""
    b = complex(b)
    return (
        abs(abs(b) - 1.0) <= atol
        and b.real > 0.0
        and b.imag < 0.0
        and in_interior(a * b, m)
    )


def find_unimodular_multiplier(a: complex, m: float) -> complex:
    """Smallest clockwise rotation ``b`` of the unit circle keeping ``a*b`` in C_int(m).

    Raises
    ------
    DomainError
        If ``m`` is 0 or 1 (no interior set is defined there) or ``a`` is not
        in C_int(m).
    NoMultiplierFound
        If no grid angle works.
    """
    _check_m(m)
    if m in (0.0, 1.0):
        raise DomainError("a unimodular multiplier is only defined for 0 < m < 1")
    if not in_interior(a, m):
        raise DomainError(f"a={a} is not in C_int({m})")
    for phi in multiplier_angles():
        b = complex(math.cos(phi), math.sin(phi))
        if is_valid_multiplier(a, m, b):
            return b
    raise NoMultiplierFound(f"no admissible rotation for a={a}, m={m}")


@dataclass(frozen=True)
class CoefficientContext:
    a: complex
    m: float
    classification: Classification = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "classification", classify_coefficient(self.a, self.m))

    @property
    def admissible(self) -> bool:
        return self.classification is Classification.InteriorOfC


@dataclass(frozen=True)
class ExtinctionExponents:
    """Exponent and ODE-comparison coefficients for one (N, ell) pair.

    ``alpha`` is the dissipation coefficient Im(a) / (C_GN * S^(N(1-m)/(2 ell)))
    where S is the sup of ||grad u|| (ell = 1) or ||Laplacian u|| (ell = 2);
    ``beta`` is the m = 0 variant built from ``omega_f = Im(a) - ||f||_inf``.
    """

    N: int
    ell: int
    delta: float
    alpha: float = math.nan
    beta: float = math.nan
    omega_f: float = math.nan


def exponents(
    ctx: CoefficientContext,
    N: int,
    ell: int,
    c_gn: float | None = None,
    sup_norm: float | None = None,
    f_sup: float = 0.0,
) -> ExtinctionExponents:
    m = ctx.m
    delta = extinction_exponent(N, ell, m)
    alpha = beta = math.nan
    omega_f = ctx.a.imag - f_sup
    if c_gn is not None and sup_norm is not None and c_gn > 0.0:
        s = max(sup_norm, np.finfo(float).tiny)
        alpha = ctx.a.imag / (c_gn * s ** (N * (1.0 - m) / (2 * ell)))
        if m == 0.0:
            beta = 2.0 * omega_f / (c_gn * s ** (N / (2 * ell)))
    return ExtinctionExponents(N=N, ell=ell, delta=delta, alpha=alpha, beta=beta, omega_f=omega_f)
