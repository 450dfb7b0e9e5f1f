"""Closed-form linear algebra for real 2x2 matrices.

Everything the rest of the package needs from a matrix library fits in a few
exact formulas at this size: eigenvalues from the characteristic quadratic,
exponential and principal logarithm from the half-trace decomposition,
inversion by adjugate, and column stacking.  All types are immutable values
and all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mat2",
    "Vec2",
    "Vec4",
    "Mat2Error",
    "SingularMatrixError",
    "NonPositiveSpectrumError",
    "MatrixOverflowError",
    "eigenvalues",
    "expm",
    "logm",
    "logm_series",
    "inverse",
    "vec",
]


class Mat2Error(ValueError):
    """Base class for 2x2 linear-algebra failures."""


class SingularMatrixError(Mat2Error):
    """Matrix is numerically singular; carries the offending determinant."""

    def __init__(self, message: str, det: float):
        super().__init__(f"{message} (det={det!r})")
        self.det = det


class NonPositiveSpectrumError(Mat2Error):
    """An eigenvalue has nonpositive real part, so the principal log is undefined."""

    def __init__(self, message: str, eigs: tuple[complex, complex]):
        super().__init__(f"{message} (eigenvalues={eigs[0]!r}, {eigs[1]!r})")
        self.eigs = eigs


class MatrixOverflowError(Mat2Error):
    """A result entry exceeded the representable double range."""


def _check_finite(kind: str, *entries: float) -> None:
    for e in entries:
        if not math.isfinite(e):
            raise Mat2Error(f"{kind} entries must be finite, got {entries}")


@dataclass(frozen=True)
class Vec2:
    """Real 2-vector."""

    v1: float
    v2: float

    def __post_init__(self):
        object.__setattr__(self, "v1", float(self.v1))
        object.__setattr__(self, "v2", float(self.v2))
        _check_finite("Vec2", self.v1, self.v2)

    @staticmethod
    def zero() -> "Vec2":
        return Vec2(0.0, 0.0)

    @staticmethod
    def from_array(a) -> "Vec2":
        return Vec2(float(a[0]), float(a[1]))

    def to_array(self) -> np.ndarray:
        return np.array([self.v1, self.v2])

    def as_tuple(self) -> tuple[float, float]:
        return (self.v1, self.v2)

    def dot(self, other: "Vec2") -> float:
        return self.v1 * other.v1 + self.v2 * other.v2

    def max_norm(self) -> float:
        return max(abs(self.v1), abs(self.v2))

    def is_nonnegative(self) -> bool:
        return self.v1 >= 0.0 and self.v2 >= 0.0

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.v1 + other.v1, self.v2 + other.v2)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.v1 - other.v1, self.v2 - other.v2)

    def __neg__(self) -> "Vec2":
        return Vec2(-self.v1, -self.v2)

    def __mul__(self, c: float) -> "Vec2":
        return Vec2(self.v1 * c, self.v2 * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Mat2:
    """Real 2x2 matrix, stored row-major as m11, m12, m21, m22."""

    m11: float
    m12: float
    m21: float
    m22: float

    def __post_init__(self):
        for name in ("m11", "m12", "m21", "m22"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_finite("Mat2", self.m11, self.m12, self.m21, self.m22)

    @staticmethod
    def identity() -> "Mat2":
        return Mat2(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def zero() -> "Mat2":
        return Mat2(0.0, 0.0, 0.0, 0.0)

    @staticmethod
    def diagonal(d1: float, d2: float) -> "Mat2":
        return Mat2(d1, 0.0, 0.0, d2)

    @staticmethod
    def from_rows(row1, row2) -> "Mat2":
        return Mat2(row1[0], row1[1], row2[0], row2[1])

    @staticmethod
    def from_array(a) -> "Mat2":
        return Mat2(float(a[0][0]), float(a[0][1]), float(a[1][0]), float(a[1][1]))

    def to_array(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    def transpose(self) -> "Mat2":
        return Mat2(self.m11, self.m21, self.m12, self.m22)

    def trace(self) -> float:
        return self.m11 + self.m22

    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21

    def max_abs(self) -> float:
        return max(abs(self.m11), abs(self.m12), abs(self.m21), abs(self.m22))

    def __add__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.m11 + other.m11,
            self.m12 + other.m12,
            self.m21 + other.m21,
            self.m22 + other.m22,
        )

    def __sub__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.m11 - other.m11,
            self.m12 - other.m12,
            self.m21 - other.m21,
            self.m22 - other.m22,
        )

    def __neg__(self) -> "Mat2":
        return Mat2(-self.m11, -self.m12, -self.m21, -self.m22)

    def __mul__(self, c: float) -> "Mat2":
        return Mat2(self.m11 * c, self.m12 * c, self.m21 * c, self.m22 * c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Mat2):
            return Mat2(
                self.m11 * other.m11 + self.m12 * other.m21,
                self.m11 * other.m12 + self.m12 * other.m22,
                self.m21 * other.m11 + self.m22 * other.m21,
                self.m21 * other.m12 + self.m22 * other.m22,
            )
        if isinstance(other, Vec2):
            return Vec2(
                self.m11 * other.v1 + self.m12 * other.v2,
                self.m21 * other.v1 + self.m22 * other.v2,
            )
        return NotImplemented


@dataclass(frozen=True)
class Vec4:
    """Real 4-vector, the column-stacked image of a 2x2 matrix."""

    v1: float
    v2: float
    v3: float
    v4: float

    def __post_init__(self):
        for name in ("v1", "v2", "v3", "v4"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_finite("Vec4", self.v1, self.v2, self.v3, self.v4)

    def to_array(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.v3, self.v4])

    def dot(self, other: "Vec4") -> float:
        return (
            self.v1 * other.v1
            + self.v2 * other.v2
            + self.v3 * other.v3
            + self.v4 * other.v4
        )


def _real_roots(ht: float, det: float, disc: float) -> tuple[float, float]:
    """Stable roots ht +- sqrt(disc): the smaller-magnitude one via det/other.

    The det-based refinement is only trusted when it stays below the anchor
    root; when both roots sit near zero, det consists of cancellation noise
    and the direct formula is the honest answer.
    """
    r = math.sqrt(disc)
    if ht >= 0.0:
        hi = ht + r
        if hi > 0.0:
            lo = det / hi
            if abs(lo) <= hi:
                return lo, hi
        return ht - r, hi
    lo = ht - r
    hi = det / lo
    if abs(hi) <= abs(lo):
        return lo, hi
    return lo, ht + r


def _discriminant(m: Mat2) -> float:
    """Quarter of the squared eigenvalue gap: ((m22-m11)/2)^2 + m12*m21.

    Algebraically equal to half_trace^2 - det but free of the cancellation
    that form suffers when the diagonal entries are close.
    """
    d = 0.5 * (m.m22 - m.m11)
    return d * d + m.m12 * m.m21


def eigenvalues(m: Mat2) -> tuple[complex, complex]:
    """Eigenvalues of ``m``, ordered by real part (imaginary part breaks ties).

    Exact roots of the characteristic quadratic: half_trace +- sqrt(disc),
    the near-cancelling root recovered from the determinant.  Negative
    discriminant yields a conjugate pair.
    """
    ht = 0.5 * (m.m11 + m.m22)
    disc = _discriminant(m)
    if disc >= 0.0:
        lo, hi = _real_roots(ht, m.det(), disc)
        return complex(lo), complex(hi)
    w = math.sqrt(-disc)
    return complex(ht, -w), complex(ht, w)


# Series fallback kicks in when |xi1 - xi2| < 1e-8 * (1 + |half trace|); the
# closed-form divided differences lose nothing above it.
_BRANCH_TOL = 0.5e-8


def _cosh_sinhc(q: float, scale: float) -> tuple[float, float]:
    """cosh(mu) and sinh(mu)/mu as functions of q = mu^2 (q may be negative)."""
    if abs(q) < (_BRANCH_TOL * (1.0 + abs(scale))) ** 2:
        c = 1.0 + q / 2.0 + q * q / 24.0 + q * q * q / 720.0
        s = 1.0 + q / 6.0 + q * q / 120.0 + q * q * q / 5040.0
        return c, s
    if q > 0.0:
        mu = math.sqrt(q)
        return math.cosh(mu), math.sinh(mu) / mu
    w = math.sqrt(-q)
    return math.cos(w), math.sin(w) / w


# Past this eigenvalue half-gap the two-exponential eigenprojector form is
# used; inside it the half-trace form is safe (cancellation bounded by e^0.6).
_SPLIT_DISC = 0.09


def _exp_divided_difference(lo: float, hi: float) -> float:
    """(e^hi - e^lo)/(hi - lo), cancellation-free via expm1."""
    d = hi - lo
    if d == 0.0:
        return math.exp(lo)
    return math.exp(lo) * math.expm1(d) / d


def _expm_triangular(m: Mat2) -> tuple[float, float, float, float]:
    # eigenvalues are the diagonal entries, exactly
    q = _exp_divided_difference(m.m11, m.m22)
    return math.exp(m.m11), m.m12 * q, m.m21 * q, math.exp(m.m22)


def expm(m: Mat2) -> Mat2:
    """Matrix exponential in closed form.

    Triangular input keeps its exact structure (diagonal exponentials plus a
    divided difference).  Well-separated real eigenvalues use the
    eigenprojector (Lagrange) form exp(lo) P_lo + exp(hi) P_hi, which keeps
    each eigencomponent exact when the spectrum spans many orders of
    magnitude.  Otherwise, with ht = trace/2 and N = m - ht*I (so
    N^2 = disc*I), exp(m) = e^ht (cosh(mu) I + sinh(mu)/mu N) where
    mu^2 = disc; the hyperbolic pair becomes cos/sin for complex eigenvalues
    and a short series near the repeated-eigenvalue boundary.
    """
    ht = 0.5 * (m.m11 + m.m22)
    disc = _discriminant(m)
    try:
        if m.m12 == 0.0 or m.m21 == 0.0:
            r11, r12, r21, r22 = _expm_triangular(m)
        elif disc > _SPLIT_DISC:
            lo, hi = _real_roots(ht, m.det(), disc)
            e_lo = math.exp(lo)
            e_hi = math.exp(hi)
            # projector numerators via conjugate forms, so near-triangular
            # inputs keep full precision: r -+ d never cancels
            d = 0.5 * (m.m22 - m.m11)
            p = m.m12 * m.m21
            r = math.sqrt(disc)
            if d >= 0.0:
                u = d + r          # = hi - m11 = m22 - lo
                v = p / (d + r)    # = r - d = m11 - lo = hi - m22
            else:
                v = r - d
                u = p / (r - d)
            inv_sep = 0.5 / r
            diff = (e_hi - e_lo) * inv_sep
            r11 = (e_lo * u + e_hi * v) * inv_sep
            r22 = (e_lo * v + e_hi * u) * inv_sep
            r12 = m.m12 * diff
            r21 = m.m21 * diff
        else:
            c, s = _cosh_sinhc(disc, ht)
            e = math.exp(ht)
            r11 = e * (c + s * (m.m11 - ht))
            r12 = e * s * m.m12
            r21 = e * s * m.m21
            r22 = e * (c + s * (m.m22 - ht))
    except OverflowError:
        raise MatrixOverflowError(f"exp of {m} overflows") from None
    if not all(map(math.isfinite, (r11, r12, r21, r22))):
        raise MatrixOverflowError(f"exp of {m} exceeds the representable range")
    return Mat2(r11, r12, r21, r22)


def _log_divided_difference(lo: float, hi: float) -> float:
    """(log hi - log lo)/(hi - lo) for 0 < lo <= hi, cancellation-free."""
    d = hi - lo
    if d == 0.0:
        return 1.0 / lo
    return math.log1p(d / lo) / d


def _logm_triangular(m: Mat2) -> Mat2:
    if m.m11 <= 0.0 or m.m22 <= 0.0:
        raise NonPositiveSpectrumError(
            "principal log undefined", (complex(m.m11), complex(m.m22))
        )
    lo, hi = min(m.m11, m.m22), max(m.m11, m.m22)
    q = _log_divided_difference(lo, hi)
    return Mat2(math.log(m.m11), m.m12 * q, m.m21 * q, math.log(m.m22))


def logm(m: Mat2) -> Mat2:
    """Principal matrix logarithm; requires both eigenvalues to have positive real part.

    Triangular input is handled exactly on its diagonal.  Otherwise
    log(m) = p*I + q*(m - ht*I) with p the mean of the eigenvalue logs and q
    the divided difference (log x1 - log x2)/(x1 - x2), evaluated directly
    for a separated real spectrum, as atan(w/ht)/w for a conjugate pair, or
    by a series in disc/ht^2 near coincident eigenvalues.

    Raises:
        NonPositiveSpectrumError: if an eigenvalue has nonpositive real part.
    """
    if m.m12 == 0.0 or m.m21 == 0.0:
        return _logm_triangular(m)
    ht = 0.5 * (m.m11 + m.m22)
    det = m.det()
    disc = _discriminant(m)
    if disc >= 0.0:
        lo, hi = _real_roots(ht, det, disc)
        if lo <= 0.0:
            raise NonPositiveSpectrumError(
                "principal log undefined", (complex(lo), complex(hi))
            )
        p = 0.5 * (math.log(lo) + math.log(hi))
        r2 = disc / (ht * ht)
        if r2 < 1e-3:
            q = (1.0 + r2 / 3.0 + r2**2 / 5.0 + r2**3 / 7.0 + r2**4 / 9.0) / ht
        else:
            q = (math.log(hi) - math.log(lo)) / (hi - lo)
    else:
        if ht <= 0.0:
            w = math.sqrt(-disc)
            raise NonPositiveSpectrumError(
                "principal log undefined", (complex(ht, -w), complex(ht, w))
            )
        r2 = disc / (ht * ht)
        if r2 > -1e-3:
            q = (1.0 + r2 / 3.0 + r2**2 / 5.0 + r2**3 / 7.0 + r2**4 / 9.0) / ht
        else:
            w = math.sqrt(-disc)
            q = math.atan2(w, ht) / w
        p = 0.5 * math.log(det)
    return Mat2(
        p + q * (m.m11 - ht),
        q * m.m12,
        q * m.m21,
        p + q * (m.m22 - ht),
    )


def logm_series(m: Mat2, max_terms: int = 400, tol: float = 1e-16) -> Mat2:
    """Matrix log via the Mercator series sum_k (-1)^(k-1) (m - I)^k / k.

    Cross-check companion to :func:`logm`; only valid when the spectral radius
    of m - I is below one, which is checked up front.
    """
    n = m - Mat2.identity()
    rad = max(abs(e) for e in eigenvalues(n))
    if rad >= 1.0:
        raise Mat2Error(f"log series diverges: spectral radius of (m - I) is {rad}")
    term = n
    acc = n
    sign = 1.0
    for k in range(2, max_terms + 1):
        term = term @ n
        sign = -sign
        increment = sign * (1.0 / k) * term
        acc = acc + increment
        if increment.max_abs() <= tol * max(1.0, acc.max_abs()):
            break
    return acc


def inverse(m: Mat2) -> Mat2:
    """Inverse by adjugate over determinant.

    Raises:
        SingularMatrixError: if |det| <= 1e-14 * max-abs entry.
    """
    det = m.det()
    if abs(det) <= 1e-14 * m.max_abs():
        raise SingularMatrixError("matrix is numerically singular", det)
    inv_det = 1.0 / det
    return Mat2(
        m.m22 * inv_det, -m.m12 * inv_det, -m.m21 * inv_det, m.m11 * inv_det
    )


def vec(m: Mat2) -> Vec4:
    """Column stacking: columns of ``m`` top to bottom, so (m11, m21, m12, m22)."""
    return Vec4(m.m11, m.m21, m.m12, m.m22)
