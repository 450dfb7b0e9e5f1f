"""Analytic objects of the coupled two-factor square-root diffusion.

The model is the nonnegative diffusion on [0, inf)^2

    dX_t = (A - B X_t) dt + Sigma sqrt(X_t) dW_t,

with A = (a1, a2), B = [[b11, -b12], [-b21, b22]], Sigma = diag(sigma1,
sigma2) and independent Brownian drivers.  This module provides parameter
validation, the branching mechanism and its Riccati flow (which determine the
transition Laplace transform), the stationary Laplace transform, and the
exact conditional first and second moments used by the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mat2 import Mat2, Vec2, eigenvalues, expm, inverse

__all__ = [
    "ModelParams",
    "RiccatiSolution",
    "EtaBasis",
    "ModelError",
    "StepTooLargeError",
    "NonErgodicError",
    "phi",
    "solve_riccati",
    "transition_laplace",
    "stationary_laplace",
    "mean_coefficients",
    "conditional_mean",
    "eta_basis",
    "eta_matrices",
    "conditional_variance",
]

# A Riccati component this far below zero means the step size failed to track
# the flow; smaller excursions are rounding and get clamped.
_NEGATIVITY_TOL = 1e-12


class ModelError(ValueError):
    """Base class for model-level failures."""


class StepTooLargeError(ModelError):
    """Riccati step produced a component below the negativity tolerance."""


class NonErgodicError(ModelError):
    """Operation requires the ergodicity condition kappa < 1."""


@dataclass(frozen=True)
class ModelParams:
    """Parameter vector (a1, a2, b11, b12, b21, b22, sigma1, sigma2).

    Immigration rates a1, a2, mean-reversion rates b11, b22 and diffusion
    coefficients sigma1, sigma2 must be strictly positive; the cross-feed
    rates b12, b21 must be nonnegative.  Construction does not require
    ergodicity: kappa() >= 1 is allowed but flagged, and operations that
    assume a stationary regime raise NonErgodicError.
    """

    a1: float
    a2: float
    b11: float
    b12: float
    b21: float
    b22: float
    sigma1: float
    sigma2: float

    def __post_init__(self):
        for name in ("a1", "a2", "b11", "b12", "b21", "b22", "sigma1", "sigma2"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not math.isfinite(value):
                raise ModelError(f"{name} must be finite, got {value}")
        for name in ("a1", "a2", "b11", "b22", "sigma1", "sigma2"):
            if getattr(self, name) <= 0.0:
                raise ModelError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("b12", "b21"):
            if getattr(self, name) < 0.0:
                raise ModelError(f"{name} must be >= 0, got {getattr(self, name)}")

    def kappa(self) -> float:
        """Coupling ratio b12*b21/(b11*b22); below one means ergodic."""
        return self.b12 * self.b21 / (self.b11 * self.b22)

    @property
    def is_ergodic(self) -> bool:
        return self.kappa() < 1.0

    def drift_vector(self) -> Vec2:
        return Vec2(self.a1, self.a2)

    def reversion_matrix(self) -> Mat2:
        return Mat2(self.b11, -self.b12, -self.b21, self.b22)

    def sigma_squared(self) -> tuple[float, float]:
        return (self.sigma1**2, self.sigma2**2)

    def reversion_rates(self) -> tuple[float, float]:
        """Eigenvalues of B, ascending.  Always real since b12*b21 >= 0."""
        lo, hi = eigenvalues(self.reversion_matrix())
        return (lo.real, hi.real)

    def is_diagonal(self) -> bool:
        return self.b12 == 0.0 and self.b21 == 0.0

    def as_theta(self) -> np.ndarray:
        """Flatten to (a1, a2, b11, b12, b21, b22, sigma1, sigma2)."""
        return np.array(
            [self.a1, self.a2, self.b11, self.b12, self.b21, self.b22,
             self.sigma1, self.sigma2]
        )

    @staticmethod
    def from_theta(theta) -> "ModelParams":
        return ModelParams(*(float(t) for t in theta))


def phi(params: ModelParams, lam: Vec2) -> Vec2:
    """Branching mechanism driving the exponent of the Laplace transform.

        phi1(l) = b11*l1 - b21*l2 + (sigma1^2/2)*l1^2
        phi2(l) = -b12*l1 + b22*l2 + (sigma2^2/2)*l2^2

    The cross coefficients enter transposed relative to the drift matrix B:
    the exponent evolves under the adjoint linear flow (v_t(l) -> e^{-B^T t} l
    as both sigmas -> 0), which is exactly what makes exp(-<x, v_t(l)>)
    reproduce the conditional mean e^{-Bt}x of the forward process.
    """
    p1, p2 = _phi_pair(params, lam.v1, lam.v2)
    return Vec2(p1, p2)


def _phi_pair(p: ModelParams, v1: float, v2: float) -> tuple[float, float]:
    return (
        p.b11 * v1 - p.b21 * v2 + 0.5 * p.sigma1**2 * v1 * v1,
        -p.b12 * v1 + p.b22 * v2 + 0.5 * p.sigma2**2 * v2 * v2,
    )


@dataclass(frozen=True)
class RiccatiSolution:
    """Grid solution of dv/dt = -phi(v), v_0 = lam, componentwise nonnegative."""

    times: np.ndarray
    values: np.ndarray
    lam: Vec2

    def final(self) -> Vec2:
        return Vec2(self.values[-1, 0], self.values[-1, 1])


def solve_riccati(
    params: ModelParams, lam: Vec2, t_max: float, dt: float
) -> RiccatiSolution:
    """Integrate dv/dt = -phi(v) from v_0 = lam with classical fixed-step RK4.

    The step count is rounded up to an even number so the grid doubles as a
    Simpson quadrature grid.  Components that dip below zero by at most the
    negativity tolerance are clamped to zero; a larger excursion raises
    StepTooLargeError, signalling that dt is too coarse for these parameters.
    """
    if not lam.is_nonnegative():
        raise ModelError(f"lam must be componentwise >= 0, got {lam}")
    if dt <= 0.0 or t_max < dt:
        raise ModelError(f"need 0 < dt <= t_max, got dt={dt}, t_max={t_max}")
    n = int(math.ceil(t_max / dt - 1e-9))
    if n % 2:
        n += 1
    n = max(n, 2)
    h = t_max / n
    values = np.empty((n + 1, 2))
    v1, v2 = lam.v1, lam.v2
    values[0] = (v1, v2)
    for j in range(n):
        k11, k12 = _phi_pair(params, v1, v2)
        u1, u2 = v1 - 0.5 * h * k11, v2 - 0.5 * h * k12
        k21, k22 = _phi_pair(params, u1, u2)
        u1, u2 = v1 - 0.5 * h * k21, v2 - 0.5 * h * k22
        k31, k32 = _phi_pair(params, u1, u2)
        u1, u2 = v1 - h * k31, v2 - h * k32
        k41, k42 = _phi_pair(params, u1, u2)
        v1 = v1 - (h / 6.0) * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
        v2 = v2 - (h / 6.0) * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
        if v1 < 0.0 or v2 < 0.0:
            if v1 < -_NEGATIVITY_TOL or v2 < -_NEGATIVITY_TOL:
                raise StepTooLargeError(
                    f"component went negative ({v1}, {v2}) at t={h * (j + 1)}; "
                    f"reduce dt={dt}"
                )
            v1 = max(v1, 0.0)
            v2 = max(v2, 0.0)
        values[j + 1] = (v1, v2)
    times = np.linspace(0.0, t_max, n + 1)
    return RiccatiSolution(times=times, values=values, lam=lam)


def _simpson(samples: np.ndarray, h: float) -> float:
    """Composite Simpson rule over an even number of panels of width h."""
    n = len(samples) - 1
    if n % 2:
        raise ValueError("Simpson rule needs an even panel count")
    weights = np.ones(n + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return (h / 3.0) * float(weights @ samples)


def transition_laplace(
    params: ModelParams,
    x: Vec2,
    lam: Vec2,
    t: float,
    dt: float | None = None,
) -> float:
    """E[exp(-<lam, X_t>) | X_0 = x] = exp(-<x, v_t(lam)> - int_0^t <A, v_s(lam)> ds).

    The time integral uses Simpson's rule on the Riccati grid; dt defaults to
    t/200.  Result lies in (0, 1].
    """
    if not x.is_nonnegative() or not lam.is_nonnegative():
        raise ModelError("x and lam must be componentwise >= 0")
    if t < 0.0:
        raise ModelError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return math.exp(-x.dot(lam))
    if dt is None:
        dt = t / 200.0
    sol = solve_riccati(params, lam, t, dt)
    a = params.drift_vector().to_array()
    integral = _simpson(sol.values @ a, sol.times[1] - sol.times[0])
    return math.exp(-x.dot(sol.final()) - integral)


def _stationary_dt(params: ModelParams, lam: Vec2) -> float:
    rate = max(
        params.b11 + params.sigma1**2 * lam.v1,
        params.b22 + params.sigma2**2 * lam.v2,
        1.0,
    )
    return 0.01 / rate


def stationary_laplace(
    params: ModelParams, lam: Vec2, dt: float | None = None
) -> float:
    """Laplace transform of the stationary law: exp(-int_0^inf <A, v_s(lam)> ds).

    Requires kappa < 1.  The integral is truncated once the comparison bound
    on the remaining tail, <B^{-1}A, v(T)>, drops below 1e-10: past T the
    Riccati flow is dominated by the linear flow started from v(T), whose
    integral against A is exactly that inner product.
    """
    if not params.is_ergodic:
        raise NonErgodicError(
            f"stationary law requires kappa < 1, got kappa={params.kappa()}"
        )
    if not lam.is_nonnegative():
        raise ModelError(f"lam must be componentwise >= 0, got {lam}")
    if lam.v1 == 0.0 and lam.v2 == 0.0:
        return 1.0
    if dt is None:
        dt = _stationary_dt(params, lam)
    xi_min, _ = params.reversion_rates()
    segment = 20.0 / xi_min
    tail_weight = inverse(params.reversion_matrix()) @ params.drift_vector()
    a = params.drift_vector().to_array()
    total = 0.0
    v = lam
    for _ in range(64):
        sol = solve_riccati(params, v, segment, dt)
        total += _simpson(sol.values @ a, sol.times[1] - sol.times[0])
        v = sol.final()
        if tail_weight.dot(v) < 1e-10:
            return math.exp(-total)
    raise ModelError("stationary integral failed to converge")  # pragma: no cover


def mean_coefficients(a: Vec2, b: Mat2, t: float) -> tuple[Vec2, Mat2]:
    """Intercept and slope of the conditional mean over a horizon t.

    Returns (rho, gamma) with gamma = e^{-Bt} and rho = B^{-1}(I - gamma)A, so
    that E[X_t | X_0 = x] = rho + gamma x.
    """
    gamma = expm((-t) * b)
    rho = inverse(b) @ ((Mat2.identity() - gamma) @ a)
    return rho, gamma


def conditional_mean(params: ModelParams, x: Vec2, t: float) -> Vec2:
    """E[X_t | X_0 = x] = e^{-Bt} x + B^{-1}(I - e^{-Bt}) A."""
    if t < 0.0:
        raise ModelError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return x
    rho, gamma = mean_coefficients(params.drift_vector(), params.reversion_matrix(), t)
    return gamma @ x + rho


@dataclass(frozen=True)
class EtaBasis:
    """Affine decomposition eta_i(x) = const_i + x1 * coef_i1 + x2 * coef_i2.

    The conditional covariance over a horizon delta splits as
    sigma1^2 eta1(x) + sigma2^2 eta2(x) with

        eta_i(x) = int_0^delta e^{-B(delta-s)} diag_i(f_i(s)) e^{-B^T(delta-s)} ds,

    where f(s) = E[X_s | X_0 = x] and diag_1/diag_2 place f_1/f_2 in the
    corresponding diagonal slot.  f is affine in x, so each eta_i is too; the
    three coefficient matrices per factor are precomputed once and evaluation
    is a cheap linear combination.
    """

    delta: float
    eta1_parts: tuple[Mat2, Mat2, Mat2]
    eta2_parts: tuple[Mat2, Mat2, Mat2]

    def eta1(self, x: Vec2) -> Mat2:
        c, p1, p2 = self.eta1_parts
        return c + x.v1 * p1 + x.v2 * p2

    def eta2(self, x: Vec2) -> Mat2:
        c, p1, p2 = self.eta2_parts
        return c + x.v1 * p1 + x.v2 * p2

    def vec_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """Column-stacked parts as two (3, 4) arrays (const, x1 coef, x2 coef)."""
        out = []
        for parts in (self.eta1_parts, self.eta2_parts):
            out.append(
                np.array([[m.m11, m.m21, m.m12, m.m22] for m in parts])
            )
        return out[0], out[1]


def eta_basis(a: Vec2, b: Mat2, delta: float, panels: int = 200) -> EtaBasis:
    """Precompute the affine decomposition of eta1, eta2 by Simpson quadrature.

    Works from raw (A, B) so estimated coefficients with out-of-cone entries
    (e.g. a slightly negative cross-feed) are accepted.
    """
    if delta <= 0.0:
        raise ModelError(f"delta must be > 0, got {delta}")
    if panels % 2:
        panels += 1
    h = delta / panels
    b_inv = inverse(b)
    # E[j] = e^{-B s_j}; the mirrored index gives e^{-B(delta - s_j)}.
    exps = [expm((-h * j) * b) for j in range(panels + 1)]
    weights = np.ones(panels + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    acc1 = [Mat2.zero(), Mat2.zero(), Mat2.zero()]
    acc2 = [Mat2.zero(), Mat2.zero(), Mat2.zero()]
    for j in range(panels + 1):
        e_s = exps[j]
        m = exps[panels - j]
        c_s = b_inv @ ((Mat2.identity() - e_s) @ a)
        w = weights[j]
        p1 = Mat2(m.m11 * m.m11, m.m11 * m.m21, m.m21 * m.m11, m.m21 * m.m21)
        p2 = Mat2(m.m12 * m.m12, m.m12 * m.m22, m.m22 * m.m12, m.m22 * m.m22)
        for acc, proj, row in ((acc1, p1, 0), (acc2, p2, 1)):
            if row == 0:
                const, cx1, cx2 = c_s.v1, e_s.m11, e_s.m12
            else:
                const, cx1, cx2 = c_s.v2, e_s.m21, e_s.m22
            acc[0] = acc[0] + (w * const) * proj
            acc[1] = acc[1] + (w * cx1) * proj
            acc[2] = acc[2] + (w * cx2) * proj
    scale = h / 3.0
    return EtaBasis(
        delta=delta,
        eta1_parts=tuple(scale * m for m in acc1),
        eta2_parts=tuple(scale * m for m in acc2),
    )


def eta_matrices(
    params: ModelParams, x: Vec2, delta: float, panels: int = 200
) -> tuple[Mat2, Mat2]:
    """The pair (eta1(x), eta2(x)); symmetric, PSD, and affine in x."""
    if not x.is_nonnegative():
        raise ModelError(f"x must be componentwise >= 0, got {x}")
    basis = eta_basis(params.drift_vector(), params.reversion_matrix(), delta, panels)
    return basis.eta1(x), basis.eta2(x)


def conditional_variance(
    params: ModelParams, x: Vec2, delta: float, panels: int = 200
) -> Mat2:
    """Cov[X_delta | X_0 = x] = sigma1^2 eta1(x) + sigma2^2 eta2(x)."""
    eta1, eta2 = eta_matrices(params, x, delta, panels)
    s1, s2 = params.sigma_squared()
    return s1 * eta1 + s2 * eta2
