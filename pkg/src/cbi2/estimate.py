"""Weighted conditional least squares estimation of the drift and diffusion.

Observed at spacing delta, the process obeys the exact regression

    X_k = rho + gamma X_{k-1} + eps_k,      gamma = e^{-B delta},
                                            rho = B^{-1}(I - gamma) A,

with martingale-difference errors, so (rho, gamma) are fitted by weighted
least squares, then mapped back to (A, B) through the matrix logarithm.  The
conditional covariance splits as sigma1^2 eta1(X_{k-1}) + sigma2^2
eta2(X_{k-1}), so the squared residuals are fitted by a second weighted least
squares whose normal equations are 2x2.  Plug-in sandwich covariance for the
full 8-parameter vector comes from the joint estimating equation, with all
parameter derivatives by central finite differences.

Weights g are evaluated at the conditioning state: g_k = g(X_{k-1}).  The
constant weight reproduces plain conditional least squares; 1/(1 + |x|) keeps
the influence of large states bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mat2 import (
    Mat2,
    SingularMatrixError,
    Vec2,
    eigenvalues,
    expm,
    inverse,
    logm,
)
from .model import EtaBasis, eta_basis, mean_coefficients
from .simulate import ObservationSeries

__all__ = [
    "WeightFn",
    "DriftStatistics",
    "DriftEstimate",
    "DiffusionEstimate",
    "SandwichCovariance",
    "EstimateReport",
    "EstimationError",
    "SingularDesignError",
    "NonAdmissibleGammaError",
    "IllConditionedError",
    "SingularVError",
    "drift_statistics",
    "estimate_drift",
    "diffusion_normal_equations",
    "estimate_diffusion",
    "sandwich_covariance",
    "gamma_asymptotic_variance",
    "theta_from_estimates",
    "full_estimate",
]

THETA_NAMES = ("a1", "a2", "b11", "b12", "b21", "b22", "sigma1", "sigma2")


class EstimationError(ValueError):
    """Base class for estimation failures."""


class SingularDesignError(EstimationError):
    """The lagged-state design is degenerate (e.g. constant observations)."""

    def __init__(self, message: str, det: float):
        super().__init__(f"{message} (det={det!r})")
        self.det = det


class NonAdmissibleGammaError(EstimationError):
    """gamma_hat spectrum is incompatible with gamma = e^{-B delta}."""


class IllConditionedError(EstimationError):
    """The 2x2 diffusion normal equations are numerically singular."""


class SingularVError(EstimationError):
    """The sandwich bread matrix V_hat is numerically singular."""

    def __init__(self, message: str, smallest_singular_value: float):
        super().__init__(f"{message} (smallest singular value {smallest_singular_value:.3e})")
        self.smallest_singular_value = smallest_singular_value


def _fsum(a: np.ndarray) -> float:
    """Exactly rounded sum; the covariance-style sums here cancel heavily."""
    return math.fsum(a.tolist())


@dataclass(frozen=True)
class WeightFn:
    """Positive weight g evaluated at the conditioning state.

    ``fn`` maps a lag-state array of shape (n, 2) to weights of shape (n,).
    The built-ins satisfy the square-integrability the asymptotics need; a
    custom g must too.
    """

    tag: str
    fn: Callable[[np.ndarray], np.ndarray]

    @staticmethod
    def constant() -> "WeightFn":
        return WeightFn(tag="constant", fn=lambda lags: np.ones(lags.shape[0]))

    @staticmethod
    def inverse_norm() -> "WeightFn":
        """g(x) = 1/(1 + |x|) with the Euclidean norm."""
        return WeightFn(
            tag="inverse_norm",
            fn=lambda lags: 1.0 / (1.0 + np.sqrt((lags**2).sum(axis=1))),
        )

    @staticmethod
    def custom(fn: Callable[[np.ndarray], float]) -> "WeightFn":
        """Wrap a scalar g: R^2 -> (0, inf), applied row by row."""
        return WeightFn(
            tag="custom",
            fn=lambda lags: np.array([float(fn(row)) for row in lags]),
        )

    @staticmethod
    def from_tag(tag: str) -> "WeightFn":
        if tag == "constant":
            return WeightFn.constant()
        if tag == "inverse_norm":
            return WeightFn.inverse_norm()
        raise EstimationError(f"unknown weight tag {tag!r}")

    def weights(self, lags: np.ndarray) -> np.ndarray:
        g = np.asarray(self.fn(lags), dtype=float)
        if g.shape != (lags.shape[0],):
            raise EstimationError(
                f"weight function returned shape {g.shape}, expected ({lags.shape[0]},)"
            )
        if not np.all(np.isfinite(g)) or np.any(g <= 0.0):
            raise EstimationError("weights must be positive and finite")
        return g


@dataclass(frozen=True)
class DriftStatistics:
    """Weighted first- and second-moment sums entering the drift estimator.

    With g_k = g(X_{k-1}):
        g_bar   = (1/n) sum g_k
        x_bar   = (1/n) sum g_k X_k,        x_tilde = (1/n) sum g_k X_{k-1}
        t1_bar  = (1/n) sum (g_k X_k - x_bar)(g_k X_{k-1} - x_tilde)^T
        t1_tilde= (1/n) sum (g_k - g_bar)(g_k X_k X_{k-1}^T - mean of same)
        t2_*    = the analogous lag-lag quantities.
    """

    n: int
    delta: float
    g_bar: float
    x_bar: Vec2
    x_tilde: Vec2
    t1_bar: Mat2
    t1_tilde: Mat2
    t2_bar: Mat2
    t2_tilde: Mat2


def drift_statistics(series: ObservationSeries, g: WeightFn) -> DriftStatistics:
    """Single pass for the weighted means, one centered correction pass after.

    The sums are defined for any series with at least one transition (the
    rank requirement lives in estimate_drift); all reductions use exactly
    rounded summation.
    """
    if series.n < 1:
        raise EstimationError(f"need at least 1 transition, got {series.n}")
    y = series.values[1:]
    lag = series.values[:-1]
    n = series.n
    gk = g.weights(lag)

    g_bar = _fsum(gk) / n
    gy = gk[:, None] * y
    gl = gk[:, None] * lag
    x_bar = Vec2(_fsum(gy[:, 0]) / n, _fsum(gy[:, 1]) / n)
    x_tilde = Vec2(_fsum(gl[:, 0]) / n, _fsum(gl[:, 1]) / n)

    def cross_mean(u: np.ndarray, v: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return np.array(
            [
                [_fsum(weights * u[:, i] * v[:, j]) / n for j in range(2)]
                for i in range(2)
            ]
        )

    s_xy = cross_mean(y, lag, gk)
    s_ll = cross_mean(lag, lag, gk)

    xb = x_bar.to_array()
    xt = x_tilde.to_array()
    gc = gk - g_bar
    t1_bar = np.array(
        [
            [_fsum((gy[:, i] - xb[i]) * (gl[:, j] - xt[j])) / n for j in range(2)]
            for i in range(2)
        ]
    )
    t2_bar = np.array(
        [
            [_fsum((gl[:, i] - xt[i]) * (gl[:, j] - xt[j])) / n for j in range(2)]
            for i in range(2)
        ]
    )
    t1_tilde = np.array(
        [
            [
                _fsum(gc * (gk * y[:, i] * lag[:, j] - s_xy[i, j])) / n
                for j in range(2)
            ]
            for i in range(2)
        ]
    )
    t2_tilde = np.array(
        [
            [
                _fsum(gc * (gk * lag[:, i] * lag[:, j] - s_ll[i, j])) / n
                for j in range(2)
            ]
            for i in range(2)
        ]
    )
    return DriftStatistics(
        n=n,
        delta=series.delta,
        g_bar=g_bar,
        x_bar=x_bar,
        x_tilde=x_tilde,
        t1_bar=Mat2.from_array(t1_bar),
        t1_tilde=Mat2.from_array(t1_tilde),
        t2_bar=Mat2.from_array(t2_bar),
        t2_tilde=Mat2.from_array(t2_tilde),
    )


@dataclass(frozen=True)
class DriftEstimate:
    """Fitted regression pair (rho, gamma) and, when admissible, (A, B).

    ``admissible`` means gamma_hat is a credible one-step slope e^{-B delta}:
    a real spectrum inside (0, 1), or a conjugate pair with positive real part
    and modulus below one (where the principal log is still real and the
    defining log series still converges).  When inadmissible, rho/gamma are
    reported and a_hat/b_hat are withheld.
    """

    rho_hat: Vec2
    gamma_hat: Mat2
    a_hat: Optional[Vec2]
    b_hat: Optional[Mat2]
    admissible: bool
    n: int
    delta: float


def _gamma_admissible(gamma: Mat2) -> bool:
    lo, hi = eigenvalues(gamma)
    if lo.imag == 0.0 and hi.imag == 0.0:
        return 0.0 < lo.real and hi.real < 1.0
    return lo.real > 0.0 and abs(lo) < 1.0


def estimate_drift(
    series: ObservationSeries,
    g: WeightFn,
    rho_convention: str = "divide",
) -> DriftEstimate:
    """Weighted conditional least squares for (rho, gamma), then (A, B).

        gamma_hat = (t1_bar - t1_tilde) (t2_bar - t2_tilde)^{-1}
        rho_hat   = (x_bar - gamma_hat x_tilde) / g_bar

    Dividing by g_bar makes rho_hat the exact first-order condition of the
    weighted sum of squares (and the estimator consistent for any weight);
    ``rho_convention="multiply"`` keeps the g_bar-multiplied variant, which
    coincides with it only when g_bar = 1.

    When gamma_hat is admissible, B_hat = -log(gamma_hat)/delta and
    A_hat = B_hat (I - gamma_hat)^{-1} rho_hat (the two factors commute).
    """
    if rho_convention not in ("divide", "multiply"):
        raise EstimationError(f"unknown rho_convention {rho_convention!r}")
    if series.n < 3:
        raise EstimationError(f"need at least 3 transitions, got {series.n}")
    stats = drift_statistics(series, g)
    design = stats.t2_bar - stats.t2_tilde
    try:
        design_inv = inverse(design)
    except SingularMatrixError as exc:
        raise SingularDesignError("degenerate lag design", exc.det) from exc
    gamma_hat = (stats.t1_bar - stats.t1_tilde) @ design_inv
    centered = stats.x_bar - gamma_hat @ stats.x_tilde
    if rho_convention == "divide":
        rho_hat = (1.0 / stats.g_bar) * centered
    else:
        rho_hat = stats.g_bar * centered

    a_hat: Optional[Vec2] = None
    b_hat: Optional[Mat2] = None
    admissible = _gamma_admissible(gamma_hat)
    if admissible:
        b_hat = (-1.0 / series.delta) * logm(gamma_hat)
        a_hat = b_hat @ (inverse(Mat2.identity() - gamma_hat) @ rho_hat)
    return DriftEstimate(
        rho_hat=rho_hat,
        gamma_hat=gamma_hat,
        a_hat=a_hat,
        b_hat=b_hat,
        admissible=admissible,
        n=stats.n,
        delta=series.delta,
    )


@dataclass(frozen=True)
class DiffusionEstimate:
    """Fitted (sigma1^2, sigma2^2): clamped at zero, with raw values kept."""

    sigma1_sq_hat: float
    sigma2_sq_hat: float
    sigma1_sq_raw: float
    sigma2_sq_raw: float
    conditioning: float


def diffusion_normal_equations(
    gk: np.ndarray,
    vec_z: np.ndarray,
    vec_eta1: np.ndarray,
    vec_eta2: np.ndarray,
) -> tuple[float, float, float]:
    """Solve the 2x2 weighted normal equations for (sigma1^2, sigma2^2).

    Minimizes sum_k g_k |vec(Z_k) - s1 vec(eta1_k) - s2 vec(eta2_k)|^2 by
    Cramer's rule on

        [ sum g <e1,e1>  sum g <e1,e2> ] [s1]   [ sum g <Z,e1> ]
        [ sum g <e1,e2>  sum g <e2,e2> ] [s2] = [ sum g <Z,e2> ],

    returning (s1, s2, determinant).  Raises IllConditionedError when the
    determinant falls below 1e-12 times the product of the diagonal entries.
    """
    m11 = _fsum(gk * (vec_eta1 * vec_eta1).sum(axis=1))
    m22 = _fsum(gk * (vec_eta2 * vec_eta2).sum(axis=1))
    m12 = _fsum(gk * (vec_eta1 * vec_eta2).sum(axis=1))
    r1 = _fsum(gk * (vec_z * vec_eta1).sum(axis=1))
    r2 = _fsum(gk * (vec_z * vec_eta2).sum(axis=1))
    det = m11 * m22 - m12 * m12
    if not det > 1e-12 * m11 * m22:
        raise IllConditionedError(
            f"diffusion normal equations are ill conditioned "
            f"(det={det:.3e}, diagonal product={m11 * m22:.3e})"
        )
    s1 = (r1 * m22 - r2 * m12) / det
    s2 = (r2 * m11 - r1 * m12) / det
    return s1, s2, det


def _vec_outer(resid: np.ndarray) -> np.ndarray:
    """Column-stacked residual outer products, shape (n, 4)."""
    r1 = resid[:, 0]
    r2 = resid[:, 1]
    return np.column_stack([r1 * r1, r2 * r1, r1 * r2, r2 * r2])


def _vec_eta_arrays(
    basis: EtaBasis, lag: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    e1p, e2p = basis.vec_parts()
    vec_eta1 = e1p[0] + lag[:, 0, None] * e1p[1] + lag[:, 1, None] * e1p[2]
    vec_eta2 = e2p[0] + lag[:, 0, None] * e2p[1] + lag[:, 1, None] * e2p[2]
    return vec_eta1, vec_eta2


def estimate_diffusion(
    series: ObservationSeries,
    g: WeightFn,
    drift: DriftEstimate,
    panels: int = 200,
) -> DiffusionEstimate:
    """Fit (sigma1^2, sigma2^2) from squared residuals under the fitted drift.

    Residual matrices Z_k = (X_k - rho_hat - gamma_hat X_{k-1})(same)^T are
    regressed on eta1(X_{k-1}), eta2(X_{k-1}) evaluated under (A_hat, B_hat);
    the state dependence of eta stays inside the sums.  Raw estimates can go
    negative in small samples; the clamped values floor them at zero.
    """
    if not drift.admissible:
        raise NonAdmissibleGammaError(
            "diffusion estimation needs an admissible drift estimate"
        )
    y = series.values[1:]
    lag = series.values[:-1]
    gk = g.weights(lag)
    resid = y - (lag @ drift.gamma_hat.to_array().T + drift.rho_hat.to_array())
    basis = eta_basis(drift.a_hat, drift.b_hat, series.delta, panels)
    vec_eta1, vec_eta2 = _vec_eta_arrays(basis, lag)
    s1, s2, det = diffusion_normal_equations(gk, _vec_outer(resid), vec_eta1, vec_eta2)
    return DiffusionEstimate(
        sigma1_sq_hat=max(s1, 0.0),
        sigma2_sq_hat=max(s2, 0.0),
        sigma1_sq_raw=s1,
        sigma2_sq_raw=s2,
        conditioning=det,
    )


@dataclass(frozen=True)
class SandwichCovariance:
    """Plug-in sandwich pieces for theta = (a1, a2, b11, b12, b21, b22, sigma1, sigma2).

    cov_hat = V_hat^{-1} W_hat V_hat^{-T} / n estimates the covariance of
    theta_hat itself; multiply by n for the asymptotic covariance of
    sqrt(n)(theta_hat - theta).  W_hat is symmetric PSD by construction.
    """

    v_hat: np.ndarray
    w_hat: np.ndarray
    cov_hat: np.ndarray
    n: int


def _theta_split(theta: np.ndarray) -> tuple[Vec2, Mat2, float, float]:
    a = Vec2(theta[0], theta[1])
    b = Mat2(theta[2], -theta[3], -theta[4], theta[5])
    return a, b, float(theta[6]), float(theta[7])


def _vecv_parts(theta: np.ndarray, delta: float, panels: int) -> np.ndarray:
    """Affine parts (const, x1, x2) of vec(conditional covariance), shape (3, 4)."""
    a, b, s1, s2 = _theta_split(theta)
    e1p, e2p = eta_basis(a, b, delta, panels).vec_parts()
    return s1 * s1 * e1p + s2 * s2 * e2p


def sandwich_covariance(
    series: ObservationSeries,
    g: WeightFn,
    theta_hat: np.ndarray,
    panels: int = 200,
    fd_step: float = 1e-5,
) -> SandwichCovariance:
    """Empirical sandwich covariance at theta_hat.

    The estimating-equation summand is
        h_k = w0(X_{k-1})(X_k - m(X_{k-1})) + w1(X_{k-1}) vec(Z_k - v(X_{k-1})),
    where w0 stacks the theta-derivatives of the conditional mean (rows for
    the sigma parameters are zero) and w1 carries vec(eta1), vec(eta2) in the
    sigma rows.  Then
        V_hat = -(1/n) sum g_k [w0 dm/dtheta + w1 dvec(v)/dtheta],
        W_hat =  (1/n) sum g_k^2 h_k h_k^T,
    with every theta-derivative by central differences of relative step
    ``fd_step``.  W_hat needs no closed third/fourth conditional moments: the
    outer-product form converges to the same limit under stationarity.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (8,):
        raise EstimationError(f"theta_hat must have shape (8,), got {theta_hat.shape}")
    y = series.values[1:]
    lag = series.values[:-1]
    n = series.n
    gk = g.weights(lag)
    delta = series.delta

    a0, b0, s1, s2 = _theta_split(theta_hat)
    rho0, gamma0 = mean_coefficients(a0, b0, delta)
    basis0 = eta_basis(a0, b0, delta, panels)
    e1p, e2p = basis0.vec_parts()
    vecv_parts0 = s1 * s1 * e1p + s2 * s2 * e2p

    d_rho = np.zeros((8, 2))
    d_gamma = np.zeros((8, 2, 2))
    d_vecv_parts = np.zeros((8, 3, 4))
    for i in range(8):
        h = fd_step * (1.0 + abs(theta_hat[i]))
        up = theta_hat.copy()
        dn = theta_hat.copy()
        up[i] += h
        dn[i] -= h
        a_u, b_u, _, _ = _theta_split(up)
        a_d, b_d, _, _ = _theta_split(dn)
        rho_u, gamma_u = mean_coefficients(a_u, b_u, delta)
        rho_d, gamma_d = mean_coefficients(a_d, b_d, delta)
        d_rho[i] = (rho_u.to_array() - rho_d.to_array()) / (2.0 * h)
        d_gamma[i] = (gamma_u.to_array() - gamma_d.to_array()) / (2.0 * h)
        d_vecv_parts[i] = (
            _vecv_parts(up, delta, panels) - _vecv_parts(dn, delta, panels)
        ) / (2.0 * h)

    # dm[k, i, :] = drho_i + dgamma_i x_{k-1}; sigma rows vanish identically.
    dm = d_rho[None, :, :] + np.einsum("ijl,kl->kij", d_gamma, lag)
    w0 = dm.copy()
    w0[:, 6:, :] = 0.0

    dvecv = (
        d_vecv_parts[None, :, 0, :]
        + lag[:, 0, None, None] * d_vecv_parts[None, :, 1, :]
        + lag[:, 1, None, None] * d_vecv_parts[None, :, 2, :]
    )
    vec_eta1, vec_eta2 = _vec_eta_arrays(basis0, lag)
    w1 = np.zeros((n, 8, 4))
    w1[:, 6, :] = vec_eta1
    w1[:, 7, :] = vec_eta2

    v_hat = -(
        np.einsum("k,kij,klj->il", gk, w0, dm)
        + np.einsum("k,kij,klj->il", gk, w1, dvecv)
    ) / n

    resid = y - (lag @ gamma0.to_array().T + rho0.to_array())
    vecv = (
        vecv_parts0[0]
        + lag[:, 0, None] * vecv_parts0[1]
        + lag[:, 1, None] * vecv_parts0[2]
    )
    z_resid = _vec_outer(resid) - vecv
    h_k = np.einsum("kij,kj->ki", w0, resid) + np.einsum("kij,kj->ki", w1, z_resid)
    w_hat = np.einsum("k,ki,kj->ij", gk * gk, h_k, h_k) / n

    svals = np.linalg.svd(v_hat, compute_uv=False)
    if svals[-1] <= 1e-12 * svals[0]:
        raise SingularVError("V_hat is numerically singular", float(svals[-1]))
    half = np.linalg.solve(v_hat, w_hat)
    cov = np.linalg.solve(v_hat, half.T)
    cov = (cov + cov.T) / 2.0 / n
    return SandwichCovariance(v_hat=v_hat, w_hat=w_hat, cov_hat=cov, n=n)


def gamma_asymptotic_variance(
    scaled_cov: np.ndarray,
    theta_hat: np.ndarray,
    delta: float,
    fd_step: float = 1e-5,
) -> np.ndarray:
    """Delta-method variances of sqrt(n)(gamma_hat_ij - gamma_ij), shape (2, 2).

    ``scaled_cov`` is the asymptotic covariance of sqrt(n)(theta_hat - theta),
    i.e. n times SandwichCovariance.cov_hat.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    jac = np.zeros((2, 2, 8))
    for i in range(8):
        h = fd_step * (1.0 + abs(theta_hat[i]))
        up = theta_hat.copy()
        dn = theta_hat.copy()
        up[i] += h
        dn[i] -= h
        _, b_u, _, _ = _theta_split(up)
        _, b_d, _, _ = _theta_split(dn)
        jac[:, :, i] = (
            expm((-delta) * b_u).to_array() - expm((-delta) * b_d).to_array()
        ) / (2.0 * h)
    return np.einsum("ijp,pq,ijq->ij", jac, np.asarray(scaled_cov), jac)


def theta_from_estimates(
    drift: DriftEstimate, diffusion: DiffusionEstimate
) -> np.ndarray:
    """Assemble theta_hat = (a1, a2, b11, b12, b21, b22, sigma1, sigma2).

    Cross-feed signs follow the drift matrix convention b12 = -B[1,2],
    b21 = -B[2,1]; sigma uses the clamped square roots.
    """
    if not drift.admissible:
        raise NonAdmissibleGammaError("theta requires an admissible drift estimate")
    b = drift.b_hat
    return np.array(
        [
            drift.a_hat.v1,
            drift.a_hat.v2,
            b.m11,
            -b.m12,
            -b.m21,
            b.m22,
            math.sqrt(diffusion.sigma1_sq_hat),
            math.sqrt(diffusion.sigma2_sq_hat),
        ]
    )


@dataclass(frozen=True)
class EstimateReport:
    """Flat record of one estimation run, ready for key-value or CSV output."""

    rho_hat: Vec2
    gamma_hat: Mat2
    a_hat: Optional[Vec2]
    b_hat: Optional[Mat2]
    sigma1_sq: float
    sigma2_sq: float
    admissible: bool
    n: int
    delta: float
    covariance: Optional[np.ndarray] = None

    _SCALAR_FIELDS = (
        "rho1", "rho2", "gamma11", "gamma12", "gamma21", "gamma22",
        "a1", "a2", "b11", "b12", "b21", "b22", "sigma1_sq", "sigma2_sq",
    )

    @staticmethod
    def csv_header() -> list[str]:
        names = list(EstimateReport._SCALAR_FIELDS) + ["admissible", "n", "delta"]
        names += [f"cov_{i}{j}" for i in range(1, 9) for j in range(i, 9)]
        return names

    def _scalar_values(self) -> list[float]:
        nan = math.nan
        b = self.b_hat
        return [
            self.rho_hat.v1, self.rho_hat.v2,
            self.gamma_hat.m11, self.gamma_hat.m12,
            self.gamma_hat.m21, self.gamma_hat.m22,
            self.a_hat.v1 if self.a_hat else nan,
            self.a_hat.v2 if self.a_hat else nan,
            b.m11 if b else nan,
            -b.m12 if b else nan,
            -b.m21 if b else nan,
            b.m22 if b else nan,
            self.sigma1_sq, self.sigma2_sq,
        ]

    def _cov_values(self) -> list[float]:
        if self.covariance is None:
            return [math.nan] * 36
        return [
            float(self.covariance[i, j]) for i in range(8) for j in range(i, 8)
        ]

    def to_csv_row(self) -> str:
        cells = [f"{v:.17g}" for v in self._scalar_values()]
        cells += ["true" if self.admissible else "false", str(self.n),
                  f"{self.delta:.17g}"]
        cells += [f"{v:.17g}" for v in self._cov_values()]
        return ",".join(cells)

    def to_kv_text(self) -> str:
        names = self.csv_header()
        values = self.to_csv_row().split(",")
        return "\n".join(f"{k} = {v}" for k, v in zip(names, values)) + "\n"

    @staticmethod
    def parse_kv_text(text: str) -> dict[str, str]:
        out: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
        return out


def full_estimate(
    series: ObservationSeries,
    g: WeightFn,
    with_covariance: bool = True,
    rho_convention: str = "divide",
    panels: int = 200,
) -> EstimateReport:
    """Drift, diffusion and (optionally) sandwich covariance in one pass.

    When gamma_hat is inadmissible the report carries rho/gamma with NaN
    placeholders for everything that needs (A_hat, B_hat).
    """
    drift = estimate_drift(series, g, rho_convention=rho_convention)
    if not drift.admissible:
        return EstimateReport(
            rho_hat=drift.rho_hat,
            gamma_hat=drift.gamma_hat,
            a_hat=None,
            b_hat=None,
            sigma1_sq=math.nan,
            sigma2_sq=math.nan,
            admissible=False,
            n=drift.n,
            delta=series.delta,
        )
    diffusion = estimate_diffusion(series, g, drift, panels=panels)
    covariance = None
    if with_covariance:
        theta = theta_from_estimates(drift, diffusion)
        covariance = sandwich_covariance(series, g, theta, panels=panels).cov_hat
    return EstimateReport(
        rho_hat=drift.rho_hat,
        gamma_hat=drift.gamma_hat,
        a_hat=drift.a_hat,
        b_hat=drift.b_hat,
        sigma1_sq=diffusion.sigma1_sq_hat,
        sigma2_sq=diffusion.sigma2_sq_hat,
        admissible=True,
        n=drift.n,
        delta=series.delta,
        covariance=covariance,
    )
