"""Offline analysis: stationary covariance, drift structure, escape time.

Norm conventions used throughout the escape-time analysis:

* the size of a covariance matrix is measured with the Frobenius norm, which
  upper-bounds the worst-direction standard deviation and therefore declares
  escape earlier (the conservative side for a safety margin);
* the growth factor of the dead-reckoning recursion uses the spectral norm
  of A and of the additive noise floor Sigma_bar.

The per-step confidence radius (confidence_bound) uses the spectral norm of
P, which gives a statistically valid per-step tail bound.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .chi2 import chi2_quantile
from .estimator import StackedSensorForms, emergency_gain, optimal_gain, \
    _covariance_update_stacked, _imu_only_gain
from .exceptions import ConvergenceError, NumericalError
from .model import SystemModel


def spectral_norm(M) -> float:
    """Largest singular value."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    if M.shape[0] == M.shape[1] and (M == M.T).all():
        # For symmetric matrices the largest singular value is the largest
        # absolute eigenvalue; eigvalsh is much cheaper than an SVD.
        eigvals = np.linalg.eigvalsh(M)
        return float(max(eigvals[-1], -eigvals[0]))
    return float(np.linalg.norm(M, 2))


def covariance_magnitude(P) -> float:
    """Frobenius norm, the covariance-size measure of the escape analysis."""
    return float(np.linalg.norm(np.asarray(P, dtype=float)))


@dataclass
class DriftAnalysis:
    """Derived matrices describing dead-reckoning error growth.

    C_bar_I = C_I (I - A^{-1}) is the output matrix of the equivalent
    filtering problem seen by the relative sensor alone; L decouples its
    process and measurement noises; A_bar = (I - L C_bar_I) A is the
    decoupled transition; Sigma_bar is the per-step covariance floor added
    during dead reckoning.
    """

    C_bar_I: np.ndarray
    L: np.ndarray
    A_bar: np.ndarray
    Sigma_bar: np.ndarray
    gps_pair_detectable: bool
    drift_pair_detectable: bool
    relative_sensor_scale: float = 1.0

    def drift_free(self) -> bool:
        """True when the relative sensor carries no drift structure (C_bar_I = 0)."""
        if self.C_bar_I.size == 0:
            return True
        tol = 1e-12 * max(1.0, self.relative_sensor_scale)
        return bool(np.abs(self.C_bar_I).max() <= tol)


@dataclass
class EscapeTimeReport:
    """Escape horizon plus the closed-form lower bound and its inputs."""

    k_escape: int
    k_lower_bound: Optional[float]
    zeta: Union[float, np.ndarray]
    alpha: float
    df: int
    stationary_P: np.ndarray
    norm_A: float
    branch: str

    def to_dict(self) -> dict:
        zeta = self.zeta
        if isinstance(zeta, np.ndarray):
            zeta = zeta.tolist()
        return {
            "k_escape": int(self.k_escape),
            "k_lower_bound": None if self.k_lower_bound is None
            else float(self.k_lower_bound),
            "zeta": zeta,
            "alpha": float(self.alpha),
            "df": int(self.df),
            "stationary_trace_P": float(np.trace(self.stationary_P)),
            "norm_A": float(self.norm_A),
            "branch": self.branch,
        }


def is_detectable(C, A, tol: float = 1e-8) -> bool:
    """Rank test: every eigenvalue of A with |lambda| >= 1 must be visible in C.

    For each such eigenvalue the stacked matrix [A - lambda I; C] must have
    full column rank; rank is counted against the threshold tol * sigma_max.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if C.shape[0] and C.shape[1] != n:
        raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
    eigvals = np.linalg.eigvals(A)
    for lam in eigvals:
        if abs(lam) < 1.0 - 1e-9:       # margin absorbs eigenvalue roundoff
            continue
        stackmat = np.vstack([A - lam * np.eye(n), C.astype(complex)])
        sv = np.linalg.svd(stackmat, compute_uv=False)
        rank = int(np.sum(sv > tol * sv[0])) if sv.size else 0
        if rank < n:
            return False
    return True


def drift_matrices(model: SystemModel) -> DriftAnalysis:
    """Build the dead-reckoning drift structure; requires invertible A."""
    n = model.n
    sv = np.linalg.svd(model.A, compute_uv=False)
    if sv.min() <= 1e-12 * max(1.0, sv.max()):
        raise ValueError(
            f"state transition matrix is singular (min singular value "
            f"{sv.min():.3e}); the drift analysis needs A^-1")
    A_inv = np.linalg.inv(model.A)
    C_bar = model.C_I @ (np.eye(n) - A_inv)
    CI_Ainv = model.C_I @ A_inv

    if model.m_I == 0:
        L = np.zeros((n, 0))
    else:
        lhs = (C_bar + C_bar @ A_inv) @ model.Sigma_w @ CI_Ainv.T + model.Sigma_I
        rhs = model.Sigma_w @ CI_Ainv.T
        try:
            L = np.linalg.solve(lhs.T, rhs.T).T
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "noise-decoupling system is singular") from exc

    A_bar = (np.eye(n) - L @ C_bar) @ model.A
    K_I = emergency_gain(model)
    IKC = np.eye(n) - K_I @ model.C_I
    Sigma_bar = IKC @ model.Sigma_w @ IKC.T + K_I @ model.Sigma_I @ K_I.T
    Sigma_bar = 0.5 * (Sigma_bar + Sigma_bar.T)

    return DriftAnalysis(
        C_bar_I=C_bar,
        L=L,
        A_bar=A_bar,
        Sigma_bar=Sigma_bar,
        gps_pair_detectable=is_detectable(model.C_G, model.A),
        drift_pair_detectable=is_detectable(C_bar, A_bar),
        relative_sensor_scale=float(np.abs(model.C_I).max(initial=0.0)),
    )


def stationary_covariance(model: SystemModel, tol: float = 1e-12,
                          max_iter: int = 100_000) -> np.ndarray:
    """Fixed point of the optimal-gain covariance recursion, from P0 = Sigma_w.

    Raises ConvergenceError (carrying the last iterate and residual) if the
    iteration does not settle, and fails fast when the GPS pair is not
    detectable since no bounded fixed point exists then.
    """
    if not is_detectable(model.C_G, model.A):
        raise NumericalError(
            "(C_G, A) is not detectable: the covariance recursion has no "
            "bounded fixed point")
    stacked = StackedSensorForms.from_model(model)
    P = model.Sigma_w.copy()
    resid = math.inf
    for _ in range(max_iter):
        K = optimal_gain(P, model, stacked)
        P_next = _covariance_update_stacked(P, K.stacked(), stacked)
        resid = float(np.linalg.norm(P_next - P))
        P = P_next
        if resid <= tol:
            return P
    raise ConvergenceError(
        f"covariance fixed point not reached in {max_iter} iterations "
        f"(last residual {resid:.3e})", last_iterate=P, residual=resid)


def _emergency_propagator(model: SystemModel):
    """One-step covariance map under dead reckoning (GPS gain forced to zero)."""
    stacked = StackedSensorForms.from_model(model)
    if stacked._static_emergency:
        drift = drift_matrices(model)
        Sigma_bar = drift.Sigma_bar

        def step(P):
            P = model.A @ P @ model.A.T + Sigma_bar
            return 0.5 * (P + P.T)
    else:
        zeros = np.zeros((model.n, model.m_G))

        def step(P):
            K_I = _imu_only_gain(P, model, stacked)
            return _covariance_update_stacked(P, np.hstack([zeros, K_I]), stacked)
    return step


def escape_time(P_at_attack: np.ndarray, model: SystemModel, zeta,
                alpha: float, df: int, max_horizon: int = 100_000) -> int:
    """Steps of dead reckoning until the error tolerance stops being credible.

    zeta may be an n-vector (directional test zeta^T P_k^{-1} zeta against the
    chi-square quantile) or a scalar norm (isotropic test ||zeta||^2 divided
    by the Frobenius magnitude of P_k).  Counting starts at the covariance
    supplied for the attack step; the count is 0 when the tolerance is
    already not credible there.
    """
    quantile = chi2_quantile(df, alpha)
    zeta_arr = np.asarray(zeta, dtype=float)
    if zeta_arr.ndim == 0:
        zeta_sq = float(zeta_arr) ** 2

        def quad(P):
            return zeta_sq / covariance_magnitude(P)
    elif zeta_arr.ndim == 1:
        if zeta_arr.shape != (model.n,):
            raise ValueError(
                f"directional tolerance has shape {zeta_arr.shape}, "
                f"expected ({model.n},)")

        def quad(P):
            return float(zeta_arr @ np.linalg.solve(P, zeta_arr))
    else:
        raise ValueError("zeta must be a scalar norm or an n-vector")

    step = _emergency_propagator(model)
    P = np.asarray(P_at_attack, dtype=float).copy()
    k = 0
    value = quad(P)
    while value > quantile:
        P = step(P)
        k += 1
        if k > max_horizon:
            raise ConvergenceError(
                f"tolerance still credible after {max_horizon} steps "
                f"(last statistic {value:.6g} > quantile {quantile:.6g})",
                last_iterate=P, residual=value)
        value = quad(P)
    return k


def escape_time_lower_bound(P: np.ndarray, model: SystemModel,
                            zeta_norm: float, alpha: float, df: int) -> float:
    """Closed-form lower bound on the escape time, for drift-free models.

    Requires C_I (I - A^{-1}) = 0 so that dead reckoning reduces to
    P_k = A P_{k-1} A^T + Sigma_bar.  The bound sees P through its Frobenius
    magnitude and A, Sigma_bar through their spectral norms; when the spectral
    norm of A is 1 the geometric sum degenerates and the linear branch is
    used.  Results below zero clamp to zero (tolerance already exceeded).
    """
    drift = drift_matrices(model)
    if not drift.drift_free():
        raise ValueError(
            "escape-time lower bound requires a drift-free relative sensor "
            "(C_I (I - A^{-1}) = 0); this model has "
            f"max |C_bar_I| = {np.abs(drift.C_bar_I).max():.3e}")

    quantile = chi2_quantile(df, alpha)
    target = float(zeta_norm) ** 2 / quantile
    norm_A = spectral_norm(model.A)
    norm_P = covariance_magnitude(P)
    norm_S = spectral_norm(drift.Sigma_bar)

    if target <= norm_P:
        return 0.0  # tolerance already exceeded at the attack step

    if abs(norm_A - 1.0) <= 1e-12:
        return (target - norm_P) / norm_S if norm_S > 0.0 else math.inf

    growth = norm_A * norm_A
    offset = norm_S / (growth - 1.0)
    numerator = target + offset
    denominator = norm_P + offset
    if growth > 1.0:
        # offset > 0 and target > norm_P, so the logarithm is well defined.
        return math.log(numerator / denominator) / math.log(growth)
    # Contracting A: the norm bound tends to norm_S / (1 - growth).  The
    # target is reachable only from below that limit.
    if numerator >= 0.0 or denominator >= 0.0:
        return math.inf
    return math.log(numerator / denominator) / math.log(growth)


def branch_name(model: SystemModel) -> str:
    """Which lower-bound branch applies to this model's transition norm."""
    return "unit-norm" if abs(spectral_norm(model.A) - 1.0) <= 1e-12 else "general"


def confidence_bound(P, alpha: float, df: int) -> float:
    """Radius sqrt(quantile * ||P||_2) covering the error at level 1 - alpha."""
    return math.sqrt(chi2_quantile(df, alpha) * spectral_norm(P))


def escape_report(model: SystemModel, zeta_norm: float, alpha: float,
                  df: Optional[int] = None,
                  stationary_P: Optional[np.ndarray] = None) -> EscapeTimeReport:
    """Bundle escape time and lower bound computed from the stationary covariance."""
    if df is None:
        df = model.n
    if stationary_P is None:
        stationary_P = stationary_covariance(model)
    try:
        drift_free = drift_matrices(model).drift_free()
    except ValueError:
        drift_free = False  # singular A: no drift structure, no closed form
    k_esc = escape_time(stationary_P, model, float(zeta_norm), alpha, df)
    k_lb = None
    if drift_free:
        k_lb = escape_time_lower_bound(stationary_P, model, float(zeta_norm),
                                       alpha, df)
    return EscapeTimeReport(
        k_escape=k_esc,
        k_lower_bound=k_lb,
        zeta=float(zeta_norm),
        alpha=alpha,
        df=df,
        stationary_P=stationary_P,
        norm_A=spectral_norm(model.A),
        branch=branch_name(model),
    )
