"""Two-mode state estimator fusing absolute (GPS) and relative (IMU) sensors.

Normal mode applies the jointly optimal gain over both sensors.  Emergency
mode forces the GPS gain to zero and dead-reckons on the relative sensor
alone, so spoofed measurements never touch the estimate.

With the stacked output matrix C = [C_G; C_I], the block-diagonal measurement
covariance Sigma_y, the selector D that zeroes the GPS block and passes the
IMU block, and M = C A - D C, the covariance obeys

    P' = (A - K M) P (A - K M)^T + (I - K C) Sigma_w (I - K C)^T
         + K Sigma_y K^T

and the trace-minimizing gain is

    K = (A P M^T + Sigma_w C^T) (M P M^T + C Sigma_w C^T + Sigma_y)^{-1}.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .exceptions import NumericalError
from .model import SystemModel


class Mode(Enum):
    NORMAL = "normal"
    EMERGENCY = "emergency"


@dataclass
class GainPair:
    """Gain split into the GPS block and the IMU block."""

    K_G: np.ndarray
    K_I: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.hstack([self.K_G, self.K_I])


@dataclass
class EstimatorState:
    x_hat: np.ndarray
    P: np.ndarray
    mode: Mode = Mode.NORMAL
    x_hat_prev: np.ndarray = None

    @classmethod
    def initial(cls, x0, P0=None, mode: Mode = Mode.NORMAL) -> "EstimatorState":
        x0 = np.asarray(x0, dtype=float)
        if P0 is None:
            P0 = np.zeros((x0.size, x0.size))
        return cls(x_hat=x0.copy(), P=np.asarray(P0, dtype=float).copy(),
                   mode=mode, x_hat_prev=x0.copy())

    def with_mode(self, mode: Mode) -> "EstimatorState":
        return replace(self, mode=mode)


class StackedSensorForms:
    """Stacked sensor matrices plus products reused in the per-step loop."""

    def __init__(self, model: SystemModel):
        n, m_G, m_I = model.n, model.m_G, model.m_I
        m = m_G + m_I
        self.C = np.vstack([model.C_G, model.C_I])
        self.Sigma_y = np.zeros((m, m))
        self.Sigma_y[:m_G, :m_G] = model.Sigma_G
        self.Sigma_y[m_G:, m_G:] = model.Sigma_I
        self.D = np.zeros((m, m))
        self.D[m_G:, m_G:] = np.eye(m_I)

        self._A = model.A
        self._Sigma_w = model.Sigma_w
        self._m_G = m_G
        self._I_n = np.eye(n)
        self._M = self.C @ model.A - self.D @ self.C
        self._Sw_Ct = model.Sigma_w @ self.C.T
        self._C_Sw_Ct_Sy = self.C @ self._Sw_Ct + self.Sigma_y

        # IMU-only subproblem (used when emergency mode cannot rely on a
        # constant gain): drop the GPS rows, selector becomes the identity.
        self._M_imu = model.C_I @ model.A - model.C_I
        self._Sw_CIt = model.Sigma_w @ model.C_I.T
        self._CI_Sw_CIt_SI = model.C_I @ self._Sw_CIt + model.Sigma_I

        # The constant emergency gain is exactly optimal when the relative
        # sensor sees no drift structure, i.e. C_I (I - A^{-1}) = 0.
        self._static_emergency = False
        sv = np.linalg.svd(model.A, compute_uv=False) if model.A.size else np.array([1.0])
        if sv.min() > 1e-12 * max(1.0, sv.max()):
            drift_rows = model.C_I @ (self._I_n - np.linalg.inv(model.A))
            scale = max(1.0, float(np.abs(model.C_I).max(initial=0.0)))
            self._static_emergency = np.abs(drift_rows).max(initial=0.0) <= 1e-12 * scale
        self._K_emergency = None
        self._K_full_emergency = None
        if self._static_emergency:
            self._K_emergency = emergency_gain(model)
            self._K_full_emergency = np.hstack(
                [np.zeros((n, m_G)), self._K_emergency])

    @classmethod
    def from_model(cls, model: SystemModel) -> "StackedSensorForms":
        return cls(model)


def predict(est: EstimatorState, model: SystemModel, u) -> np.ndarray:
    """One-step state prediction A x_hat + B u."""
    return model.A @ est.x_hat + model.B @ np.asarray(u, dtype=float)


def optimal_gain(P_prev: np.ndarray, model: SystemModel,
                 stacked: StackedSensorForms) -> GainPair:
    """Trace-minimizing stacked gain for the given prior covariance."""
    K = _optimal_gain_stacked(P_prev, model, stacked)
    m_G = stacked._m_G
    return GainPair(K_G=K[:, :m_G], K_I=K[:, m_G:])


def _optimal_gain_stacked(P_prev: np.ndarray, model: SystemModel,
                          stacked: StackedSensorForms) -> np.ndarray:
    M = stacked._M
    innov_cov = M @ P_prev @ M.T + stacked._C_Sw_Ct_Sy
    rhs = model.A @ P_prev @ M.T + stacked._Sw_Ct
    try:
        return np.linalg.solve(innov_cov.T, rhs.T).T
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(innov_cov)
        raise NumericalError(
            f"innovation covariance is singular (condition number {cond:.3e})") from exc


def emergency_gain(model: SystemModel) -> np.ndarray:
    """Constant IMU gain Sigma_w C_I^T (C_I Sigma_w C_I^T + Sigma_I)^{-1}."""
    rhs = model.Sigma_w @ model.C_I.T
    innov_cov = model.C_I @ rhs + model.Sigma_I
    try:
        return np.linalg.solve(innov_cov.T, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "IMU innovation covariance is singular; cannot form the "
            "emergency gain") from exc


def covariance_update(P_prev: np.ndarray, K: GainPair, model: SystemModel,
                      stacked: StackedSensorForms) -> np.ndarray:
    """Covariance propagation for an arbitrary stacked gain, re-symmetrized."""
    return _covariance_update_stacked(P_prev, K.stacked(), stacked)


def _covariance_update_stacked(P_prev: np.ndarray, K: np.ndarray,
                               stacked: StackedSensorForms) -> np.ndarray:
    T = stacked._A - K @ stacked._M
    IKC = stacked._I_n - K @ stacked.C
    P = (T @ P_prev @ T.T
         + IKC @ stacked._Sigma_w @ IKC.T
         + K @ stacked.Sigma_y @ K.T)
    return 0.5 * (P + P.T)


def _imu_only_gain(P_prev: np.ndarray, model: SystemModel,
                   stacked: StackedSensorForms) -> np.ndarray:
    M = stacked._M_imu
    innov_cov = M @ P_prev @ M.T + stacked._CI_Sw_CIt_SI
    rhs = model.A @ P_prev @ M.T + stacked._Sw_CIt
    try:
        return np.linalg.solve(innov_cov.T, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "IMU-only innovation covariance is singular") from exc


def fuse(est: EstimatorState, model: SystemModel, stacked: StackedSensorForms,
         u, y_G, y_I) -> EstimatorState:
    """Run one measurement update in the state's current mode.

    Normal mode corrects the prediction with both innovations.  Emergency
    mode never evaluates the GPS innovation, so the returned estimate is
    bit-for-bit independent of y_G.
    """
    pred = predict(est, model, u)
    innov_imu = np.asarray(y_I, dtype=float) - model.C_I @ (pred - est.x_hat)
    m_G = stacked._m_G

    if est.mode is Mode.EMERGENCY:
        if stacked._static_emergency:
            K_full = stacked._K_full_emergency
        else:
            K_I = _imu_only_gain(est.P, model, stacked)
            K_full = np.hstack([np.zeros((model.n, m_G)), K_I])
        x_new = pred + K_full[:, m_G:] @ innov_imu
    else:
        K_full = _optimal_gain_stacked(est.P, model, stacked)
        innov_gps = np.asarray(y_G, dtype=float) - model.C_G @ pred
        x_new = pred + K_full[:, :m_G] @ innov_gps + K_full[:, m_G:] @ innov_imu

    P_new = _covariance_update_stacked(est.P, K_full, stacked)
    return EstimatorState(x_hat=x_new, P=P_new, mode=est.mode,
                          x_hat_prev=est.x_hat)
