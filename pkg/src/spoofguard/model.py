"""Linear plant with an absolute (GPS) sensor and a relative (IMU) sensor.

The plant is

    x_k = A x_{k-1} + B u_{k-1} + w_{k-1}
    y_k^G = C_G x_k + d_k + v_k^G         (absolute position fix, spoofable)
    y_k^I = C_I (x_k - x_{k-1}) + v_k^I   (relative measurement, trusted)

with iid zero-mean Gaussian noises of covariances Sigma_w, Sigma_G, Sigma_I.
The additive term d_k is the injected spoofing signal.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

ATTACK_KINDS = ("none", "constant-bias", "ramp", "custom-sequence")


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {M.shape}")
    return M.copy()


class SystemModel:
    """Immutable container for the plant and sensor matrices.

    Construction only coerces shapes; use validate_model() to get a report
    of violated invariants (dimensions, positive definiteness, singular A).
    """

    def __init__(self, A, B, C_G, C_I, Sigma_w, Sigma_G, Sigma_I):
        self.A = _as_matrix(A, "A")
        self.B = _as_matrix(B, "B")
        self.C_G = _as_matrix(C_G, "C_G")
        self.C_I = _as_matrix(C_I, "C_I")
        self.Sigma_w = _as_matrix(Sigma_w, "Sigma_w")
        self.Sigma_G = _as_matrix(Sigma_G, "Sigma_G")
        self.Sigma_I = _as_matrix(Sigma_I, "Sigma_I")
        self.n = self.A.shape[0]
        self.p = self.B.shape[1]
        self.m_G = self.C_G.shape[0]
        self.m_I = self.C_I.shape[0]
        for M in (self.A, self.B, self.C_G, self.C_I,
                  self.Sigma_w, self.Sigma_G, self.Sigma_I):
            M.setflags(write=False)

    def __repr__(self):
        return (f"SystemModel(n={self.n}, p={self.p}, "
                f"m_G={self.m_G}, m_I={self.m_I})")


@dataclass
class PlantState:
    """True state of the plant, keeping the previous state for the relative sensor."""

    x: np.ndarray
    x_prev: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, x0) -> "PlantState":
        x0 = np.asarray(x0, dtype=float)
        # x_prev starts equal to x0 so the first relative reading is pure noise.
        return cls(x=x0.copy(), x_prev=x0.copy(), k=0)


@dataclass
class AttackSignal:
    """Additive spoofing signal d_k applied to the absolute sensor.

    kind 'none':            d_k = 0 for all k.
    kind 'constant-bias':   d_k = d for k >= start_step, else 0.
    kind 'ramp':            d_k = (k - start_step) * d for k >= start_step.
    kind 'custom-sequence': d_k = sequence[k - start_step] for k >= start_step.
    """

    kind: str = "none"
    d: Optional[np.ndarray] = None
    start_step: int = 0
    sequence: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(
                f"unknown attack kind {self.kind!r}, expected one of {ATTACK_KINDS}")
        if self.start_step < 0:
            raise ValueError(f"start_step must be >= 0, got {self.start_step}")
        if self.d is not None:
            self.d = np.asarray(self.d, dtype=float)
        if self.sequence is not None:
            self.sequence = [np.asarray(s, dtype=float) for s in self.sequence]

    @classmethod
    def none(cls) -> "AttackSignal":
        return cls(kind="none")

    def signal_at(self, k: int, m_G: int) -> np.ndarray:
        """Evaluate d_k for step k; zero before start_step."""
        zero = np.zeros(m_G)
        if self.kind == "none" or k < self.start_step:
            return zero
        if self.kind == "constant-bias":
            return self._magnitude(m_G)
        if self.kind == "ramp":
            return (k - self.start_step) * self._magnitude(m_G)
        # custom-sequence
        if self.sequence is None:
            raise ValueError("custom-sequence attack requires a sequence")
        idx = k - self.start_step
        if idx >= len(self.sequence):
            raise ValueError(
                f"attack sequence too short: step {k} needs index {idx}, "
                f"sequence has {len(self.sequence)} entries")
        return np.asarray(self.sequence[idx], dtype=float)

    def _magnitude(self, m_G: int) -> np.ndarray:
        if self.d is None:
            raise ValueError(f"attack kind {self.kind!r} requires a magnitude d")
        if self.d.shape != (m_G,):
            raise ValueError(
                f"attack magnitude has shape {self.d.shape}, expected ({m_G},)")
        return self.d


def step_dynamics(model: SystemModel, state: PlantState,
                  u: np.ndarray, w: np.ndarray) -> PlantState:
    """Advance the plant one step: x' = A x + B u + w."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if state.x.shape != (model.n,):
        raise ValueError(f"state has shape {state.x.shape}, expected ({model.n},)")
    if u.shape != (model.p,):
        raise ValueError(f"input has shape {u.shape}, expected ({model.p},)")
    if w.shape != (model.n,):
        raise ValueError(f"process noise has shape {w.shape}, expected ({model.n},)")
    x_new = model.A @ state.x + model.B @ u + w
    return PlantState(x=x_new, x_prev=state.x, k=state.k + 1)


def measure_gps(model: SystemModel, state: PlantState,
                attack: AttackSignal, v_G: np.ndarray) -> np.ndarray:
    """Absolute measurement y^G = C_G x + d_k + v_G at the state's current step."""
    return model.C_G @ state.x + attack.signal_at(state.k, model.m_G) + np.asarray(v_G, dtype=float)


def measure_imu(model: SystemModel, state: PlantState, v_I: np.ndarray) -> np.ndarray:
    """Relative measurement y^I = C_I (x - x_prev) + v_I."""
    return model.C_I @ (state.x - state.x_prev) + np.asarray(v_I, dtype=float)


class GaussianSampler:
    """Zero-mean Gaussian draws with a fixed covariance.

    The covariance is factored once (symmetric eigendecomposition with small
    negative eigenvalues clamped to zero at a -1e-12 tolerance) and the factor
    is reused across draws, since covariances are constant per scenario.
    """

    def __init__(self, Sigma):
        Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
        if Sigma.shape[0] != Sigma.shape[1]:
            raise ValueError(f"covariance must be square, got shape {Sigma.shape}")
        self.dim = Sigma.shape[0]
        if self.dim == 0:
            self._factor = np.zeros((0, 0))
            return
        sym = 0.5 * (Sigma + Sigma.T)
        eigvals, eigvecs = np.linalg.eigh(sym)
        tol = 1e-12 * max(1.0, float(np.abs(eigvals).max()))
        if eigvals.min() < -tol:
            raise ValueError(
                f"covariance is not positive semidefinite "
                f"(min eigenvalue {eigvals.min():.3e})")
        self._factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one vector; deterministic given the generator state."""
        return self._factor @ rng.standard_normal(self.dim)


def sample_noise(rng: np.random.Generator, Sigma) -> np.ndarray:
    """One-off Gaussian draw with covariance Sigma.

    Convenience wrapper; hot loops should hold a GaussianSampler so the
    factorization happens once.
    """
    return GaussianSampler(Sigma).sample(rng)


def validate_model(model: SystemModel) -> list:
    """Check the model invariants and return a list of findings (empty = valid)."""
    findings = []
    n = model.n

    if model.A.shape != (n, n):
        findings.append(f"A: must be square, got shape {model.A.shape}")
    if model.B.shape[0] != n:
        findings.append(f"B: has {model.B.shape[0]} rows, expected {n}")
    if model.C_G.shape[1] != n:
        findings.append(f"C_G: has {model.C_G.shape[1]} columns, expected {n}")
    if model.C_I.shape[1] != n:
        findings.append(f"C_I: has {model.C_I.shape[1]} columns, expected {n}")
    if model.Sigma_w.shape != (n, n):
        findings.append(f"Sigma_w: has shape {model.Sigma_w.shape}, expected ({n}, {n})")
    if model.Sigma_G.shape != (model.m_G, model.m_G):
        findings.append(
            f"Sigma_G: has shape {model.Sigma_G.shape}, expected "
            f"({model.m_G}, {model.m_G}) to match the C_G row count")
    if model.Sigma_I.shape != (model.m_I, model.m_I):
        findings.append(
            f"Sigma_I: has shape {model.Sigma_I.shape}, expected "
            f"({model.m_I}, {model.m_I}) to match the C_I row count")
    if findings:
        return findings  # eigen checks below need consistent shapes

    findings.extend(_covariance_findings("Sigma_w", model.Sigma_w, strict=False))
    findings.extend(_covariance_findings("Sigma_G", model.Sigma_G, strict=True))
    findings.extend(_covariance_findings("Sigma_I", model.Sigma_I, strict=True))

    if model.A.size:
        sv = np.linalg.svd(model.A, compute_uv=False)
        if sv.min() <= 1e-12 * max(1.0, sv.max()):
            findings.append(
                f"A: singular or numerically singular (min singular value "
                f"{sv.min():.3e}); drift analysis requires invertible A")
    return findings


def _covariance_findings(name: str, Sigma: np.ndarray, strict: bool) -> list:
    findings = []
    if Sigma.size == 0:
        return findings
    asym = np.abs(Sigma - Sigma.T).max()
    if asym > 1e-10 * max(1.0, np.abs(Sigma).max()):
        findings.append(f"{name}: not symmetric (max asymmetry {asym:.3e})")
        return findings
    eigvals = np.linalg.eigvalsh(0.5 * (Sigma + Sigma.T))
    tol = 1e-12 * max(1.0, float(np.abs(eigvals).max()))
    if strict:
        if eigvals.min() <= tol:
            findings.append(
                f"{name}: not positive definite (min eigenvalue {eigvals.min():.3e}); "
                f"sensor noise covariances must be invertible")
    elif eigvals.min() < -tol:
        findings.append(
            f"{name}: not positive semidefinite (min eigenvalue {eigvals.min():.3e})")
    return findings
