"""Closed-loop scenario runner: plant + tracking controller + detector + estimator.

Per step the runner (1) computes the control from the current estimate,
(2) steps the true plant with process noise, (3) draws both measurements,
(4) updates the detector from the GPS residual, (5) picks the operating mode
from the updated statistic, and (6) fuses in that mode.  The mode decision
happens before the fuse so a detected attack never corrupts the estimate on
the step it is detected.

Randomness: a run owns three numpy Generator streams (process, GPS, IMU)
spawned from SeedSequence(seed).  Monte Carlo run i uses the derived seed
SeedSequence([master_seed, i]).generate_state(1)[0], so batches are
reproducible and runs are independent.
"""

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import List, Optional

import numpy as np

from .analysis import (EscapeTimeReport, drift_matrices, escape_report,
                       escape_time, spectral_norm, stationary_covariance)
from .chi2 import chi2_quantile
from .detector import (DetectorConfig, cusum_update, residual,
                       residual_covariance)
from .estimator import EstimatorState, Mode, StackedSensorForms, fuse
from .exceptions import ConfigError
from .model import (ATTACK_KINDS, AttackSignal, GaussianSampler, PlantState,
                    SystemModel, measure_gps, measure_imu, step_dynamics,
                    validate_model)

CSV_FORMAT = "csv"
JSON_FORMAT = "json"


@dataclass
class ScenarioConfig:
    model: SystemModel
    x0: np.ndarray
    target: np.ndarray
    kp: float = 1.0
    kd: float = 2.0
    attack: AttackSignal = field(default_factory=AttackSignal.none)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    steps: int = 1000
    seed: int = 0
    zeta_norm: float = 2.0
    runs: int = 1


@dataclass
class StepRecord:
    k: int
    x: np.ndarray
    x_hat: np.ndarray
    u: np.ndarray
    S: float
    mode: str
    alarmed: bool
    trace_P: float
    norm_P: float
    conf_radius: float
    err_norm: float


@dataclass
class ScenarioTrace:
    records: List[StepRecord]
    first_alarm_step: Optional[int]
    attack_detection_step: Optional[int]
    escape: Optional[EscapeTimeReport]
    escape_time_from_alarm: Optional[int]
    detectable_gps: Optional[bool]
    detectable_drift_pair: Optional[bool]
    covariances: Optional[List[np.ndarray]] = None

    def summary(self) -> dict:
        return {
            "first_alarm_step": self.first_alarm_step,
            "attack_detection_step": self.attack_detection_step,
            "escape_time": None if self.escape is None else int(self.escape.k_escape),
            "escape_time_lower_bound":
                None if self.escape is None or self.escape.k_lower_bound is None
                else float(self.escape.k_lower_bound),
            "stationary_trace_P":
                None if self.escape is None
                else float(np.trace(self.escape.stationary_P)),
            "detectable_gps": self.detectable_gps,
            "detectable_drift_pair": self.detectable_drift_pair,
        }


@dataclass
class RunSummary:
    index: int
    seed: int
    first_alarm_step: Optional[int]
    attack_detection_step: Optional[int]
    steps: int
    covered_steps: int
    post_attack_steps: int
    covered_post_attack: int
    final_err_norm: float


@dataclass
class MonteCarloSummary:
    n_runs: int
    mean_error: np.ndarray          # (steps, n) mean of x - x_hat per step
    coverage: np.ndarray            # (steps,) fraction of runs with err <= radius
    runs: List[RunSummary]
    attack_start: Optional[int]

    def coverage_post_attack(self) -> Optional[float]:
        total = sum(r.post_attack_steps for r in self.runs)
        if total == 0:
            return None
        return sum(r.covered_post_attack for r in self.runs) / total


class ScenarioShared:
    """Model-derived pieces reused across runs of the same scenario."""

    def __init__(self, model: SystemModel):
        self.model = model
        self.stacked = StackedSensorForms.from_model(model)
        self.sampler_w = GaussianSampler(model.Sigma_w)
        self.sampler_G = GaussianSampler(model.Sigma_G)
        self.sampler_I = GaussianSampler(model.Sigma_I)
        self._stationary_P = None
        self._drift = None
        self._drift_failed = False

    def stationary_P(self) -> np.ndarray:
        if self._stationary_P is None:
            self._stationary_P = stationary_covariance(self.model)
        return self._stationary_P

    def drift(self):
        if self._drift is None and not self._drift_failed:
            try:
                self._drift = drift_matrices(self.model)
            except ValueError:
                self._drift_failed = True   # singular A: no drift analysis
        return self._drift


def pd_control(x_hat, target, kp: float, kd: float) -> np.ndarray:
    """Tracking input kp * (target - position) - kd * velocity.

    Assumes the state is laid out as [position block, velocity block] with
    the position block matching the target's length.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    target = np.asarray(target, dtype=float)
    p = target.size
    return kp * (target - x_hat[:p]) - kd * x_hat[p:2 * p]


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Deterministic per-run seed for Monte Carlo batches."""
    ss = np.random.SeedSequence([int(master_seed), int(run_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_scenario(config: ScenarioConfig, *, detector_enabled: bool = True,
                 keep_covariances: bool = False,
                 shared: Optional[ScenarioShared] = None) -> ScenarioTrace:
    """Execute one seeded closed-loop run and return its trace.

    detector_enabled=False disables the alarm entirely (the statistic is not
    accumulated and the estimator stays in normal mode), matching an
    infinite-threshold detector.
    """
    model = config.model
    if shared is None:
        shared = ScenarioShared(model)
    det = config.detector
    threshold = det.threshold() if detector_enabled else math.inf
    chi2_n = chi2_quantile(model.n, det.alpha)

    attack_start = (config.attack.start_step
                    if config.attack.kind != "none" else None)
    rng_w, rng_G, rng_I = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(config.seed).spawn(3))
    plant = PlantState.initial(config.x0)
    est = EstimatorState.initial(config.x0)
    S = 0.0
    first_alarm = None
    detection_step = None
    P_at_detection = None
    records: List[StepRecord] = []
    covariances = [] if keep_covariances else None

    for k in range(1, config.steps + 1):
        u = pd_control(est.x_hat, config.target, config.kp, config.kd)
        plant = step_dynamics(model, plant, u, shared.sampler_w.sample(rng_w))
        y_G = measure_gps(model, plant, config.attack, shared.sampler_G.sample(rng_G))
        y_I = measure_imu(model, plant, shared.sampler_I.sample(rng_I))

        # Detector sees the GPS residual against the previous fused estimate
        # and last covariance, in both modes.
        if detector_enabled:
            d_hat = residual(y_G, est.x_hat, u, model)
            P_d = residual_covariance(est.P, model)
            S = cusum_update(S, d_hat, P_d, det.delta)
        alarmed = S > threshold
        mode = Mode.EMERGENCY if alarmed else Mode.NORMAL

        est = fuse(est.with_mode(mode), model, shared.stacked, u, y_G, y_I)

        if alarmed:
            if first_alarm is None:
                first_alarm = k
            # Detection latency is measured against the attack onset; noise
            # can trip transient alarms earlier, which are kept separate.
            if detection_step is None and (attack_start is None
                                           or k >= attack_start):
                detection_step = k
                P_at_detection = est.P.copy()

        # plant.x, est.x_hat, est.P and u are fresh arrays each step, so the
        # record can own them without copying.
        norm_P = spectral_norm(est.P)
        err = float(np.linalg.norm(plant.x - est.x_hat))
        records.append(StepRecord(
            k=k, x=plant.x, x_hat=est.x_hat, u=u,
            S=S, mode=mode.value, alarmed=alarmed,
            trace_P=float(np.trace(est.P)), norm_P=norm_P,
            conf_radius=math.sqrt(chi2_n * norm_P), err_norm=err))
        if covariances is not None:
            covariances.append(est.P)

    report = None
    escape_from_alarm = None
    if first_alarm is not None:
        report = escape_report(model, config.zeta_norm, det.alpha,
                               df=model.n, stationary_P=shared.stationary_P())
        if P_at_detection is not None:
            escape_from_alarm = escape_time(P_at_detection, model,
                                            config.zeta_norm, det.alpha,
                                            model.n)

    drift = shared.drift()
    return ScenarioTrace(
        records=records,
        first_alarm_step=first_alarm,
        attack_detection_step=detection_step,
        escape=report,
        escape_time_from_alarm=escape_from_alarm,
        detectable_gps=None if drift is None else drift.gps_pair_detectable,
        detectable_drift_pair=None if drift is None else drift.drift_pair_detectable,
        covariances=covariances,
    )


def monte_carlo(config: ScenarioConfig, *, detector_enabled: bool = True,
                shared: Optional[ScenarioShared] = None) -> MonteCarloSummary:
    """Run `config.runs` independent scenarios with derived seeds and aggregate."""
    if config.runs < 1:
        raise ConfigError(f"runs must be >= 1, got {config.runs}")
    if shared is None:
        shared = ScenarioShared(config.model)
    attack_start = (config.attack.start_step
                    if config.attack.kind != "none" else None)

    err_sum = np.zeros((config.steps, config.model.n))
    covered = np.zeros(config.steps, dtype=int)
    summaries: List[RunSummary] = []

    for i in range(config.runs):
        seed_i = derive_run_seed(config.seed, i)
        trace = run_scenario(replace(config, seed=seed_i, runs=1),
                             detector_enabled=detector_enabled, shared=shared)
        covered_all = 0
        covered_post = 0
        post_steps = 0
        for rec in trace.records:
            err_sum[rec.k - 1] += rec.x - rec.x_hat
            inside = rec.err_norm <= rec.conf_radius
            covered[rec.k - 1] += inside
            covered_all += inside
            if attack_start is not None and rec.k >= attack_start:
                post_steps += 1
                covered_post += inside
        summaries.append(RunSummary(
            index=i, seed=seed_i, first_alarm_step=trace.first_alarm_step,
            attack_detection_step=trace.attack_detection_step,
            steps=config.steps, covered_steps=covered_all,
            post_attack_steps=post_steps, covered_post_attack=covered_post,
            final_err_norm=trace.records[-1].err_norm))

    return MonteCarloSummary(
        n_runs=config.runs,
        mean_error=err_sum / config.runs,
        coverage=covered / config.runs,
        runs=summaries,
        attack_start=attack_start,
    )


# --- configuration files -----------------------------------------------------

_MODEL_KEYS = ("A", "B", "C_G", "C_I", "Sigma_w", "Sigma_G", "Sigma_I")
_TOP_KEYS = ("model", "x0", "target", "controller", "attack", "detector",
             "steps", "seed", "zeta_norm", "runs")


def builtin_config_path(name: str = "paper_uav"):
    """Path to a configuration shipped with the package."""
    return resources.files("spoofguard").joinpath("configs", f"{name}.json")


def parse_config(path) -> ScenarioConfig:
    """Parse and validate a scenario configuration file (strict schema)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc

    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _reject_unknown(raw, _TOP_KEYS, "")

    if "model" not in raw:
        raise ConfigError("model: section is required")
    model_raw = raw["model"]
    if not isinstance(model_raw, dict):
        raise ConfigError("model: must be an object")
    _reject_unknown(model_raw, _MODEL_KEYS, "model.")
    missing = [k for k in _MODEL_KEYS if k not in model_raw]
    if missing:
        raise ConfigError(f"model: missing keys {missing}")
    try:
        model = SystemModel(**{k: model_raw[k] for k in _MODEL_KEYS})
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    findings = validate_model(model)
    if findings:
        raise ConfigError("model: " + "; ".join(findings))

    x0 = np.asarray(raw.get("x0", np.zeros(model.n)), dtype=float)
    if x0.shape != (model.n,):
        raise ConfigError(f"x0: has shape {x0.shape}, expected ({model.n},)")
    target = np.asarray(raw.get("target", [10.0, 10.0]), dtype=float)
    if target.shape != (model.p,):
        raise ConfigError(
            f"target: has shape {target.shape}, expected ({model.p},) "
            f"to match the input dimension")

    controller = raw.get("controller", {})
    if not isinstance(controller, dict):
        raise ConfigError("controller: must be an object")
    _reject_unknown(controller, ("kp", "kd"), "controller.")
    kp = float(controller.get("kp", 1.0))
    kd = float(controller.get("kd", 2.0))
    if kp <= 0 or kd <= 0:
        raise ConfigError(f"controller: gains must be positive, got kp={kp}, kd={kd}")

    attack = _parse_attack(raw.get("attack"), model.m_G)

    det_raw = raw.get("detector", {})
    if not isinstance(det_raw, dict):
        raise ConfigError("detector: must be an object")
    _reject_unknown(det_raw, ("alpha", "delta"), "detector.")
    try:
        detector = DetectorConfig(alpha=float(det_raw.get("alpha", 0.01)),
                                  delta=float(det_raw.get("delta", 0.15)),
                                  df=model.m_G)
    except ValueError as exc:
        raise ConfigError(f"detector: {exc}") from exc

    steps = int(raw.get("steps", 1000))
    if steps < 1:
        raise ConfigError(f"steps: must be >= 1, got {steps}")
    seed = int(raw.get("seed", 0))
    if seed < 0:
        raise ConfigError(f"seed: must be >= 0, got {seed}")
    zeta_norm = float(raw.get("zeta_norm", 2.0))
    if zeta_norm <= 0:
        raise ConfigError(f"zeta_norm: must be positive, got {zeta_norm}")
    runs = int(raw.get("runs", 1))
    if runs < 1:
        raise ConfigError(f"runs: must be >= 1, got {runs}")

    return ScenarioConfig(model=model, x0=x0, target=target, kp=kp, kd=kd,
                          attack=attack, detector=detector, steps=steps,
                          seed=seed, zeta_norm=zeta_norm, runs=runs)


def _parse_attack(raw, m_G: int) -> AttackSignal:
    if raw is None:
        return AttackSignal.none()
    if not isinstance(raw, dict):
        raise ConfigError("attack: must be an object")
    _reject_unknown(raw, ("kind", "d", "start_step", "sequence"), "attack.")
    kind = raw.get("kind", "none")
    if kind not in ATTACK_KINDS:
        raise ConfigError(
            f"attack.kind: unknown kind {kind!r}, expected one of {ATTACK_KINDS}")
    d = raw.get("d")
    sequence = raw.get("sequence")
    start_step = int(raw.get("start_step", 0))
    if start_step < 0:
        raise ConfigError(f"attack.start_step: must be >= 0, got {start_step}")
    if kind in ("constant-bias", "ramp"):
        if d is None:
            raise ConfigError(f"attack.d: required for kind {kind!r}")
        d = np.asarray(d, dtype=float)
        if d.shape != (m_G,):
            raise ConfigError(
                f"attack.d: has shape {d.shape}, expected ({m_G},)")
    if kind == "custom-sequence":
        if sequence is None:
            raise ConfigError("attack.sequence: required for kind 'custom-sequence'")
        sequence = [np.asarray(s, dtype=float) for s in sequence]
        bad = [i for i, s in enumerate(sequence) if s.shape != (m_G,)]
        if bad:
            raise ConfigError(
                f"attack.sequence[{bad[0]}]: has shape "
                f"{sequence[bad[0]].shape}, expected ({m_G},)")
    return AttackSignal(kind=kind, d=d, start_step=start_step, sequence=sequence)


def _reject_unknown(section: dict, allowed, prefix: str) -> None:
    unknown = [k for k in section if k not in allowed]
    if unknown:
        raise ConfigError(f"unknown key '{prefix}{unknown[0]}'")


# --- trace export -------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def export_trace(trace: ScenarioTrace, path, fmt: str = CSV_FORMAT) -> None:
    """Write a trace to disk as CSV (per-step rows) or JSON (records + summary)."""
    if fmt == CSV_FORMAT:
        _export_csv(trace, path)
    elif fmt == JSON_FORMAT:
        _export_json(trace, path)
    else:
        raise ValueError(f"unknown export format {fmt!r}, expected 'csv' or 'json'")


def _export_csv(trace: ScenarioTrace, path) -> None:
    first = trace.records[0]
    n = first.x.size
    p = first.u.size
    header = (["k"]
              + [f"x{i + 1}" for i in range(n)]
              + [f"xhat{i + 1}" for i in range(n)]
              + [f"u{i + 1}" for i in range(p)]
              + ["S", "mode", "alarmed", "trace_P", "norm_P",
                 "conf_radius", "err_norm"])
    lines = [",".join(header)]
    for rec in trace.records:
        row = ([str(rec.k)]
               + [_fmt(v) for v in rec.x]
               + [_fmt(v) for v in rec.x_hat]
               + [_fmt(v) for v in rec.u]
               + [_fmt(rec.S), rec.mode, "true" if rec.alarmed else "false",
                  _fmt(rec.trace_P), _fmt(rec.norm_P),
                  _fmt(rec.conf_radius), _fmt(rec.err_norm)])
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _export_json(trace: ScenarioTrace, path) -> None:
    summary = trace.summary()
    if trace.escape is not None:
        summary["escape_report"] = trace.escape.to_dict()
        summary["escape_report"]["k_escape_from_alarm"] = trace.escape_time_from_alarm
    payload = {
        "records": [{
            "k": rec.k,
            "x": rec.x.tolist(),
            "x_hat": rec.x_hat.tolist(),
            "u": rec.u.tolist(),
            "S": rec.S,
            "mode": rec.mode,
            "alarmed": rec.alarmed,
            "trace_P": rec.trace_P,
            "norm_P": rec.norm_P,
            "conf_radius": rec.conf_radius,
            "err_norm": rec.err_norm,
        } for rec in trace.records],
        "summary": summary,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
