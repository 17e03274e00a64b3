"""Adaptive coil controllers.

The main controller blends two adaptive filters through a coupling
coefficient gamma in (0,1): a slow, regularized branch (adaptive rate mu1,
normalized update) for accuracy and a fast fixed-rate branch for quick
convergence.  gamma is the logistic image of an update factor b, itself
adapted by a signed gradient rule, and the slow branch's weights are
periodically transferred to the fast branch once gamma exceeds a threshold.

LMS, sigmoid-variable-step (SVS), and arctangent-step (ATLMS) single-filter
baselines share the same step/state conventions.

Each step function mutates its state in place and returns it along with a
StepOutput of per-step diagnostics.  States are plain values; independent
controller instances may run in parallel, but a single state must be stepped
from one thread at a time.

Batch runners (`run_*_batch`) execute many independent trials of the same
update equations vectorized across trials; they exist for experiment-harness
speed and are pinned to the scalar steps by equivalence tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DimensionMismatch(ValueError):
    """Input vector length does not match the filter order."""


class NonFiniteInput(ValueError):
    """A step input contains NaN or infinity."""


class InsufficientSamples(ValueError):
    """Too few input samples to estimate the autocorrelation matrix."""


def _inv1pexp(arg: float) -> float:
    # 1 / (1 + exp(arg)), guarded against overflow
    if arg > 700.0:
        return 0.0
    if arg < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(arg))


def logistic(u: float) -> float:
    """1 / (1 + exp(-u)); maps any finite u into (0, 1)."""
    return _inv1pexp(-u)


def _sign(v: float) -> float:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class ConvexParams:
    """Parameters of the convex combination controller.

    alpha    sensitivity of the slow branch's rate to error variation
    beta     intensity of the slow branch's rate (mu1 is clamped to [0, beta/2])
    sigma    regularization inside the rate's exponent
    phi      regularization of the normalized weight update
    c        fixed learning rate of the fast branch
    mu_b     learning rate of the update factor b
    gamma_o  weight-transfer threshold on gamma, in (0, 1)
    t_o      weight-transfer period in steps
    fit_k, fit_b  bias-term fit coefficients; the bias added to every output
                  is fit_k * x[0] + fit_b (x[0] = most recent sample)
    """

    alpha: float
    beta: float
    sigma: float = 0.0
    phi: float = 1.0
    c: float = 0.1
    mu_b: float = 0.1
    gamma_o: float = 0.55
    t_o: int = 2
    fit_k: float = 0.0
    fit_b: float = 0.0

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError("beta must be > 0")
        if self.phi < 0.0:
            raise ValueError("phi must be >= 0")
        if self.c <= 0.0:
            raise ValueError("c must be > 0")
        if not 0.0 < self.gamma_o < 1.0:
            raise ValueError("gamma_o must lie in (0, 1)")
        if self.t_o < 1:
            raise ValueError("t_o must be >= 1")


@dataclass(slots=True)
class ConvexState:
    """Mutable state of the convex combination controller.

    gamma is kept equal to logistic(b) after every step.
    """

    w1: list[float]
    w2: list[float]
    b: float = 0.0
    gamma: float = field(default=0.5)
    prev_e1: float = 0.0
    step_index: int = 0

    @classmethod
    def initial(cls, w1: Sequence[float], w2: Sequence[float] | None = None, b: float = 0.0) -> "ConvexState":
        w1 = [float(v) for v in w1]
        w2 = w1[:] if w2 is None else [float(v) for v in w2]
        if len(w1) != len(w2):
            raise DimensionMismatch("w1 and w2 must have the same length")
        return cls(w1=w1, w2=w2, b=b, gamma=logistic(b))


@dataclass(slots=True)
class FilterState:
    """State of a single-filter baseline controller."""

    w: list[float]
    fit_k: float = 0.0
    fit_b: float = 0.0
    step_index: int = 0

    @classmethod
    def initial(cls, w: Sequence[float], fit_k: float = 0.0, fit_b: float = 0.0) -> "FilterState":
        return cls(w=[float(v) for v in w], fit_k=fit_k, fit_b=fit_b)


@dataclass(frozen=True)
class StepInput:
    """One controller input sample: x is the measured disturbance tap vector
    (x[0] = most recent), d the target value.  Units follow the scenario."""

    x: tuple[float, ...]
    d: float


@dataclass(frozen=True)
class StepOutput:
    """Per-step diagnostics.  y is the combined control signal; e always
    satisfies e = gamma * e1 + (1 - gamma) * e2 for the convex controller."""

    y: float
    y1: float
    y2: float
    e: float
    e1: float
    e2: float
    mu1: float


def _check_input(x: Sequence[float], d: float, order: int) -> None:
    if len(x) != order:
        raise DimensionMismatch(f"input length {len(x)} != filter order {order}")
    for v in x:
        if not math.isfinite(v):
            raise NonFiniteInput(f"non-finite input sample {v!r}")
    if not math.isfinite(d):
        raise NonFiniteInput(f"non-finite target {d!r}")


def convex_step(
    state: ConvexState, params: ConvexParams, inp: StepInput
) -> tuple[StepOutput, ConvexState]:
    """Advance the convex combination controller by one sample.

    Executes, in order: output combination, error estimation, learning-rate
    update, weight updates, conditional weight transfer, and update-factor /
    gamma refresh.  The state is mutated in place and returned.
    """
    w1, w2, x = state.w1, state.w2, inp.x
    _check_input(x, inp.d, len(w1))
    g = state.gamma

    bias = params.fit_k * x[0] + params.fit_b
    a1 = 0.0
    a2 = 0.0
    xx = 0.0
    for i in range(len(x)):
        xi = x[i]
        a1 += w1[i] * xi
        a2 += w2[i] * xi
        xx += xi * xi
    y1 = a1 + bias
    y2 = a2 + bias
    y = g * a1 + (1.0 - g) * a2 + bias

    e1 = inp.d - y1
    e2 = inp.d - y2
    e = inp.d - y

    # adaptive rate of the slow branch, clamped to [0, beta/2]
    arg = -params.alpha * abs(e1 * state.prev_e1) + params.sigma * abs(e1)
    mu1 = params.beta * (_inv1pexp(arg) - 0.5)
    if mu1 < 0.0:
        mu1 = 0.0
    elif mu1 > 0.5 * params.beta:
        mu1 = 0.5 * params.beta

    k1 = 2.0 * mu1 * e1 / (params.phi + xx)
    k2 = params.c * e2
    for i in range(len(x)):
        w1[i] += k1 * x[i]
        w2[i] += k2 * x[i]

    if g > params.gamma_o and state.step_index % params.t_o == 0:
        state.w2 = w1[:]

    state.b += params.mu_b * _sign(e) * (y1 - y2) * g * (1.0 - g)
    state.gamma = logistic(state.b)
    state.prev_e1 = e1
    state.step_index += 1

    return StepOutput(y, y1, y2, e, e1, e2, mu1), state


def lms_step(state: FilterState, mu: float, inp: StepInput) -> tuple[StepOutput, FilterState]:
    """Fixed-step LMS baseline: w <- w + mu * e * x."""
    w, x = state.w, inp.x
    _check_input(x, inp.d, len(w))
    bias = state.fit_k * x[0] + state.fit_b
    y = bias
    for i in range(len(x)):
        y += w[i] * x[i]
    e = inp.d - y
    k = mu * e
    for i in range(len(x)):
        w[i] += k * x[i]
    state.step_index += 1
    return StepOutput(y, y, y, e, e, e, mu), state


def svs_step(
    state: FilterState, alpha: float, beta: float, inp: StepInput
) -> tuple[StepOutput, FilterState]:
    """Sigmoid variable-step LMS: mu(n) grows with |e(n)| and saturates at
    beta/2."""
    w, x = state.w, inp.x
    _check_input(x, inp.d, len(w))
    bias = state.fit_k * x[0] + state.fit_b
    y = bias
    for i in range(len(x)):
        y += w[i] * x[i]
    e = inp.d - y
    mu = beta * (_inv1pexp(-alpha * abs(e)) - 0.5)
    k = mu * e
    for i in range(len(x)):
        w[i] += k * x[i]
    state.step_index += 1
    return StepOutput(y, y, y, e, e, e, mu), state


def atlms_step(
    state: FilterState,
    alpha: float,
    beta: float,
    m: float,
    n_scale: float,
    inp: StepInput,
) -> tuple[StepOutput, FilterState]:
    """Arctangent-step LMS: mu(n) = beta * (2/pi) * atan(alpha * e^2) * m/(m+n),
    bounded by beta * m / (m + n)."""
    w, x = state.w, inp.x
    _check_input(x, inp.d, len(w))
    bias = state.fit_k * x[0] + state.fit_b
    y = bias
    for i in range(len(x)):
        y += w[i] * x[i]
    e = inp.d - y
    mu = beta * (2.0 / math.pi) * math.atan(alpha * e * e) * m / (m + n_scale)
    k = mu * e
    for i in range(len(x)):
        w[i] += k * x[i]
    state.step_index += 1
    return StepOutput(y, y, y, e, e, e, mu), state


# ---------------------------------------------------------------------------
# convergence condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    """Result of checking the step-size convergence condition against input
    statistics: both rates must be positive and below 2 / lambda_max."""

    lambda_max: float
    mu_max_bound: float
    nlms_rate: float
    nlms_ok: bool
    fixed_rate: float
    fixed_ok: bool
    passed: bool
    n_samples: int
    power_iterations: int


def _power_iteration(r: np.ndarray, tol: float = 1e-10, max_iter: int = 100000) -> tuple[float, int]:
    m = r.shape[0]
    v = np.ones(m) / math.sqrt(m)
    lam = float(v @ r @ v)
    for it in range(1, max_iter + 1):
        w = r @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0, it
        v = w / norm
        lam_new = float(v @ r @ v)
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new, it
        lam = lam_new
    return lam, max_iter


def check_convergence_condition(
    params: ConvexParams, x_samples: Sequence[Sequence[float]]
) -> ConditionReport:
    """Estimate the input autocorrelation matrix from samples and check the
    controller rates against the 2/lambda_max stability bound.

    The slow branch's effective rate is bounded by beta / (phi + min x^T x);
    the fast branch's by its fixed rate c.  Raises InsufficientSamples when
    fewer samples than the filter order are supplied.
    """
    x = np.asarray(x_samples, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("x_samples must be a 2-D sample/tap array")
    n, order = x.shape
    if n < order:
        raise InsufficientSamples(f"need >= {order} samples, got {n}")

    rxx = (x.T @ x) / n
    lam, iters = _power_iteration(rxx)
    bound = math.inf if lam <= 0.0 else 2.0 / lam

    min_xtx = float(np.min(np.einsum("ij,ij->i", x, x)))
    nlms_rate = params.beta / (params.phi + min_xtx)
    nlms_ok = params.beta > 0.0 and nlms_rate <= bound
    fixed_ok = 0.0 < params.c < bound

    return ConditionReport(
        lambda_max=lam,
        mu_max_bound=bound,
        nlms_rate=nlms_rate,
        nlms_ok=nlms_ok,
        fixed_rate=params.c,
        fixed_ok=fixed_ok,
        passed=nlms_ok and fixed_ok,
        n_samples=n,
        power_iterations=iters,
    )


# ---------------------------------------------------------------------------
# batched trial runners (vectorized across independent trials)
# ---------------------------------------------------------------------------


def _bias_col(x_n: np.ndarray, fit_k: float, fit_b: float) -> np.ndarray:
    return fit_k * x_n[:, 0] + fit_b


def run_lms_batch(
    w0: Sequence[float],
    mu: float,
    x: np.ndarray,
    d: np.ndarray,
    fit_k: float = 0.0,
    fit_b: float = 0.0,
    record_w_at: Sequence[int] = (),
) -> dict:
    """Run independent LMS trials: x has shape (trials, n_iters, order),
    d shape (trials, n_iters).  Returns per-trial error traces and final
    weights; `record_w_at` captures weight snapshots before those steps."""
    trials, n_iters, order = x.shape
    w = np.tile(np.asarray(w0, dtype=float), (trials, 1))
    e_out = np.empty((trials, n_iters))
    snaps: dict[int, np.ndarray] = {}
    record = frozenset(int(i) for i in record_w_at)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_iters):
            if n in record:
                snaps[n] = w.copy()
            x_n = x[:, n, :]
            y = np.einsum("ij,ij->i", w, x_n) + _bias_col(x_n, fit_k, fit_b)
            e = d[:, n] - y
            e_out[:, n] = e
            w += (mu * e)[:, None] * x_n
    return {"e": e_out, "w": w, "w_snapshots": snaps}


def run_svs_batch(
    w0: Sequence[float],
    alpha: float,
    beta: float,
    x: np.ndarray,
    d: np.ndarray,
    fit_k: float = 0.0,
    fit_b: float = 0.0,
) -> dict:
    trials, n_iters, order = x.shape
    w = np.tile(np.asarray(w0, dtype=float), (trials, 1))
    e_out = np.empty((trials, n_iters))
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_iters):
            x_n = x[:, n, :]
            y = np.einsum("ij,ij->i", w, x_n) + _bias_col(x_n, fit_k, fit_b)
            e = d[:, n] - y
            e_out[:, n] = e
            mu = beta * (1.0 / (1.0 + np.exp(np.clip(-alpha * np.abs(e), -700, 700))) - 0.5)
            w += (mu * e)[:, None] * x_n
    return {"e": e_out, "w": w}


def run_atlms_batch(
    w0: Sequence[float],
    alpha: float,
    beta: float,
    m: float,
    n_scale: float,
    x: np.ndarray,
    d: np.ndarray,
    fit_k: float = 0.0,
    fit_b: float = 0.0,
) -> dict:
    trials, n_iters, order = x.shape
    w = np.tile(np.asarray(w0, dtype=float), (trials, 1))
    e_out = np.empty((trials, n_iters))
    gain = beta * (2.0 / math.pi) * m / (m + n_scale)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_iters):
            x_n = x[:, n, :]
            y = np.einsum("ij,ij->i", w, x_n) + _bias_col(x_n, fit_k, fit_b)
            e = d[:, n] - y
            e_out[:, n] = e
            mu = gain * np.arctan(alpha * e * e)
            w += (mu * e)[:, None] * x_n
    return {"e": e_out, "w": w}


def run_convex_batch(
    w0: Sequence[float],
    params: ConvexParams,
    x: np.ndarray,
    d: np.ndarray,
    b0: float = 0.0,
    record_w_at: Sequence[int] = (),
) -> dict:
    """Vectorized convex combination trials; same update order as
    convex_step."""
    trials, n_iters, order = x.shape
    w1 = np.tile(np.asarray(w0, dtype=float), (trials, 1))
    w2 = w1.copy()
    b = np.full(trials, float(b0))
    gamma = 1.0 / (1.0 + np.exp(-np.clip(b, -700, 700)))
    prev_e1 = np.zeros(trials)
    e_out = np.empty((trials, n_iters))
    e1_out = np.empty((trials, n_iters))
    e2_out = np.empty((trials, n_iters))
    snaps: dict[int, np.ndarray] = {}
    record = frozenset(int(i) for i in record_w_at)
    half_beta = 0.5 * params.beta
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_iters):
            if n in record:
                snaps[n] = w1.copy()
            x_n = x[:, n, :]
            bias = _bias_col(x_n, params.fit_k, params.fit_b)
            a1 = np.einsum("ij,ij->i", w1, x_n)
            a2 = np.einsum("ij,ij->i", w2, x_n)
            xx = np.einsum("ij,ij->i", x_n, x_n)
            y1 = a1 + bias
            y2 = a2 + bias
            y = gamma * a1 + (1.0 - gamma) * a2 + bias
            d_n = d[:, n]
            e1 = d_n - y1
            e2 = d_n - y2
            e = d_n - y
            e_out[:, n] = e
            e1_out[:, n] = e1
            e2_out[:, n] = e2

            arg = -params.alpha * np.abs(e1 * prev_e1) + params.sigma * np.abs(e1)
            mu1 = params.beta * (1.0 / (1.0 + np.exp(np.clip(arg, -700, 700))) - 0.5)
            mu1 = np.clip(mu1, 0.0, half_beta)

            w1 += (2.0 * mu1 * e1 / (params.phi + xx))[:, None] * x_n
            w2 += (params.c * e2)[:, None] * x_n

            if n % params.t_o == 0:
                transfer = gamma > params.gamma_o
                if transfer.any():
                    w2[transfer] = w1[transfer]

            b += params.mu_b * np.sign(e) * (y1 - y2) * gamma * (1.0 - gamma)
            gamma = 1.0 / (1.0 + np.exp(-np.clip(b, -700, 700)))
            prev_e1 = e1
    return {
        "e": e_out,
        "e1": e1_out,
        "e2": e2_out,
        "w1": w1,
        "w2": w2,
        "b": b,
        "gamma": gamma,
        "w_snapshots": snaps,
    }


# ---------------------------------------------------------------------------
# diagnostics export
# ---------------------------------------------------------------------------

DIAGNOSTICS_HEADER = ("n", "y", "y1", "y2", "e", "e1", "e2", "gamma", "b", "mu1")


class DiagnosticsRecorder:
    """Collects per-step convex-controller diagnostics for CSV export."""

    def __init__(self) -> None:
        self.rows: list[tuple] = []

    def record(self, n: int, out: StepOutput, state: ConvexState) -> None:
        self.rows.append(
            (n, out.y, out.y1, out.y2, out.e, out.e1, out.e2, state.gamma, state.b, out.mu1)
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DIAGNOSTICS_HEADER)
            for row in self.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
