"""Sequential separable quadratic approximation solver for penalized Poisson
maximum likelihood.

The solver minimizes  Phi(f) = F(f) + tau * pen(f)  subject to f >= 0 by
iterating three steps: a Barzilai-Borwein-style curvature estimate alpha_k,
a gradient step s^k = f^k - grad F(f^k)/alpha_k, and an exact or iterative
solve of the separable subproblem

    f^{k+1} = argmin_{f >= 0}  0.5 ||f - s^k||^2 + (tau/alpha_k) pen(f).

A nonmonotone acceptance test compares Phi(f^{k+1}) against the running
maximum of the last M+1 accepted objective values minus a quadratic decrease
term; failed tests multiply alpha by eta and re-solve the subproblem.

Operator cost is tightly bounded: two applications of A per outer iteration
(one forward for the trial iterate, one adjoint for the new gradient) plus
one forward per extra backtrack.  A'1 is precomputed once.
"""

from __future__ import annotations

import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .denoise import denoise_canonical_l1, denoise_l1_dual, denoise_tv, tv_seminorm
from .likelihood import PoissonModel
from .operators import CountingMap
from .rdp import default_shift_set, rdp_fit, rdp_ti_fit
from .wavelets import OrthoBasis

__all__ = [
    "SubConfig",
    "SolverConfig",
    "TraceRecord",
    "SolverResult",
    "run",
    "bb_alpha_init",
    "gradient_step",
    "acceptance_check",
    "terminate_iterate_change",
    "terminate_objective_change",
    "kkt_residual",
    "write_trace",
]

PENALTIES = ("l1", "l1w", "tv", "rdp", "rdp-ti")


@dataclass
class SubConfig:
    """Inner-solve controls for iterative subproblems (basis l1 and TV)."""

    tol: float = 1e-8
    min_iter: int = 10
    max_iter: int = 100

    @classmethod
    def tight(cls) -> "SubConfig":
        return cls(tol=1e-8, min_iter=10, max_iter=100)

    @classmethod
    def loose(cls) -> "SubConfig":
        return cls(tol=1e-4, min_iter=1, max_iter=10)


@dataclass
class SolverConfig:
    """Outer-loop controls.

    tau: penalty weight (>= 0).
    penalty: one of 'l1', 'l1w', 'tv', 'rdp', 'rdp-ti'.
    basis: orthonormal basis, required when penalty == 'l1w'.
    eta: backtracking multiplier for alpha (> 1).
    sigma: sufficient-decrease fraction in (0, 1).
    window: M, the nonmonotone memory; 0 enforces monotone descent.
    acceptance: disable to take every step unconditionally.
    tol: termination tolerance on relative changes.
    use_objective_term: also stop on relative objective change.
    use_kkt_term: also stop on the Lagrangian residual (l1w only).
    rdp_full_shifts: average all side^2 shifts in the TI variant.
    warm_start: reuse the previous sweep's dual variables (l1w).
    """

    tau: float
    penalty: str = "l1"
    basis: OrthoBasis | None = None
    eta: float = 2.0
    sigma: float = 0.1
    window: int = 10
    alpha_min: float = 1e-30
    alpha_max: float = 1e30
    tol: float = 5e-4
    min_iter: int = 50
    max_iter: int = 500
    acceptance: bool = True
    sub: SubConfig = field(default_factory=SubConfig.tight)
    use_objective_term: bool = True
    use_kkt_term: bool = False
    rdp_full_shifts: bool = False
    warm_start: bool = True

    def validate(self) -> None:
        if not (self.tau >= 0 and np.isfinite(self.tau)):
            raise ValueError("tau must be finite and nonnegative")
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.penalty == "l1w" and self.basis is None:
            raise ValueError("penalty 'l1w' needs a basis")
        if not self.eta > 1:
            raise ValueError("eta must exceed 1")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.window < 0:
            raise ValueError("window must be nonnegative")
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 <= self.min_iter <= self.max_iter:
            raise ValueError("need 0 <= min_iter <= max_iter")


@dataclass
class TraceRecord:
    """Per-iteration record; the CSV writer emits the first six fields."""

    k: int
    phi: float
    alpha: float
    backtracks: int
    elapsed_seconds: float
    rmse: float | None
    forward_calls: int = 0
    adjoint_calls: int = 0
    step_norm: float = 0.0
    rel_change: float = 0.0


@dataclass
class SolverResult:
    f: np.ndarray
    trace: list
    termination_reason: str
    iterations: int
    setup_forward_calls: int
    setup_adjoint_calls: int
    final_phi: float
    final_alpha: float


def write_trace(path, trace) -> None:
    """Write trace records as CSV: k, phi, alpha, backtracks, elapsed_seconds, rmse."""
    with open(path, "w") as fh:
        fh.write("k,phi,alpha,backtracks,elapsed_seconds,rmse\n")
        for r in trace:
            rmse = "" if r.rmse is None else repr(float(r.rmse))
            fh.write(
                f"{r.k},{r.phi!r},{r.alpha!r},{r.backtracks},"
                f"{r.elapsed_seconds!r},{rmse}\n"
            )


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def gradient_step(f, grad, alpha: float) -> np.ndarray:
    """Unconstrained step s = f - grad/alpha feeding the subproblem."""
    return np.asarray(f, dtype=float) - np.asarray(grad, dtype=float) / alpha


def bb_alpha_init(
    model: PoissonModel,
    f,
    delta,
    forward=None,
    delta_forward=None,
    alpha_min: float = 1e-30,
    alpha_max: float = 1e30,
) -> float:
    """Curvature-matched step scale delta' H(f) delta / ||delta||^2, clamped.

    A Rayleigh quotient of the positive-semidefinite Hessian, so the raw
    value is never negative; a zero ``delta`` falls to ``alpha_min``.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    den = float(delta @ delta)
    if den == 0.0 or not np.isfinite(den):
        return alpha_min
    num = model.curvature_form(f, delta, forward=forward, delta_forward=delta_forward)
    if not np.isfinite(num):
        return alpha_max
    return float(min(max(num / den, alpha_min), alpha_max))


def acceptance_check(phi_new, window, f_new, f_old, sigma, alpha) -> bool:
    """Nonmonotone test: Phi_new <= max(window) - (sigma alpha / 2)||f_new - f_old||^2."""
    diff = np.asarray(f_new, dtype=float).ravel() - np.asarray(f_old, dtype=float).ravel()
    bound = max(window) - 0.5 * sigma * alpha * float(diff @ diff)
    return phi_new <= bound


def terminate_iterate_change(f_new, f_old, tol: float) -> bool:
    """Relative iterate change ||f_new - f_old|| / ||f_old|| <= tol.

    Falls back to the absolute norm when ||f_old|| is zero.
    """
    f_new = np.asarray(f_new, dtype=float).ravel()
    f_old = np.asarray(f_old, dtype=float).ravel()
    base = float(np.linalg.norm(f_old))
    if base == 0.0:
        return float(np.linalg.norm(f_new)) <= tol
    return float(np.linalg.norm(f_new - f_old)) / base <= tol


def terminate_objective_change(phi_new: float, phi_old: float, tol: float) -> bool:
    """Relative objective change |Phi_new - Phi_old| / |Phi_old| <= tol (absolute at 0)."""
    base = abs(phi_old)
    if base == 0.0:
        return abs(phi_new) <= tol
    return abs(phi_new - phi_old) / base <= tol


def kkt_residual(
    model: PoissonModel,
    theta,
    lam,
    basis: OrthoBasis,
    tau: float,
    grad=None,
    zero_rel: float = 1e-8,
) -> float:
    """Minimum-norm Lagrangian subgradient for the basis-sparsity problem.

    Measures stationarity of F(W theta) + tau ||theta||_1 - lam'(W theta) at
    (theta, lam), with lam the multiplier of W theta >= 0 scaled for the full
    objective (the solver passes alpha times the subproblem multiplier).
    Components with |theta_i| below ``zero_rel * max|theta|`` use the
    soft-threshold excess max(|r_i| - tau, 0); the rest use r_i + tau
    sign(theta_i), where r = W'(grad F - lam).

    Computed in the split-coordinate (positive/negative part) reformulation
    in which the objective is smooth, so a zero residual is exactly the KKT
    condition there.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    lam = np.asarray(lam, dtype=float)
    if grad is None:
        f = basis.synthesis(theta)
        grad = model.gradient(np.maximum(f, 0.0))
    g = basis.analysis(grad).ravel()
    r = g - basis.analysis(lam).ravel()
    peak = float(np.abs(theta).max()) if theta.size else 0.0
    zero = np.abs(theta) <= zero_rel * peak
    out = np.where(
        zero,
        np.maximum(np.abs(r) - tau, 0.0),
        r + tau * np.sign(theta),
    )
    return float(np.linalg.norm(out))


# ---------------------------------------------------------------------------
# penalty dispatch
# ---------------------------------------------------------------------------

@dataclass
class _SubResult:
    f: np.ndarray          # flat, feasible
    pen: float             # penalty value at f
    extras: dict


class _PenaltyL1:
    def __init__(self, shape):
        self.shape = shape

    def value(self, f):
        return float(f.sum())

    def solve(self, s, kappa, config):
        f = denoise_canonical_l1(s, kappa)
        return _SubResult(f, float(f.sum()), {})


class _PenaltyBasisL1:
    def __init__(self, shape, basis: OrthoBasis, warm_start: bool):
        if basis.n != int(np.prod(shape)):
            raise ValueError("basis shape does not match the iterate")
        self.basis = basis
        self.warm_start = warm_start
        self._warm = None

    def value(self, f):
        return float(np.abs(self.basis.analysis(f)).sum())

    def solve(self, s, kappa, config):
        sub = config.sub
        res = denoise_l1_dual(
            self.basis.analysis(s),
            kappa,
            self.basis,
            tol=sub.tol,
            min_iter=sub.min_iter,
            max_iter=sub.max_iter,
            warm=self._warm,
        )
        if self.warm_start:
            self._warm = (res.gamma, res.lam)
        pen = float(np.abs(res.theta).sum())
        return _SubResult(
            res.f.ravel(),
            pen,
            {"theta": res.theta, "lam": res.lam, "gap": res.gap, "sweeps": res.sweeps},
        )


class _PenaltyTv:
    def __init__(self, shape):
        if len(shape) != 2:
            raise ValueError("TV penalty needs a 2-D iterate")
        self.shape = shape

    def value(self, f):
        return tv_seminorm(f.reshape(self.shape))

    def solve(self, s, kappa, config):
        sub = config.sub
        f = denoise_tv(
            s.reshape(self.shape),
            kappa,
            tol=sub.tol,
            min_iter=sub.min_iter,
            max_iter=sub.max_iter,
        )
        return _SubResult(f.ravel(), tv_seminorm(f), {})


class _PenaltyRdp:
    def __init__(self, shape):
        if len(shape) != 2:
            raise ValueError("RDP penalty needs a 2-D iterate")
        self.shape = shape

    def value(self, f):
        # any image sits on the all-pixels partition
        return float(f.size)

    def solve(self, s, kappa, config):
        cells, fitted = rdp_fit(s.reshape(self.shape), kappa)
        return _SubResult(fitted.ravel(), float(len(cells)), {"cells": cells})


class _PenaltyRdpTi:
    def __init__(self, shape, full: bool):
        if len(shape) != 2:
            raise ValueError("RDP penalty needs a 2-D iterate")
        self.shape = shape
        self.shifts = default_shift_set(shape[0], full)

    def value(self, f):
        return float(f.size)

    def solve(self, s, kappa, config):
        f, info = rdp_ti_fit(
            s.reshape(self.shape), kappa, shifts=self.shifts, return_info=True
        )
        return _SubResult(f.ravel(), info.mean_leaves, {"mean_leaves": info.mean_leaves})


def _make_penalty(config: SolverConfig, shape):
    if config.penalty == "l1":
        return _PenaltyL1(shape)
    if config.penalty == "l1w":
        return _PenaltyBasisL1(shape, config.basis, config.warm_start)
    if config.penalty == "tv":
        return _PenaltyTv(shape)
    if config.penalty == "rdp":
        return _PenaltyRdp(shape)
    return _PenaltyRdpTi(shape, config.rdp_full_shifts)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

def run(model: PoissonModel, config: SolverConfig, f0, truth=None) -> SolverResult:
    """Run the solver from a feasible start ``f0``.

    ``truth`` (same size as f0) adds per-iteration RMSE percent to the trace.
    The returned iterate has the shape of ``f0``.
    """
    config.validate()
    f0 = np.asarray(f0, dtype=float)
    shape = f0.shape
    if f0.size != model.op.n:
        raise ValueError("f0 does not match the operator input size")
    if f0.size and float(f0.min()) < 0:
        raise ValueError("f0 must be nonnegative")
    counted = CountingMap(model.op)
    m = PoissonModel(counted, model.y, beta=model.beta, background=model.background)
    penalty = _make_penalty(config, shape)
    truth_flat = None
    truth_norm = 0.0
    if truth is not None:
        truth_flat = np.asarray(truth, dtype=float).ravel()
        truth_norm = float(np.linalg.norm(truth_flat))

    f = f0.ravel().copy()
    af = m.op.forward(f)
    grad = m.gradient(f, forward=af)
    ones = np.ones(f.size)
    a_ones = m.op.forward(ones)
    # first-iteration curvature probe along the all-ones direction
    alpha = bb_alpha_init(
        m, f, ones, forward=af, delta_forward=a_ones,
        alpha_min=config.alpha_min, alpha_max=config.alpha_max,
    )
    phi = m.objective(f, forward=af) + config.tau * penalty.value(f)
    window = deque([phi], maxlen=config.window + 1)
    setup_fwd, setup_adj = counted.forward_count, counted.adjoint_count

    trace: list[TraceRecord] = []
    reason = "max-iter"
    iterations = 0
    delta_prev = None
    a_delta_prev = None
    t0 = time.perf_counter()

    for k in range(config.max_iter):
        fwd0, adj0 = counted.forward_count, counted.adjoint_count
        if delta_prev is not None:
            alpha = bb_alpha_init(
                m, f, delta_prev, forward=af, delta_forward=a_delta_prev,
                alpha_min=config.alpha_min, alpha_max=config.alpha_max,
            )
        backtracks = 0
        best_trial = None
        while True:
            s = gradient_step(f, grad, alpha)
            sub = penalty.solve(s, config.tau / alpha if config.tau else 0.0, config)
            if float(sub.f.min()) < 0:
                raise RuntimeError("subproblem returned an infeasible point")
            af_new = m.op.forward(sub.f)
            phi_new = m.objective(sub.f, forward=af_new) + config.tau * sub.pen
            if not config.acceptance:
                break
            if acceptance_check(phi_new, window, sub.f, f, config.sigma, alpha):
                break
            if best_trial is None or phi_new < best_trial[0]:
                best_trial = (phi_new, sub, af_new, alpha)
            next_alpha = config.eta * alpha
            if next_alpha > config.alpha_max:
                warnings.warn(
                    "acceptance not reached before alpha_max; keeping best trial",
                    RuntimeWarning,
                )
                if best_trial is not None and best_trial[0] < phi_new:
                    phi_new, sub, af_new, alpha = best_trial
                break
            alpha = next_alpha
            backtracks += 1

        f_new = sub.f
        step = f_new - f
        step_norm = float(np.linalg.norm(step))
        base_norm = float(np.linalg.norm(f))
        rel_change = step_norm / base_norm if base_norm > 0 else step_norm
        it_change = terminate_iterate_change(f_new, f, config.tol)
        obj_change = terminate_objective_change(phi_new, phi, config.tol)

        grad_new = m.gradient(f_new, forward=af_new)
        kkt_fired = False
        if config.use_kkt_term and config.penalty == "l1w" and "theta" in sub.extras:
            res = kkt_residual(
                m, sub.extras["theta"], alpha * sub.extras["lam"],
                config.basis, config.tau, grad=grad_new,
            )
            kkt_fired = res <= config.tol

        a_delta_prev = af_new - af
        delta_prev = step
        f, af, grad, phi = f_new, af_new, grad_new, phi_new
        window.append(phi)
        iterations = k + 1

        rmse = None
        if truth_flat is not None:
            err = float(np.linalg.norm(f - truth_flat))
            rmse = 100.0 * err / truth_norm if truth_norm > 0 else 100.0 * err
        trace.append(
            TraceRecord(
                k=iterations,
                phi=phi,
                alpha=alpha,
                backtracks=backtracks,
                elapsed_seconds=time.perf_counter() - t0,
                rmse=rmse,
                forward_calls=counted.forward_count - fwd0,
                adjoint_calls=counted.adjoint_count - adj0,
                step_norm=step_norm,
                rel_change=rel_change,
            )
        )

        if iterations >= config.min_iter:
            if it_change:
                reason = "iterate-change"
                break
            if config.use_objective_term and obj_change:
                reason = "objective-change"
                break
            if kkt_fired:
                reason = "kkt"
                break

    return SolverResult(
        f=f.reshape(shape),
        trace=trace,
        termination_reason=reason,
        iterations=iterations,
        setup_forward_calls=setup_fwd,
        setup_adjoint_calls=setup_adj,
        final_phi=phi,
        final_alpha=alpha,
    )
