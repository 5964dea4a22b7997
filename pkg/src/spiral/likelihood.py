"""Poisson negative log-likelihood for linear measurement models.

Counts y are modeled as Poisson with mean A f + b for a nonnegative operator
A, nonnegative intensity f, and known background b.  Up to constants in y the
negative log-likelihood is

    F(f) = 1'(A f + b) - sum_i y_i log(e_i'(A f + b) + beta),

with a small beta > 0 keeping every term finite when a mean hits zero.
Zero-count terms contribute only the linear part.
"""

from __future__ import annotations

import numpy as np

from .operators import LinearMap

__all__ = ["PoissonModel"]


class PoissonModel:
    """Measurement model bundling the operator, counts, beta, and background.

    Args:
        op: nonnegative linear operator A.
        counts: observed counts y, integer-valued and nonnegative.
        beta: positive log-domain guard (default 1e-10).
        background: known nonnegative mean offset b; ``None`` means zero.
    """

    def __init__(self, op: LinearMap, counts, beta: float = 1e-10, background=None):
        self.op = op
        y = np.asarray(counts, dtype=float).ravel()
        if y.size != op.m:
            raise ValueError(f"counts size {y.size} does not match operator output {op.m}")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("counts must be finite and nonnegative")
        if np.any(y != np.floor(y)):
            raise ValueError("counts must be integer-valued")
        if not (beta > 0 and np.isfinite(beta)):
            raise ValueError("beta must be positive and finite")
        self.y = y
        self.beta = float(beta)
        if background is None:
            self.background = None
        else:
            b = np.asarray(background, dtype=float).ravel()
            if b.size != op.m:
                raise ValueError("background size does not match operator output")
            if np.any(b < 0) or not np.all(np.isfinite(b)):
                raise ValueError("background must be finite and nonnegative")
            self.background = b
        self._adjoint_ones = None

    @property
    def adjoint_ones(self) -> np.ndarray:
        """A'1, computed once on first use (one adjoint application)."""
        if self._adjoint_ones is None:
            self._adjoint_ones = self.op.adjoint(np.ones(self.op.m))
        return self._adjoint_ones

    def _means(self, f, forward):
        if forward is None:
            forward = self.op.forward(f)
        lam = forward if self.background is None else forward + self.background
        return forward, lam

    @staticmethod
    def _check_feasible(f) -> np.ndarray:
        f = np.asarray(f, dtype=float).ravel()
        if f.size and float(f.min()) < 0:
            raise ValueError("intensity has negative entries")
        return f

    def objective(self, f, forward=None) -> float:
        """F(f); pass ``forward=A f`` to reuse a cached projection."""
        f = self._check_feasible(f)
        _, lam = self._means(f, forward)
        val = float(lam.sum())
        pos = self.y > 0
        if np.any(pos):
            val -= float(self.y[pos] @ np.log(lam[pos] + self.beta))
        return val

    def gradient(self, f, forward=None) -> np.ndarray:
        """grad F(f) = A'1 - A'(y / (A f + b + beta)); one adjoint application."""
        f = self._check_feasible(f)
        _, lam = self._means(f, forward)
        ratio = self.y / (lam + self.beta)
        return self.adjoint_ones - self.op.adjoint(ratio)

    def curvature_form(self, f, delta, forward=None, delta_forward=None) -> float:
        """delta' grad^2 F(f) delta = sum_i y_i (A delta)_i^2 / (mean_i + beta)^2.

        Supply ``forward = A f`` and ``delta_forward = A delta`` to avoid any
        operator application; both are computed here otherwise.
        """
        f = self._check_feasible(f)
        _, lam = self._means(f, forward)
        if delta_forward is None:
            delta_forward = self.op.forward(delta)
        r = delta_forward / (lam + self.beta)
        return float(self.y @ (r * r))

    def lipschitz_bound(self) -> float:
        """Upper bound max(y)/beta^2 * max(A'1) * max(A 1) on the Hessian norm.

        Diagnostic only; far too pessimistic to use as a step size.
        """
        if self.y.size == 0 or float(self.y.max()) == 0.0:
            return 0.0
        row_mass = float(self.op.forward(np.ones(self.op.n)).max())
        col_mass = float(self.adjoint_ones.max())
        return float(self.y.max()) / self.beta**2 * row_mass * col_mass
