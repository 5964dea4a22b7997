"""Linear forward/adjoint operator pairs.

Everything downstream (likelihood, solver, oracles) talks to measurement
physics through the ``LinearMap`` interface: a pair of maps ``forward``
(R^n -> R^m) and ``adjoint`` (R^m -> R^n) that are exact transposes of each
other.  Operators act on flat float vectors; any array whose total size
matches is accepted and raveled in C order.

The module provides dense/sparse matrix wrappers, first-order difference
operators for images, and a parallel-beam strip-integral tomography
projector with optional attenuation.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LinearMap",
    "MatrixMap",
    "IdentityMap",
    "CountingMap",
    "DifferenceMap",
    "TomographyModel",
    "build_projector",
    "build_tomography",
    "adjoint_gap",
    "diff_h",
    "diff_v",
    "diff_h_adjoint",
    "diff_v_adjoint",
]


class LinearMap:
    """Base class for an exact forward/adjoint operator pair.

    Attributes:
        m: output dimension of ``forward``.
        n: input dimension of ``forward``.
    """

    def __init__(self, m: int, n: int):
        m, n = int(m), int(n)
        if m <= 0 or n <= 0:
            raise ValueError(f"operator dimensions must be positive, got {(m, n)}")
        self.m = m
        self.n = n

    # subclasses implement these on validated 1-D inputs
    def _forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def _as_vector(x, size: int, what: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.size != size:
            raise ValueError(f"{what} expects {size} entries, got shape {x.shape}")
        return x.ravel()

    def forward(self, x) -> np.ndarray:
        """Apply the operator to ``x`` (size ``n``), returning a vector of size ``m``."""
        return self._forward(self._as_vector(x, self.n, "forward"))

    def adjoint(self, y) -> np.ndarray:
        """Apply the transpose to ``y`` (size ``m``), returning a vector of size ``n``."""
        return self._adjoint(self._as_vector(y, self.m, "adjoint"))

    def to_dense(self, max_elements: int = 1 << 22) -> np.ndarray:
        """Materialize the operator as an (m, n) array.

        Intended for oracle-side checks on small instances only; refuses to
        build anything with more than ``max_elements`` entries.
        """
        if self.m * self.n > max_elements:
            raise ValueError(
                f"dense materialization of a {self.m}x{self.n} operator exceeds "
                f"the {max_elements}-element cap"
            )
        cols = np.empty((self.m, self.n))
        e = np.zeros(self.n)
        for j in range(self.n):
            e[j] = 1.0
            cols[:, j] = self._forward(e.copy())
            e[j] = 0.0
        return cols


class MatrixMap(LinearMap):
    """LinearMap backed by an explicit dense or scipy.sparse matrix."""

    def __init__(self, matrix):
        if sp.issparse(matrix):
            self.matrix = matrix.tocsr()
            self._mt = self.matrix.T.tocsr()
        else:
            self.matrix = np.asarray(matrix, dtype=float)
            if self.matrix.ndim != 2:
                raise ValueError("MatrixMap needs a 2-D matrix")
            self._mt = self.matrix.T
        super().__init__(self.matrix.shape[0], self.matrix.shape[1])

    def _forward(self, x):
        return np.asarray(self.matrix @ x).ravel()

    def _adjoint(self, y):
        return np.asarray(self._mt @ y).ravel()

    def to_dense(self, max_elements: int = 1 << 22):
        if self.m * self.n > max_elements:
            raise ValueError("dense materialization exceeds the element cap")
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return self.matrix.copy()


class IdentityMap(LinearMap):
    def __init__(self, n: int):
        super().__init__(n, n)

    def _forward(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()


class CountingMap(LinearMap):
    """Wrapper that counts forward/adjoint applications of another map."""

    def __init__(self, op: LinearMap):
        super().__init__(op.m, op.n)
        self.op = op
        self.forward_count = 0
        self.adjoint_count = 0

    def _forward(self, x):
        self.forward_count += 1
        return self.op._forward(x)

    def _adjoint(self, y):
        self.adjoint_count += 1
        return self.op._adjoint(y)

    def to_dense(self, max_elements: int = 1 << 22):
        return self.op.to_dense(max_elements)


# ---------------------------------------------------------------------------
# first-order differences on images
# ---------------------------------------------------------------------------

def diff_h(image: np.ndarray) -> np.ndarray:
    """Horizontal first differences f[k,l] - f[k,l+1]; shape (m, n-1)."""
    return image[:, :-1] - image[:, 1:]


def diff_v(image: np.ndarray) -> np.ndarray:
    """Vertical first differences f[k,l] - f[k+1,l]; shape (m-1, n)."""
    return image[:-1, :] - image[1:, :]


def diff_h_adjoint(p: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    out[:, :-1] += p
    out[:, 1:] -= p
    return out


def diff_v_adjoint(p: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    out[:-1, :] += p
    out[1:, :] -= p
    return out


class DifferenceMap(LinearMap):
    """Stacked difference operator D = [D1; D2] on an image of given shape.

    D1 collects horizontal differences (row by row), D2 vertical ones, both
    flattened in C order; the output is their concatenation.
    """

    def __init__(self, shape):
        r, c = int(shape[0]), int(shape[1])
        if r < 1 or c < 1:
            raise ValueError("image shape must be positive")
        self.shape = (r, c)
        self._mh = r * (c - 1)
        super().__init__(self._mh + (r - 1) * c, r * c)

    def _forward(self, x):
        img = x.reshape(self.shape)
        return np.concatenate([diff_h(img).ravel(), diff_v(img).ravel()])

    def _adjoint(self, y):
        r, c = self.shape
        p = y[: self._mh].reshape(r, c - 1)
        q = y[self._mh :].reshape(r - 1, c)
        return (diff_h_adjoint(p, self.shape) + diff_v_adjoint(q, self.shape)).ravel()


# ---------------------------------------------------------------------------
# parallel-beam strip-integral tomography
# ---------------------------------------------------------------------------

def _footprint_integral(t: np.ndarray, a: float, b: float) -> np.ndarray:
    """Integral from -inf to t of the unit-mass detector footprint of one pixel.

    The projection of a unit square onto the detector axis at an angle with
    direction cosines (a, b) = (|cos|, |sin|) is a trapezoid: the convolution
    of two boxes of widths a and b.  Its exact integral gives exact
    pixel-strip overlap areas.
    """
    lo, hi = (a, b) if a <= b else (b, a)
    half_support = 0.5 * (a + b)
    half_top = 0.5 * (hi - lo)
    if lo <= 1e-12:
        # axis-aligned ray: footprint is a box of width hi
        return np.clip(t + half_support, 0.0, 2.0 * half_support) / hi
    out = np.zeros_like(t)
    rise = np.clip(t + half_support, 0.0, lo)
    out += 0.5 * rise * rise / lo
    flat = np.clip(t + half_top, 0.0, 2.0 * half_top)
    out += flat
    fall = np.clip(t - half_top, 0.0, lo)
    out += fall - 0.5 * fall * fall / lo
    return out / hi


def build_projector(side: int, n_angles: int, span_degrees: float, n_radial: int) -> MatrixMap:
    """Parallel strip-integral projector for a square ``side`` x ``side`` image.

    Angles are spaced uniformly over ``span_degrees`` starting at 0
    (endpoint excluded).  Detector bins have unit width (equal to the pixel
    pitch) and are centered on the image.  Each matrix entry is the exact
    overlap area between a pixel and a detector strip, so a single angle at
    0 degrees with ``n_radial == side`` reproduces column sums exactly.

    Returns the projector as a sparse-backed :class:`MatrixMap` with
    nonnegative entries; rows are ordered angle-major
    (bin index = angle * n_radial + radial).
    """
    side, n_angles, n_radial = int(side), int(n_angles), int(n_radial)
    if side < 1 or n_angles < 1 or n_radial < 1:
        raise ValueError("side, n_angles and n_radial must be positive")
    if span_degrees <= 0 or span_degrees > 360:
        raise ValueError("span_degrees must lie in (0, 360]")
    c = np.arange(side) + 0.5 - 0.5 * side
    x = np.tile(c, side)       # column offsets, row-major pixel order
    y = np.repeat(c, side)     # row offsets
    angles = np.deg2rad(span_degrees) * np.arange(n_angles) / n_angles
    edge0 = -0.5 * n_radial
    rows, cols, vals = [], [], []
    pixel_index = np.arange(side * side)
    for ia, theta in enumerate(angles):
        ct, st = np.cos(theta), np.sin(theta)
        a, b = abs(ct), abs(st)
        u = x * ct + y * st
        half_support = 0.5 * (a + b)
        k0 = np.floor(u - half_support - edge0).astype(int)
        for off in range(3):
            k = k0 + off
            t_lo = (edge0 + k) - u
            w = _footprint_integral(t_lo + 1.0, a, b) - _footprint_integral(t_lo, a, b)
            keep = (k >= 0) & (k < n_radial) & (w > 1e-14)
            if np.any(keep):
                rows.append(ia * n_radial + k[keep])
                cols.append(pixel_index[keep])
                vals.append(w[keep])
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_angles * n_radial, side * side),
    ).tocsr()
    return MatrixMap(mat)


class TomographyModel(LinearMap):
    """Attenuated emission projector A = diag(exp(-R mu)) R.

    Attributes:
        projector: the geometric strip-integral map R.
        attenuation: the attenuation image mu (2-D, nonnegative).
        weights: exp(-R mu), applied to every forward projection.
    """

    def __init__(self, projector: MatrixMap, attenuation: np.ndarray):
        super().__init__(projector.m, projector.n)
        mu = np.asarray(attenuation, dtype=float)
        if mu.size != projector.n:
            raise ValueError("attenuation image does not match projector input size")
        if np.any(mu < 0):
            raise ValueError("attenuation must be nonnegative")
        self.projector = projector
        self.attenuation = mu
        self.weights = np.exp(-projector.forward(mu))

    def _forward(self, x):
        return self.weights * self.projector._forward(x)

    def _adjoint(self, y):
        return self.projector._adjoint(self.weights * y)

    def to_dense(self, max_elements: int = 1 << 22):
        if self.m * self.n > max_elements:
            raise ValueError("dense materialization exceeds the element cap")
        mat = self.projector.matrix
        if sp.issparse(mat):
            return np.asarray(mat.multiply(self.weights[:, None]).todense())
        return self.weights[:, None] * mat


def build_tomography(
    rows: int,
    cols: int,
    n_angles: int,
    span_degrees: float,
    n_radial: int,
    attenuation=None,
) -> TomographyModel:
    """Build an attenuated parallel-beam model for a square image.

    ``attenuation=None`` means no attenuation (all weights 1), in which case
    the composed map coincides with the bare projector.
    """
    if rows != cols:
        raise ValueError(f"tomography expects a square image, got {rows}x{cols}")
    proj = build_projector(rows, n_angles, span_degrees, n_radial)
    if attenuation is None:
        attenuation = np.zeros((rows, cols))
    return TomographyModel(proj, attenuation)


def adjoint_gap(op: LinearMap, n_trials: int = 100, rng=None) -> float:
    """Largest relative inner-product mismatch <Ax, y> vs <x, A'y> over random pairs."""
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(n_trials):
        x = rng.standard_normal(op.n)
        y = rng.standard_normal(op.m)
        ax = op.forward(x)
        aty = op.adjoint(y)
        gap = abs(float(ax @ y) - float(x @ aty))
        denom = float(np.linalg.norm(ax) * np.linalg.norm(y)) + 1.0
        worst = max(worst, gap / denom)
    return worst
