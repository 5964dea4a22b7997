"""Periodized orthonormal wavelet transforms (Haar and Daubechies families).

Transforms are bound to a fixed 1-D length or 2-D shape whose dimensions are
powers of two.  Analysis and synthesis are exact adjoints and exact inverses
of each other up to floating-point rounding, which is what the duality-based
sparsity subproblem solver relies on.

Daubechies lowpass filters are derived at construction time by spectral
factorization of the binomial half-band polynomial (extremal-phase root
selection), so no coefficient tables are embedded.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .operators import LinearMap

__all__ = ["daubechies_filter", "OrthoBasis", "FAMILIES"]

# family tag -> vanishing moments
FAMILIES = {"haar": 1, "db1": 1}
FAMILIES.update({f"db{p}": p for p in range(2, 9)})


def daubechies_filter(p: int) -> np.ndarray:
    """Lowpass filter (length 2p) of the extremal-phase Daubechies wavelet.

    p = 1 gives Haar.  Filters satisfy sum(h) = sqrt(2) and the double-shift
    orthogonality sum_k h[k] h[k+2j] = delta_j to near machine precision.
    """
    p = int(p)
    if not 1 <= p <= 10:
        raise ValueError("vanishing moments out of supported range [1, 10]")
    if p == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    # P(y) = sum_{k<p} C(p-1+k, k) y^k, the half-band remainder polynomial
    pc = np.array([comb(p - 1 + k, k) for k in range(p)], dtype=float)
    y_roots = np.roots(pc[::-1])
    poly = np.array([1.0 + 0.0j])
    for y in y_roots:
        # y = (2 - z - 1/z)/4 maps each y-root to a reciprocal pair in z
        c = 2.0 - 4.0 * y
        disc = np.sqrt(c * c - 4.0 + 0.0j)
        z1, z2 = 0.5 * (c + disc), 0.5 * (c - disc)
        z = z1 if abs(z1) < 1.0 else z2
        poly = np.convolve(poly, [1.0, -z])
    for _ in range(p):
        poly = np.convolve(poly, [0.5, 0.5])
    h = np.real(poly)
    h *= np.sqrt(2.0) / h.sum()
    # fix orientation: extremal phase concentrates energy at the front
    half = len(h) // 2
    if float(np.sum(h[:half] ** 2)) < float(np.sum(h[half:] ** 2)):
        h = h[::-1]
    return h


def _qmf(h: np.ndarray) -> np.ndarray:
    g = h[::-1].copy()
    g[1::2] *= -1.0
    return g


def _analysis_plan(n: int, taps: int) -> np.ndarray:
    # lo[i] = sum_k h[k] x[(2i + k) mod n], likewise hi with g
    return (2 * np.arange(n // 2)[:, None] + np.arange(taps)[None, :]) % n


def _synthesis_plan(n: int, h: np.ndarray, g: np.ndarray):
    # x[m] = sum over (i, k) with 2i + k = m (mod n) of h[k] lo[i] + g[k] hi[i];
    # each m receives exactly len(h)//2 terms
    taps = len(h)
    srcs = [[] for _ in range(n)]
    wh = [[] for _ in range(n)]
    wg = [[] for _ in range(n)]
    for i in range(n // 2):
        for k in range(taps):
            m = (2 * i + k) % n
            srcs[m].append(i)
            wh[m].append(h[k])
            wg[m].append(g[k])
    return (
        np.array(srcs, dtype=np.intp),
        np.array(wh, dtype=float),
        np.array(wg, dtype=float),
    )


class OrthoBasis:
    """Orthonormal periodized wavelet basis on a fixed signal shape.

    ``synthesis`` maps a coefficient array to a signal (the basis operator W);
    ``analysis`` is both its inverse and its adjoint.  Coefficient arrays use
    the standard in-place pyramid layout and have the same shape as signals.

    Args:
        shape: signal length (int) or 2-D image shape; power-of-two dims.
        family: one of ``haar``, ``db2`` .. ``db8`` (``db1`` is Haar).
        levels: pyramid depth; defaults to the maximum possible.
    """

    def __init__(self, shape, family: str = "haar", levels: int | None = None):
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        shape = tuple(int(s) for s in shape)
        if len(shape) not in (1, 2):
            raise ValueError("shape must be 1-D or 2-D")
        for s in shape:
            if s < 2 or s & (s - 1):
                raise ValueError(f"dimension {s} is not a power of two >= 2")
        if family not in FAMILIES:
            raise ValueError(f"unknown wavelet family {family!r}")
        self.shape = shape
        self.family = family
        self.h = daubechies_filter(FAMILIES[family])
        self.g = _qmf(self.h)
        max_levels = int(min(np.log2(s) for s in shape))
        if levels is None:
            levels = max_levels
        if not 1 <= levels <= max_levels:
            raise ValueError(f"levels must lie in [1, {max_levels}]")
        self.levels = int(levels)
        self.n = int(np.prod(shape))
        lengths = {s >> lv for s in shape for lv in range(self.levels) if (s >> lv) >= 2}
        taps = len(self.h)
        self._aplan = {n: _analysis_plan(n, taps) for n in lengths}
        self._splan = {n: _synthesis_plan(n, self.h, self.g) for n in lengths}

    # -- single-axis steps ---------------------------------------------------

    def _analyze_axis(self, arr: np.ndarray, axis: int) -> np.ndarray:
        arr = np.moveaxis(arr, axis, -1)
        idx = self._aplan[arr.shape[-1]]
        gathered = arr[..., idx]
        out = np.concatenate([gathered @ self.h, gathered @ self.g], axis=-1)
        return np.moveaxis(out, -1, axis)

    def _synthesize_axis(self, arr: np.ndarray, axis: int) -> np.ndarray:
        arr = np.moveaxis(arr, axis, -1)
        n = arr.shape[-1]
        srcs, wh, wg = self._splan[n]
        lo, hi = arr[..., : n // 2], arr[..., n // 2 :]
        out = np.sum(lo[..., srcs] * wh, axis=-1) + np.sum(hi[..., srcs] * wg, axis=-1)
        return np.moveaxis(out, -1, axis)

    # -- full transforms -----------------------------------------------------

    def _coerce(self, x, what: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.size != self.n:
            raise ValueError(f"{what} expects {self.n} entries, got shape {x.shape}")
        return x.reshape(self.shape).copy()

    def analysis(self, signal) -> np.ndarray:
        """Coefficients of ``signal``; adjoint (= inverse) of :meth:`synthesis`."""
        c = self._coerce(signal, "analysis")
        if len(self.shape) == 1:
            n = self.shape[0]
            for _ in range(self.levels):
                c[:n] = self._analyze_axis(c[:n], 0)
                n //= 2
        else:
            r, ccol = self.shape
            for _ in range(self.levels):
                block = c[:r, :ccol]
                block = self._analyze_axis(block, 1)
                block = self._analyze_axis(block, 0)
                c[:r, :ccol] = block
                r //= 2
                ccol //= 2
        return c

    def synthesis(self, coeffs) -> np.ndarray:
        """Signal represented by ``coeffs`` (applies the basis operator W)."""
        c = self._coerce(coeffs, "synthesis")
        if len(self.shape) == 1:
            n = self.shape[0] >> (self.levels - 1)
            for _ in range(self.levels):
                c[:n] = self._synthesize_axis(c[:n], 0)
                n *= 2
        else:
            r = self.shape[0] >> (self.levels - 1)
            ccol = self.shape[1] >> (self.levels - 1)
            for _ in range(self.levels):
                block = c[:r, :ccol]
                block = self._synthesize_axis(block, 0)
                block = self._synthesize_axis(block, 1)
                c[:r, :ccol] = block
                r *= 2
                ccol *= 2
        return c

    def as_linear_map(self) -> LinearMap:
        """The basis as a LinearMap: forward = synthesis, adjoint = analysis."""
        basis = self

        class _BasisMap(LinearMap):
            def _forward(self, x):
                return basis.synthesis(x).ravel()

            def _adjoint(self, y):
                return basis.analysis(y).ravel()

        return _BasisMap(self.n, self.n)
