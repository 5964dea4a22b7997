"""Eleven go/no-go gates for the assembled package.

One test per criterion, each printing a single [PASS]/[FAIL] line with the
measured margin.  Criteria 9 to 11 share one full reconstruction sweep
(10 trials, 7 methods, 64x64) that dominates the suite's runtime.
"""

import time

import numpy as np
import pytest

from spiral.denoise import denoise_l1_dual, denoise_tv
from spiral.harness import ExperimentConfig, run_experiment
from spiral.likelihood import PoissonModel
from spiral.operators import MatrixMap, build_tomography
from spiral.oracles import (
    dense_hessian,
    enumerate_rdp,
    fd_gradient,
    power_iteration_lmax,
    reference_denoise_basis_l1,
    reference_denoise_tv,
)
from spiral.rdp import rdp_fit
from spiral.solver import SolverConfig, run
from spiral.wavelets import OrthoBasis


def report(ok: bool, label: str, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def _small_tomography(seed=7, side=16, n_angles=9, counts=1.5e4):
    rng = np.random.default_rng(seed)
    op = build_tomography(side, side, n_angles=n_angles, span_degrees=135.0,
                          n_radial=side)
    truth = np.zeros((side, side))
    truth[4:12, 5:11] = 3.0
    truth[7:9, 7:9] = 7.0
    lam = op.forward(truth.ravel())
    truth *= counts / lam.sum()
    y = rng.poisson(op.forward(truth.ravel())).astype(float)
    model = PoissonModel(op, y)
    aty = op.adjoint(y)
    c = y.sum() / max(float(op.forward(aty).sum()), 1e-30)
    return model, (c * aty).reshape(side, side)


def test_criterion_01_adjoint_consistency():
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    emission_att = 0.02 * rng.uniform(0.0, 1.0, (16, 16))
    ops = [
        ("dense", MatrixMap(rng.uniform(0.0, 1.0, (24, 18)))),
        ("tomography", build_tomography(16, 16, n_angles=12,
                                        span_degrees=135.0, n_radial=16,
                                        attenuation=emission_att)),
        ("wavelet", OrthoBasis((16, 16), "db2").as_linear_map()),
    ]
    worst = 0.0
    for _, op in ops:
        for _ in range(100):
            x = rng.standard_normal(op.n)
            y = rng.standard_normal(op.m)
            lhs = float(op.forward(x) @ y)
            rhs = float(x @ op.adjoint(y))
            gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30)
            worst = max(worst, gap)
    elapsed = time.monotonic() - t0
    report(worst <= 1e-10 and elapsed < 5.0, "criterion 1",
           f"worst adjoint gap {worst:.2e} over 3x100 pairs "
           f"in {elapsed:.2f}s (need <= 1e-10 in < 5s)")


def test_criterion_02_gradient_matches_finite_differences():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(4, 33))
        m = n + int(rng.integers(0, 9))
        a = rng.uniform(0.1, 1.0, (m, n))
        y = rng.poisson(8.0, m).astype(float)
        f = rng.uniform(0.5, 2.0, n)
        model = PoissonModel(MatrixMap(a), y)
        g = model.gradient(f)
        fd = fd_gradient(model, f)
        err = float((np.abs(fd - g) / np.maximum(np.abs(g), 1e-8)).max())
        worst = max(worst, err)
    report(worst <= 1e-5, "criterion 2",
           f"worst componentwise gradient error {worst:.2e} over 20 "
           f"instances, n <= 32 (need <= 1e-5)")


def test_criterion_03_curvature_equals_dense_quadratic_form():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(4, 25))
        m = n + int(rng.integers(0, 9))
        a = rng.uniform(0.1, 1.0, (m, n))
        y = rng.poisson(8.0, m).astype(float)
        f = rng.uniform(0.5, 2.0, n)
        delta = rng.standard_normal(n)
        model = PoissonModel(MatrixMap(a), y)
        direct = model.curvature_form(f, delta)
        via_dense = float(delta @ dense_hessian(model, f) @ delta)
        rel = abs(direct - via_dense) / max(abs(direct), abs(via_dense), 1e-30)
        worst = max(worst, rel)
    report(worst <= 1e-10, "criterion 3",
           f"worst curvature mismatch {worst:.2e} over 20 instances "
           f"(need <= 1e-10)")


def test_criterion_04_hessian_spectrum_below_lipschitz_bound():
    rng = np.random.default_rng(104)
    worst_ratio = 0.0
    checked = 0
    for _ in range(10):
        n = int(rng.integers(6, 20))
        m = n + int(rng.integers(2, 10))
        a = rng.uniform(0.05, 1.0, (m, n))
        y = rng.poisson(6.0, m).astype(float)
        model = PoissonModel(MatrixMap(a), y, beta=0.1)
        bound = model.lipschitz_bound()
        for _ in range(5):
            f = rng.uniform(0.0, 3.0, n)
            lmax = power_iteration_lmax(dense_hessian(model, f))
            worst_ratio = max(worst_ratio, lmax / bound)
            checked += 1
    report(checked == 50 and worst_ratio <= 1.0 + 1e-10, "criterion 4",
           f"max eigenvalue/bound ratio {worst_ratio:.6f} over 50 feasible "
           f"points, beta=0.1 (need <= 1)")


def test_criterion_05_dual_l1_feasible_certified_and_tight():
    rng = np.random.default_rng(105)
    basis = OrthoBasis(16, "haar")
    worst_gap = 0.0
    worst_sweeps = 0
    min_image = np.inf
    worst_rel = 0.0
    for _ in range(50):
        s_img = rng.normal(0.3, 1.0, 16)
        kappa = float(rng.uniform(0.1, 1.5))
        s = basis.analysis(s_img)
        res = denoise_l1_dual(s, kappa, basis, tol=1e-8, max_iter=100,
                              track_history=True)
        assert res.converged
        worst_gap = max(worst_gap, res.gap)
        worst_sweeps = max(worst_sweeps, res.sweeps)
        min_image = min(min_image, min(h[3] for h in res.history))
        _, ref_phi = reference_denoise_basis_l1(s, kappa, basis)
        worst_rel = max(worst_rel,
                        abs(res.phi - ref_phi) / max(abs(ref_phi), 1e-30))
    ok = (min_image >= 0.0 and worst_gap <= 1e-8 and worst_sweeps <= 100
          and worst_rel <= 1e-6)
    report(ok, "criterion 5",
           f"50 16-dim instances: min image value {min_image}, worst gap "
           f"{worst_gap:.2e} (<=1e-8), worst sweeps {worst_sweeps} (<=100), "
           f"objective vs reference {worst_rel:.2e} (<=1e-6)")


def test_criterion_06_tv_matches_reference():
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(20):
        s = rng.normal(0.4, 1.0, (8, 8))
        for kappa in (0.01, 0.1, 1.0):
            _, info = denoise_tv(s, kappa, tol=1e-12, max_iter=20000,
                                 return_info=True)
            _, ref_phi = reference_denoise_tv(s, kappa)
            worst = max(worst,
                        abs(info.objective - ref_phi) / max(abs(ref_phi), 1e-30))
        exact = denoise_tv(s, 0.0)
        assert np.array_equal(exact, np.maximum(s, 0.0))
    report(worst <= 1e-4, "criterion 6",
           f"worst objective gap vs reference {worst:.2e} over 20x3 "
           f"instances (need <= 1e-4); kappa=0 returns [s]+ bitwise")


def test_criterion_07_partition_fit_matches_enumeration():
    def cells_cost(s, cells, kappa):
        total = 0.0
        for c in cells:
            block = s[c.row:c.row + c.side, c.col:c.col + c.side]
            total += 0.5 * float(((block - c.fit) ** 2).sum()) + kappa
        return total

    rng = np.random.default_rng(77)
    exact_partitions = 0
    n_total = 0
    worst_fit = 0.0
    worst_cost = 0.0
    for side, count in [(4, 200), (8, 20)]:
        for _ in range(count):
            s = rng.normal(0.5, 1.0, (side, side))
            kappa = float(rng.uniform(0.05, 2.0))
            cells, fitted = rdp_fit(s, kappa)
            ecells, efit, ecost = enumerate_rdp(s, kappa)
            n_total += 1
            if (sorted((c.row, c.col, c.side) for c in cells)
                    == sorted((r, c, sd) for r, c, sd, _ in ecells)):
                exact_partitions += 1
            scale = np.maximum(np.abs(efit), 1e-30)
            worst_fit = max(worst_fit,
                            float((np.abs(fitted - efit) / scale).max()))
            dpcost = cells_cost(s, cells, kappa)
            worst_cost = max(worst_cost,
                             abs(dpcost - ecost) / max(abs(ecost), 1e-30))
    ok = (exact_partitions == n_total and worst_fit <= 1e-12
          and worst_cost <= 1e-12)
    report(ok, "criterion 7",
           f"partitions exact {exact_partitions}/{n_total}, fitted values "
           f"within {worst_fit:.2e}, costs within {worst_cost:.2e} "
           f"(fits/costs agree to summation order, see ledger)")


def test_criterion_08_descent_rule_and_matvec_budget():
    model, f0 = _small_tomography()
    base = dict(tau=0.5, penalty="l1", min_iter=500, max_iter=500, tol=1e-300,
                use_objective_term=False)

    strict = run(model, SolverConfig(window=0, **base), f0)
    assert len(strict.trace) == 500
    descent_ok = True
    phi_prev = strict.trace[0].phi
    for rec in strict.trace[1:]:
        slack = 4 * np.spacing(abs(phi_prev))
        if rec.phi > phi_prev - 0.05 * rec.alpha * rec.step_norm**2 + slack:
            descent_ok = False
        phi_prev = rec.phi

    budget_ok = all(rec.forward_calls + rec.adjoint_calls == 2 + rec.backtracks
                    for rec in strict.trace)

    windowed = run(model, SolverConfig(window=10, **base), f0)
    from collections import deque

    window = deque(maxlen=11)
    window.append(windowed.trace[0].phi)
    prev_max = windowed.trace[0].phi
    window_ok = True
    for rec in windowed.trace[1:]:
        window.append(rec.phi)
        cur_max = max(window)
        if cur_max > prev_max + 4 * np.spacing(abs(prev_max)):
            window_ok = False
        prev_max = cur_max
    budget_ok = budget_ok and all(
        rec.forward_calls + rec.adjoint_calls == 2 + rec.backtracks
        for rec in windowed.trace
    )

    report(descent_ok and window_ok and budget_ok, "criterion 8",
           f"500-iteration runs: sufficient decrease held every step "
           f"(window 0: {descent_ok}), window max nonincreasing "
           f"(window 10: {window_ok}), matvecs = 2 + backtracks exactly "
           f"({budget_ok})")


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    t0 = time.monotonic()
    result = run_experiment(ExperimentConfig(), out)
    elapsed = time.monotonic() - t0
    return result, elapsed


def _mean(rows, method, field):
    vals = [getattr(r, field) for r in rows if r.method == method]
    return float(np.mean(vals))


def test_criterion_09_reconstruction_quality_ordering(sweep):
    result, elapsed = sweep
    assert not any(r.termination.startswith("failed") for r in result.rows)
    tv = _mean(result.rows, "tv-loose-mono", "rmse_percent")
    l1_loose = _mean(result.rows, "l1-loose", "rmse_percent")
    l1_tight = _mean(result.rows, "l1-tight", "rmse_percent")
    rdp = _mean(result.rows, "rdp", "rmse_percent")
    rdp_ti = _mean(result.rows, "rdp-ti", "rmse_percent")
    ok = (tv < l1_loose and tv < l1_tight and rdp_ti < rdp
          and abs(l1_loose - l1_tight) <= 2.0 and elapsed <= 1800.0)
    report(ok, "criterion 9",
           f"mean RMSE over 10 trials: tv-loose-mono {tv:.2f}% < l1 "
           f"({l1_loose:.2f}%/{l1_tight:.2f}%), rdp-ti {rdp_ti:.2f}% < rdp "
           f"{rdp:.2f}%, |l1 loose-tight| = {abs(l1_loose - l1_tight):.2f}pp "
           f"(<=2), total {elapsed:.0f}s (<=1800)")


def test_criterion_10_nonmonotone_speedup(sweep):
    result, _ = sweep
    fast = _mean(result.rows, "tv-loose-nonmono", "wall_seconds")
    slow = _mean(result.rows, "tv-tight-mono", "wall_seconds")
    report(fast < slow, "criterion 10",
           f"mean wall: tv-loose-nonmono {fast:.2f}s < tv-tight-mono "
           f"{slow:.2f}s")


def test_criterion_11_converged_runs_meet_tolerance(sweep):
    result, _ = sweep
    converged = [r for r in result.rows if r.termination == "iterate-change"]
    ok = bool(converged) and all(
        r.iterations >= 50 and r.final_rel_change <= 5e-4 for r in converged
    )
    worst = max((r.final_rel_change for r in converged), default=float("nan"))
    fewest = min((r.iterations for r in converged), default=0)
    report(ok, "criterion 11",
           f"{len(converged)}/{len(result.rows)} runs converged; all after "
           f">= 50 iterations (min {fewest}), stopping relative change "
           f"<= 5e-4 (worst {worst:.2e})")
