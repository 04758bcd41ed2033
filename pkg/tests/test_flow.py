import math

import numpy as np
import pytest

from memflow.flow import (
    DecompositionParts,
    FlowTable,
    StepSizeError,
    build_flow_table,
    decomposition_mode,
    first_nonzero_h_index,
    flow_apply,
    flow_table_to_csv,
    forced_solution,
    kernel_rep_mode,
    kernel_rep_profile,
    remainder_RN_mode,
    remainder_bound,
    remainder_profile,
    volterra_influence,
    volterra_mode,
    volterra_modes,
)
from memflow.geometry import cylinder_mask, zigzag_mask
from memflow.kernels import ExpPolyFn, h_coeff, parse_kernel
from memflow.spectral import SpectralVec, interval_basis

ETA1 = math.pi**2


def tgrid(T=1.0, n=1000):
    return np.linspace(0.0, T, n + 1)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def test_pure_heat_mode():
    y = volterra_mode(ExpPolyFn.zero(), ETA1, tgrid())
    assert y[100] == pytest.approx(math.exp(-0.1 * ETA1), abs=5e-6)


def test_initial_condition(kernels4):
    for M in kernels4.values():
        y = volterra_mode(M, ETA1, tgrid(n=100))
        assert y[0] == 1.0


def test_step_size_rejection():
    with pytest.raises(StepSizeError):
        volterra_mode(ExpPolyFn.zero(), 1e4, tgrid(n=100))


def test_tgrid_validation():
    with pytest.raises(ValueError):
        volterra_mode(ExpPolyFn.zero(), 1.0, np.array([0.1, 0.2, 0.3]))


def test_entries_bounded(kernels4):
    for M in kernels4.values():
        y = volterra_modes(M, interval_basis(6, 24).eigenvalues, 2.0, 2500)
        assert np.all(np.isfinite(y))
        assert np.abs(y).max() < 10.0


# ---------------------------------------------------------------------------
# kernel representation
# ---------------------------------------------------------------------------

def test_kernel_rep_t_zero(kernels4):
    for M in kernels4.values():
        assert kernel_rep_mode(M, ETA1, 0.0) == 1.0


def test_kernel_rep_no_memory():
    assert kernel_rep_mode(ExpPolyFn.zero(), ETA1, 0.5) == pytest.approx(
        math.exp(-0.5 * ETA1), rel=1e-12)


def test_kernel_rep_profile_matches_scalar(kernels4):
    etas = interval_basis(4, 16).eigenvalues
    for M in kernels4.values():
        prof = kernel_rep_profile(M, 0.8, etas)
        for j, eta in enumerate(etas):
            assert prof[j] == pytest.approx(kernel_rep_mode(M, float(eta), 0.8),
                                            abs=1e-10)


def test_volterra_vs_kernel_rep():
    M = parse_kernel("1")
    y = volterra_mode(M, ETA1, tgrid())
    v = kernel_rep_mode(M, ETA1, 0.5)
    assert abs(y[500] - v) <= max(1e-6, ETA1**2 * 1e-6 / 20.0)


def test_volterra_vs_kernel_rep_memory_exp():
    M = parse_kernel("exp(-1*t)")
    y = volterra_mode(M, ETA1, tgrid())
    v = kernel_rep_mode(M, ETA1, 1.0)
    assert abs(y[-1] - v) <= max(1e-6, ETA1**2 * 1e-6 / 20.0)


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

def test_decomposition_refuses_t_zero():
    with pytest.raises(ValueError):
        decomposition_mode(parse_kernel("1"), ETA1, 0.0)
    with pytest.raises(ValueError):
        decomposition_mode(parse_kernel("1"), ETA1, 0.5, N=1)


def test_decomposition_wave_part_order_two():
    M = parse_kernel("1")
    d = decomposition_mode(M, ETA1, 0.5, N=2)
    assert d.wave == pytest.approx(-M.eval(0.5) / ETA1**2, rel=1e-12)


def test_decomposition_small_time_limit(kernels4):
    for M in kernels4.values():
        d = decomposition_mode(M, ETA1, 1e-5, N=4)
        assert d.total == pytest.approx(1.0, abs=1e-4)
        d2 = decomposition_mode(M, ETA1, 1e-7, N=4)
        assert d2.total == pytest.approx(1.0, abs=1e-6)


def test_decomposition_vs_volterra_sin():
    M = parse_kernel("sin(1*t)")
    eta = (2 * math.pi) ** 2
    n = 4000  # eta*dt stability
    y = volterra_mode(M, eta, tgrid(n=n))
    d = decomposition_mode(M, eta, 0.75, N=4)
    i = int(round(0.75 * n))
    assert abs(y[i] - d.total) <= max(1e-6, eta**2 * (1.0 / n) ** 2 / 20.0)


def test_residual_identity(kernels4):
    # (flow - heat - wave) * eta^(N+1) = remainder multiplier
    for M in kernels4.values():
        d = decomposition_mode(M, ETA1, 0.5, N=2)
        flow = kernel_rep_mode(M, ETA1, 0.5)
        resid = (flow - d.heat - d.wave) * ETA1**3
        assert resid == pytest.approx(d.remainder_value, rel=1e-6, abs=1e-8)


def test_remainder_t_zero(kernels4):
    for M in kernels4.values():
        assert remainder_profile(M, 0.0, 2, [ETA1])[0] == 0.0


def test_remainder_bound_holds(kernels4):
    etas = interval_basis(32, 128).eigenvalues
    ts = np.linspace(0.1, 2.0, 8)
    for M in kernels4.values():
        for N in (2, 3, 4):
            bound = {t: remainder_bound(M, N, float(t)) for t in ts}
            for t in ts:
                R = remainder_profile(M, float(t), N, etas)
                assert np.abs(R).max() <= bound[t]


def test_remainder_mode_convergence_check():
    val = remainder_RN_mode(parse_kernel("1"), ETA1, 0.5, 2)
    assert np.isfinite(val)


def test_remainder_profile_matches_quad():
    from scipy.integrate import quad
    from memflow.kernels import km_partial
    M = parse_kernel("exp(-1*t)")
    K = km_partial(M, 2, 40)
    t, eta = 0.9, ETA1
    ref, _ = quad(lambda s: eta * math.exp(-eta * s) * K.eval(t, s), 0, t,
                  epsabs=1e-12, epsrel=1e-11, limit=300)
    assert remainder_profile(M, t, 2, [eta])[0] == pytest.approx(ref, rel=1e-9)


def test_wave_leading_term_envelope():
    # |flow(t, eta) + M(t)/eta^2| decays like eta^{-3} across modes
    M = parse_kernel("exp(-1*t)")
    t = 0.5
    etas = interval_basis(32, 128).eigenvalues[3:]
    flow = kernel_rep_profile(M, t, etas)
    resid = np.abs(flow + M.eval(t) / etas**2) * etas**3
    assert resid.max() / resid.min() < 25.0  # flat eta^3-normalized envelope


def test_first_nonzero_h_index(kernels4):
    # kernels that do not vanish at T give index 1
    assert first_nonzero_h_index(kernels4["one"], 1.0) == 1
    assert first_nonzero_h_index(kernels4["exp"], 1.0) == 1
    assert first_nonzero_h_index(kernels4["texp"], 1.0) == 1
    # sin vanishes at pi; the next coefficient takes over
    assert first_nonzero_h_index(kernels4["sin"], math.pi) == 2
    assert abs(h_coeff(kernels4["sin"], 2).eval(math.pi)) > 1e-3


def test_first_nonzero_h_rejects_zero_kernel():
    with pytest.raises(ValueError):
        first_nonzero_h_index(ExpPolyFn.zero(), 1.0)


# ---------------------------------------------------------------------------
# flow tables
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def table():
    return build_flow_table(parse_kernel("exp(-1*t)"), interval_basis(6, 24),
                            1.0, 500)


def test_table_initial_identity(table):
    assert np.all(table.phi[:, 0] == 1.0)


def test_table_methods_agree():
    b = interval_basis(3, 12)
    M = parse_kernel("1")
    tv = build_flow_table(M, b, 1.0, 200, method="volterra")
    tk = build_flow_table(M, b, 1.0, 200, method="kernel_rep")
    td = build_flow_table(M, b, 1.0, 200, method="decomposition")
    dt = 1.0 / 200
    tol = np.maximum(1e-6, (b.eigenvalues[:, None] * dt) ** 2 / 20.0)
    assert np.all(np.abs(tv.phi - tk.phi) <= tol)
    assert np.abs(tk.phi - td.phi).max() < 1e-8


def test_table_substeps_high_modes():
    b = interval_basis(16, 64)
    t = build_flow_table(parse_kernel("1"), b, 1.0, 100)  # eta_16 dt >> 2
    assert t.phi.shape == (16, 101)
    assert abs(t.phi[15, 1]) < 1.0


def test_flow_apply_identity_and_linearity(table, rng):
    u = rng.standard_normal(6)
    v = rng.standard_normal(6)
    assert np.allclose(flow_apply(table, 0, SpectralVec(u)).coeffs, u)
    lhs = flow_apply(table, 50, SpectralVec(2 * u + v)).coeffs
    rhs = 2 * flow_apply(table, 50, SpectralVec(u)).coeffs \
        + flow_apply(table, 50, SpectralVec(v)).coeffs
    assert np.allclose(lhs, rhs)


def test_flow_self_adjoint(table, rng):
    u = rng.standard_normal(6)
    v = rng.standard_normal(6)
    phi = table.phi[:, 77]
    assert float(np.dot(phi * u, v)) == pytest.approx(float(np.dot(u, phi * v)),
                                                      rel=1e-14)


def test_table_csv_export(table):
    text = flow_table_to_csv(table)
    lines = text.strip().split("\n")
    assert lines[0].startswith("j, eta_j, t_0")
    assert len(lines) == 7
    first = lines[1].split(", ")
    assert float(first[1]) == pytest.approx(ETA1, rel=1e-12)
    assert float(first[2]) == 1.0


# ---------------------------------------------------------------------------
# forced evolution
# ---------------------------------------------------------------------------

def test_influence_reproduces_forced_run(kernels4, rng):
    etas = interval_basis(4, 16).eigenvalues
    for M in kernels4.values():
        g = volterra_influence(M, etas, 0.7, 300)
        f = rng.standard_normal((301, 4))
        y = volterra_modes(M, etas, 0.7, 300, y0=np.zeros(4), forcing=f)
        pred = np.einsum("ij,ij->j", g, f)
        assert np.abs(y[-1] - pred).max() < 1e-14


def test_forced_solution_zero_control(table):
    b = table.basis
    mask = cylinder_mask(1.0, 50, 32)
    y0 = np.zeros(6)
    y0[0] = 1.0
    traj, disc = forced_solution(parse_kernel("exp(-1*t)"), b, y0,
                                 np.zeros((50, 32)), mask, 1.0, 500)
    assert np.allclose(traj[-1], table.phi[:, -1] * y0, atol=1e-12)
    assert disc < 1e-12


def test_forced_solution_pure_heat_decay():
    b = interval_basis(4, 16)
    mask = cylinder_mask(1.0, 50, 16)
    y0 = np.array([1.0, 0, 0, 0])
    traj, _ = forced_solution(ExpPolyFn.zero(), b, y0, np.zeros((50, 16)),
                              mask, 1.0, 500)
    assert traj[-1][0] == pytest.approx(math.exp(-ETA1), abs=1e-5)


def test_forced_solution_two_route_agreement(rng):
    b = interval_basis(6, 32)
    mask = zigzag_mask(0.2, 1.0, 50, 32)
    u = rng.standard_normal((50, 32))
    y0 = rng.standard_normal(6)
    traj, disc = forced_solution(parse_kernel("exp(-1*t)"), b, y0, u, mask,
                                 1.0, 1000)
    assert disc <= max(1e-5, 20.0 * (1.0 / 1000) ** 2)


def test_forced_solution_control_outside_mask_ignored(rng):
    b = interval_basis(4, 16)
    mask = cylinder_mask(1.0, 40, 16, x_lo=0.0, x_hi=0.5)
    u = rng.standard_normal((40, 16))
    u_masked = np.where(mask.cells, u, 0.0)
    y0 = rng.standard_normal(4)
    t1, _ = forced_solution(parse_kernel("1"), b, y0, u, mask, 1.0, 400)
    t2, _ = forced_solution(parse_kernel("1"), b, y0, u_masked, mask, 1.0, 400)
    assert np.array_equal(t1, t2)


def test_volterra_second_order_convergence():
    M = parse_kernel("exp(-1*t)")
    ref = kernel_rep_mode(M, ETA1, 1.0)
    errs = []
    for n in (250, 500, 1000):
        y = volterra_mode(M, ETA1, tgrid(n=n))
        errs.append(abs(y[-1] - ref))
    order1 = math.log2(errs[0] / errs[1])
    order2 = math.log2(errs[1] / errs[2])
    assert order1 > 1.9 and order2 > 1.9
