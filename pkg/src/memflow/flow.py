"""Per-mode propagators of the memory heat flow, by three independent routes.

In the eigenbasis the evolution decouples: each mode solves the scalar
integro-differential equation

    y'(t) = -eta y(t) - (M * y)(t) + f(t),   y(0) given,

where * is convolution on [0, t].  Routes implemented:

  * time stepping (trapezoidal convolution quadrature, implicit in the stiff
    -eta y term; the update equation is linear in the new value and solved
    exactly),
  * the integral representation  phi(t) = e^{-eta t} + int_0^t K(t,u) e^{-eta u} du
    with the series kernel K,
  * the order-N decomposition into a smoothing part, an instantaneous
    multiplier part, and a quadrature remainder.

Mode computations are independent (parallel map, no shared mutable state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .kernels import (
    ExpPolyFn,
    TruncationError,
    format_kernel,
    h_coeff,
    kernel_c_norm,
    km_partial,
    p_coeff,
)
from .spectral import SpectralVec

__all__ = [
    "StepSizeError",
    "QuadratureError",
    "RouteMismatchError",
    "volterra_mode",
    "volterra_modes",
    "volterra_influence",
    "kernel_rep_mode",
    "kernel_rep_profile",
    "remainder_RN_mode",
    "remainder_profile",
    "remainder_bound",
    "DecompositionParts",
    "decomposition_mode",
    "first_nonzero_h_index",
    "FlowTable",
    "build_flow_table",
    "flow_apply",
    "flow_table_to_csv",
    "forced_solution",
]

DEFAULT_KM_TRUNCATION = 40
DEFAULT_DECOMP_ORDER = 4


class StepSizeError(ValueError):
    """Explicit predictor would be unstable: eta * dt exceeds 2."""


class QuadratureError(RuntimeError):
    """Quadrature failed to converge; carries the achieved error estimate."""


# ---------------------------------------------------------------------------
# trapezoidal convolution-quadrature time stepping
# ---------------------------------------------------------------------------

def volterra_modes(M, etas, T, n_steps, y0=None, forcing=None):
    """March all modes at once on the uniform grid t_i = i*T/n_steps.

    Parameters
    ----------
    M : ExpPolyFn
        Memory kernel.
    etas : array (J,)
        Mode eigenvalues of the positive operator.
    y0 : array (J,), optional
        Initial coefficients; defaults to all ones (propagator columns).
    forcing : array (n_steps+1, J), optional
        Forcing samples on the grid.

    Returns
    -------
    array (n_steps+1, J) of mode values.
    """
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    dt = T / n_steps
    if np.max(etas) * dt > 2.0:
        raise StepSizeError(
            f"eta*dt = {np.max(etas) * dt:.3g} > 2; refine the grid "
            f"(n_steps >= {int(math.ceil(np.max(etas) * T / 2.0)) + 1})"
        )
    J = len(etas)
    Mv = M.eval(np.arange(n_steps + 1) * dt)
    Mv = np.atleast_1d(np.asarray(Mv, dtype=float))
    y = np.zeros((n_steps + 1, J))
    y[0] = 1.0 if y0 is None else np.asarray(y0, dtype=float)
    f = np.zeros((n_steps + 1, J)) if forcing is None else np.asarray(forcing, dtype=float)

    a_diag = 1.0 + 0.5 * dt * etas + 0.25 * dt * dt * Mv[0]
    decay = 1.0 - 0.5 * dt * etas
    prev_sigma = np.zeros(J)  # sigma_0 with the empty-history convention
    prev_Q = np.zeros(J)      # Q_0 = 0
    for i in range(1, n_steps + 1):
        hist = Mv[i - 1:0:-1] @ y[1:i] if i >= 2 else 0.0
        sigma = dt * (0.5 * Mv[i] * y[0] + hist)
        rhs = decay * y[i - 1] - 0.5 * dt * (prev_Q + sigma) \
            + 0.5 * dt * (f[i - 1] + f[i])
        y[i] = rhs / a_diag
        prev_sigma = sigma
        prev_Q = sigma + 0.5 * dt * Mv[0] * y[i]
    return y


def volterra_mode(M, eta, tgrid, forcing=None, y0=1.0):
    """Single-mode propagator samples on a uniform grid starting at 0.

    ``tgrid`` must be uniform with t_0 = 0; rejects eta*dt > 2.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    dt = tgrid[1] - tgrid[0]
    if tgrid[0] != 0.0 or not np.allclose(np.diff(tgrid), dt):
        raise ValueError("tgrid must be uniform and start at 0")
    n = len(tgrid) - 1
    f = None if forcing is None else np.asarray(forcing, dtype=float).reshape(-1, 1)
    out = volterra_modes(M, [eta], tgrid[-1], n, y0=[y0], forcing=f)
    return out[:, 0]


def volterra_influence(M, etas, T, n_steps):
    """Exact sensitivities g[i, j] = d y_j(T) / d f_j(t_i) of the discrete scheme.

    Computed by back-substitution on the transposed stepping system, so a
    forced run reproduces  y(T) = phi(T) y0 + sum_i g[i] * f[i]  to roundoff.
    """
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    dt = T / n_steps
    if np.max(etas) * dt > 2.0:
        raise StepSizeError("eta*dt > 2; refine the grid")
    J = len(etas)
    n = n_steps
    Mv = np.atleast_1d(np.asarray(M.eval(np.arange(n + 1) * dt), dtype=float))
    a_diag = 1.0 + 0.5 * dt * etas + 0.25 * dt * dt * Mv[0]
    c1 = -(1.0 - 0.5 * dt * etas) + 0.5 * dt * dt * (0.5 * Mv[0] + Mv[1] if n >= 1 else 0.0)
    lam = np.zeros((n + 1, J))
    lam[n] = 1.0 / a_diag
    for i in range(n - 1, 0, -1):
        acc = c1 * lam[i + 1]
        if i + 2 <= n:
            mwin = Mv[1:n - i] + Mv[2:n - i + 1]
            acc = acc + 0.5 * dt * dt * (mwin @ lam[i + 2:n + 1])
        lam[i] = -acc / a_diag
    g = np.zeros((n + 1, J))
    g[0] = 0.5 * dt * lam[1]
    g[1:n] = 0.5 * dt * (lam[1:n] + lam[2:n + 1])
    g[n] = 0.5 * dt * lam[n]
    return g


# ---------------------------------------------------------------------------
# integral representation
# ---------------------------------------------------------------------------

def _gauss_panels(t, n_levels=36, n_gauss=12):
    """Geometrically refined Gauss-Legendre nodes on [0, t].

    The geometric refinement toward 0 resolves boundary layers e^{-eta s}
    for eta up to ~2^n_levels / t with a fixed node set shared by all modes.
    """
    edges = [0.0] + [t * 2.0 ** (-k) for k in range(n_levels - 1, -1, -1)]
    xg, wg = leggauss(n_gauss)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        h = 0.5 * (hi - lo)
        nodes.append(lo + h * (xg + 1.0))
        weights.append(h * wg)
    return np.concatenate(nodes), np.concatenate(weights)


def kernel_rep_profile(M, t, etas, J_max=DEFAULT_KM_TRUNCATION, check_tol=None):
    """phi(t) for an array of modes via the integral representation.

    Shares one set of kernel samples across all modes; the quadrature grid is
    geometrically refined toward u = 0 so the exponential boundary layer of
    every mode is resolved.
    """
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    if t == 0.0:
        return np.ones_like(etas)
    K = km_partial(M, 0, J_max)
    if check_tol is not None:
        bound = K.tail_bound(t, t)
        if bound > check_tol:
            raise TruncationError(
                f"series tail bound {bound:.3e} exceeds {check_tol:.3e} at t={t}"
            )
    s, w = _gauss_panels(t)
    Kv = K.eval(t, s)
    integral = np.exp(-np.outer(etas, s)) @ (w * Kv)
    return np.exp(-etas * t) + integral


def kernel_rep_mode(M, eta, t, J_max=DEFAULT_KM_TRUNCATION, check_tol=None):
    """Single-mode propagator value via adaptive quadrature of the kernel
    representation; truncation failures propagate from the series evaluator."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 1.0
    K = km_partial(M, 0, J_max)
    if check_tol is not None:
        bound = K.tail_bound(t, t)
        if bound > check_tol:
            raise TruncationError(
                f"series tail bound {bound:.3e} exceeds {check_tol:.3e} at t={t}"
            )
    val, _ = quad(
        lambda u: K.eval(t, u) * math.exp(-eta * u),
        0.0,
        t,
        epsabs=1e-12,
        epsrel=1e-11,
        limit=400,
    )
    return math.exp(-eta * t) + val


# ---------------------------------------------------------------------------
# decomposition route
# ---------------------------------------------------------------------------

def remainder_profile(M, t, N, etas, J_max=DEFAULT_KM_TRUNCATION, n_gauss=12):
    """Remainder multiplier values R_N(t, eta) for an array of modes.

    R_N(t, eta) = int_0^t eta e^{-eta s} (d/ds)^N K(t, s) ds, evaluated with a
    geometric-panel Gauss rule sharing kernel samples across modes.
    """
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    if t == 0.0:
        return np.zeros_like(etas)
    K = km_partial(M, N, J_max)
    s, w = _gauss_panels(t, n_gauss=n_gauss)
    Kv = K.eval(t, s)
    return etas * (np.exp(-np.outer(etas, s)) @ (w * Kv))


def remainder_RN_mode(M, eta, t, N, J_max=DEFAULT_KM_TRUNCATION, tol=1e-8):
    """Single-mode remainder value with a convergence check.

    Recomputes at a finer Gauss order; if the two answers differ by more than
    ``tol`` (relative to max(1, |value|)) raise QuadratureError carrying the
    achieved error estimate.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    coarse = float(remainder_profile(M, t, N, [eta], J_max, n_gauss=12)[0])
    fine = float(remainder_profile(M, t, N, [eta], J_max, n_gauss=16)[0])
    err = abs(fine - coarse)
    if err > tol * max(1.0, abs(fine)):
        raise QuadratureError(
            f"remainder quadrature error estimate {err:.3e} exceeds {tol:.3e}"
        )
    return fine


def remainder_bound(M, N, t):
    """A priori bound  e^t {exp[N (1+t) sum_{k<=N} sup|M^(k)|] - 1}  on |R_N(t, .)|."""
    cn = kernel_c_norm(M, N, t)
    return math.exp(t) * (math.exp(N * (1.0 + t) * cn) - 1.0)


@dataclass(frozen=True)
class DecompositionParts:
    """Per-mode split of the propagator into smoothing + multiplier + remainder."""

    heat: float             # e^{-eta t} (1 + sum_l p_l(t) eta^{-l-1})
    wave: float             # sum_l h_l(t) eta^{-l-1}
    remainder_scaled: float  # R_N(t, eta) * eta^{-N-1}
    remainder_value: float   # R_N(t, eta)
    order: int
    total: float


def decomposition_mode(M, eta, t, N=DEFAULT_DECOMP_ORDER, J_max=DEFAULT_KM_TRUNCATION):
    """Order-N decomposition of the mode propagator at time t > 0.

    Refuses t = 0 (the remainder quadrature degenerates there); callers probe
    the t -> 0 limit instead.
    """
    if t <= 0:
        raise ValueError("decomposition_mode requires t > 0")
    if N < 2:
        raise ValueError("N must be >= 2")
    inv_powers = eta ** -(np.arange(N) + 1.0)
    pl = np.array([p_coeff(M, l).eval(t) for l in range(N)])
    hl = np.array([h_coeff(M, l).eval(t) for l in range(N)])
    heat = math.exp(-eta * t) * (1.0 + float(pl @ inv_powers))
    wave = float(hl @ inv_powers)
    R = float(remainder_profile(M, t, N, [eta], J_max)[0])
    scaled = R * eta ** -(N + 1.0)
    return DecompositionParts(
        heat=heat,
        wave=wave,
        remainder_scaled=scaled,
        remainder_value=R,
        order=N,
        total=heat + wave + scaled,
    )


def first_nonzero_h_index(M, T, l_max=10):
    """Smallest l >= 1 with h_l(T) != 0, zeros judged against a derivative-scale
    threshold so exact zeros (e.g. M(T) = 0 makes h_1(T) = 0) are not confused
    with roundoff."""
    if M.is_zero():
        raise ValueError("kernel is identically zero")
    for l in range(1, l_max + 1):
        scale = kernel_c_norm(M, l, T)
        if abs(h_coeff(M, l).eval(T)) > 1e-12 * max(scale, 1e-300):
            return l
    raise RuntimeError(f"no nonzero h_l(T) found for l <= {l_max}")


# ---------------------------------------------------------------------------
# flow tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowTable:
    """Propagator samples phi[j, i] for basis mode j at grid time t_i."""

    basis: object
    tgrid: np.ndarray
    phi: np.ndarray
    method: str
    kernel: str

    def __post_init__(self):
        self.tgrid.setflags(write=False)
        self.phi.setflags(write=False)

    @property
    def dt(self):
        return float(self.tgrid[1] - self.tgrid[0])

    @property
    def T(self):
        return float(self.tgrid[-1])


def _stable_substeps(eta_max, T, n_steps, target=1.9):
    dt = T / n_steps
    return max(1, int(math.ceil(eta_max * dt / target)))


def build_flow_table(M, basis, T, n_steps, method="volterra",
                     N=DEFAULT_DECOMP_ORDER, J_max=DEFAULT_KM_TRUNCATION):
    """Tabulate all mode propagators on the uniform grid over [0, T].

    The time-stepping route automatically substeps so that eta*dt stays under
    the stability guard for every mode, then keeps the requested grid.
    """
    etas = basis.eigenvalues
    tgrid = np.linspace(0.0, T, n_steps + 1)
    if method == "volterra":
        sub = _stable_substeps(float(etas[-1]), T, n_steps)
        fine = volterra_modes(M, etas, T, n_steps * sub)
        phi = fine[::sub].T.copy()
        tag = "volterra"
    elif method == "kernel_rep":
        phi = np.ones((basis.J, n_steps + 1))
        for i, t in enumerate(tgrid[1:], start=1):
            phi[:, i] = kernel_rep_profile(M, t, etas, J_max)
        tag = "kernel_rep"
    elif method == "decomposition":
        inv_powers = etas[:, None] ** -(np.arange(N)[None, :] + 1.0)
        phi = np.ones((basis.J, n_steps + 1))
        for i, t in enumerate(tgrid[1:], start=1):
            pl = np.array([p_coeff(M, l).eval(t) for l in range(N)])
            hl = np.array([h_coeff(M, l).eval(t) for l in range(N)])
            R = remainder_profile(M, t, N, etas, J_max)
            phi[:, i] = (np.exp(-etas * t) * (1.0 + inv_powers @ pl)
                         + inv_powers @ hl + R * etas ** -(N + 1.0))
        tag = f"decomposition({N})"
    else:
        raise ValueError(f"unknown method {method!r}")
    return FlowTable(basis=basis, tgrid=tgrid, phi=phi, method=tag,
                     kernel=format_kernel(M))


def flow_apply(table, t_index, v):
    """Diagonal action of the propagator at grid time index on coefficients."""
    a = v.coeffs if isinstance(v, SpectralVec) else np.asarray(v, dtype=float)
    return SpectralVec(table.phi[: len(a), t_index] * a,
                       s=(v.s if isinstance(v, SpectralVec) else 0.0))


def flow_table_to_csv(table):
    """Render as CSV with header "j, eta_j, t_0...t_n"."""
    n = len(table.tgrid) - 1
    lines = ["j, eta_j, " + ", ".join(f"t_{i}" for i in range(n + 1))]
    for j in range(table.basis.J):
        vals = ", ".join(repr(float(v)) for v in table.phi[j])
        lines.append(f"{j + 1}, {float(table.basis.eigenvalues[j])!r}, {vals}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# forced evolution
# ---------------------------------------------------------------------------

def control_mode_projection(basis, mask):
    """Matrix B[j, ix]: coefficients of the indicator of mask column ix.

    Controls are piecewise constant per raster cell; their spatial profile on
    the basis grid is the cell indicator, projected here once.
    """
    cols = np.clip((basis.x * mask.n_x).astype(int), 0, mask.n_x - 1)
    B = np.zeros((basis.J, mask.n_x))
    wf = basis.funcs * basis.weights  # (J, n_x_basis)
    np.add.at(B.T, cols, wf.T)
    return B


def control_forcing(basis, mask, control, tgrid):
    """Mode forcing samples f[i, j] of a raster control (zero outside the mask)."""
    u = np.where(mask.cells, np.asarray(control, dtype=float), 0.0)
    B = control_mode_projection(basis, mask)
    cell = np.clip((np.asarray(tgrid) / mask.T * mask.n_t).astype(int), 0, mask.n_t - 1)
    return u[cell] @ B.T


class RouteMismatchError(RuntimeError):
    """The two forced-solution routes disagree beyond the requested tolerance."""


def forced_solution(M, basis, y0, control, mask, T, n_steps, checkpoints=16,
                    discrepancy_tol=None):
    """Controlled trajectory, computed twice and cross-checked.

    Route (a) is the forced time stepper; route (b) is the superposition sum
    y(t) = phi(t) y0 + sum_k w_k phi(t - s_k) f(s_k) built from the propagator
    table (trapezoid weights).  Returns the route-(a) coefficient trajectory
    on the requested grid together with the max coefficient-space distance
    between the routes over a checkpoint set; when ``discrepancy_tol`` is
    given, a larger distance raises RouteMismatchError.

    Returns
    -------
    traj : array (n_steps+1, J)
    discrepancy : float
    """
    etas = basis.eigenvalues
    sub = _stable_substeps(float(etas[-1]), T, n_steps)
    nf = n_steps * sub
    tgrid = np.linspace(0.0, T, nf + 1)
    a0 = y0.coeffs if isinstance(y0, SpectralVec) else np.asarray(y0, dtype=float)
    f = control_forcing(basis, mask, control, tgrid)
    fine = volterra_modes(M, etas, T, nf, y0=a0, forcing=f)
    phi = volterra_modes(M, etas, T, nf).T  # (J, nf+1)

    dt = T / nf
    idxs = sorted(set(list(np.linspace(0, nf, checkpoints + 1).astype(int)) + [nf]))
    disc = 0.0
    for i in idxs:
        if i == 0:
            continue
        w = np.full(i + 1, dt)
        w[0] = w[-1] = 0.5 * dt
        duh = phi[:, i] * a0 + np.einsum("k,jk,kj->j", w, phi[:, i::-1], f[: i + 1])
        disc = max(disc, float(np.linalg.norm(fine[i] - duh)))
    if discrepancy_tol is not None and disc > discrepancy_tol:
        raise RouteMismatchError(
            f"forced-solution routes disagree by {disc:.3e} "
            f"(tolerance {discrepancy_tol:.3e})")
    return fine[::sub], disc
