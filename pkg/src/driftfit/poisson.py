"""1-D Poisson equation L_x v = G for ergodic scalar diffusions.

The generator is L_x = f*(x) d/dx + (sigma^2 / 2) d^2/dx^2.  In one
dimension the invariant density has the closed form
pi(x) ~ exp(2 F(x) / sigma^2) with F' = f*, which turns the Poisson
equation into two cumulative quadratures:
    v'(x) = (2 / sigma^2) pi(x)^-1 int_lo^x G pi,
and v follows by integrating v' and centering so that int v dpi = 0.
"""
from __future__ import annotations

import dataclasses

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .models import DriftModelSpec, NoiseSpec, objective_grad

CENTERING_TOL = 1e-6
TAIL_MASS_TOL = 1e-6


class PoissonError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise PoissonError("grid requires lo < hi")
        if self.n < 3:
            raise PoissonError("grid requires n >= 3 nodes")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclasses.dataclass(frozen=True)
class PoissonSolution:
    grid: Grid1D
    v: np.ndarray
    dv_dx: np.ndarray
    residual_sup: float
    centering_correction: float = 0.0


def default_grid(model: DriftModelSpec, noise: NoiseSpec, n: int = 4001) -> Grid1D:
    """[-6 sd, 6 sd] around the stationary mean; Gaussian-tailed mass
    outside six standard deviations is below 1e-8."""
    if model.analytic is not None:
        m2 = float(model.analytic.stationary_second_moment[0])
    else:
        m2 = float(noise.a[0, 0])
    sd = np.sqrt(m2)
    mean = 0.0
    if model.name == "mean_reversion" and model.true_theta is not None:
        mean = float(model.true_theta[1])
        sd = np.sqrt(max(m2 - mean * mean, 1e-12))
    return Grid1D(mean - 6.0 * sd, mean + 6.0 * sd, n)


def _require_scalar(model: DriftModelSpec):
    if model.m != 1:
        raise PoissonError("the Poisson solver is 1-D in x; state dimension "
                           "is %d" % model.m)


def _true_drift_values(model: DriftModelSpec, nodes: np.ndarray) -> np.ndarray:
    return model.true_drift_fn(nodes[:, None])[:, 0]


def stationary_density(model: DriftModelSpec, noise: NoiseSpec,
                       grid: Grid1D) -> np.ndarray:
    """Normalized invariant density on the grid nodes (log-space tails)."""
    _require_scalar(model)
    nodes = grid.nodes
    sig2 = float(noise.a[0, 0])
    fstar = _true_drift_values(model, nodes)
    log_dens = cumulative_trapezoid(2.0 * fstar / sig2, nodes, initial=0.0)
    log_dens -= log_dens.max()
    dens = np.exp(log_dens)
    z = trapezoid(dens, nodes)
    dens /= z
    # tail-mass bound: near a boundary, pi decays ~ exp(2 f* (x - b)/sig2),
    # so the mass beyond b is about pi(b) sig2 / (2 |f*(b)|)
    for edge, f_edge in ((dens[0], fstar[0]), (dens[-1], fstar[-1])):
        if abs(f_edge) < 1e-12:
            raise PoissonError("drift vanishes at the grid boundary; cannot "
                               "bound the truncated tail mass")
        if edge * sig2 / (2.0 * abs(f_edge)) > TAIL_MASS_TOL:
            raise PoissonError("estimated density mass outside the grid "
                               "exceeds %g; widen the grid" % TAIL_MASS_TOL)
    return dens


def solve(model: DriftModelSpec, noise: NoiseSpec, G, grid: Grid1D) -> PoissonSolution:
    """Solve L_x v = G with int G dpi = 0, centered so that int v dpi = 0."""
    _require_scalar(model)
    nodes = grid.nodes
    sig2 = float(noise.a[0, 0])
    dens = stationary_density(model, noise, grid)
    g = np.asarray(G(nodes), dtype=float)
    if g.shape != nodes.shape:
        g = np.array([float(G(xv)) for xv in nodes])
    mean_g = float(trapezoid(g * dens, nodes))
    if abs(mean_g) > CENTERING_TOL:
        raise PoissonError("centering violated: |int G dpi| = %g > %g"
                           % (abs(mean_g), CENTERING_TOL))
    g = g - mean_g
    w = g * dens
    cum = cumulative_trapezoid(w, nodes, initial=0.0)
    # int_lo^x w vanishes at both ends, so for x past the density peak it is
    # a near-cancellation of O(1) partial sums and the accumulated roundoff
    # swamps the tiny tail values that dv divides by.  Integrate the right
    # half from the right boundary instead: int_lo^x w = -int_x^hi w.
    tail = -cumulative_trapezoid(w[::-1], nodes[::-1], initial=0.0)[::-1]
    peak = int(np.argmax(dens))
    cum[peak:] = -tail[peak:]
    dv = (2.0 / sig2) * cum / dens
    v = cumulative_trapezoid(dv, nodes, initial=0.0)
    v = v - float(trapezoid(v * dens, nodes))

    # recorded residual sup over the trusted interior (density not in the
    # deep tail, second derivative by central differences)
    fstar = _true_drift_values(model, nodes)
    d2v = np.gradient(dv, nodes, edge_order=2)
    resid = fstar * dv + 0.5 * sig2 * d2v - g
    trusted = dens > 1e-10 * dens.max()
    trusted[:2] = trusted[-2:] = False
    residual_sup = float(np.abs(resid[trusted]).max()) if trusted.any() else np.inf
    return PoissonSolution(grid=grid, v=v, dv_dx=dv, residual_sup=residual_sup,
                           centering_correction=mean_g)


def gbar_grad_quadrature(model: DriftModelSpec, noise: NoiseSpec,
                         theta: np.ndarray, grid: Grid1D) -> np.ndarray:
    """grad gbar(theta) = int grad_theta g(x, theta) pi(dx) by quadrature."""
    _require_scalar(model)
    nodes = grid.nodes
    dens = stationary_density(model, noise, grid)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    thetas = np.broadcast_to(theta, (grid.n, model.k))
    grads = objective_grad(model, noise, nodes[:, None], thetas)  # (n, k)
    return trapezoid(grads * dens[:, None], nodes, axis=0)


def hbar(model: DriftModelSpec, noise: NoiseSpec, theta=None,
         grid: Grid1D = None) -> np.ndarray:
    """Averaged noise-covariance matrix entering the CLT covariance.

    h_bar = int (grad_theta f A^-1 - grad_x v) A (grad_theta f A^-1 - grad_x v)^T dpi
    with A = sigma sigma^T and v the componentwise Poisson correction for
    G_j = grad_j gbar - grad_j g.  For well-specified models at theta*
    the correction vanishes.
    """
    _require_scalar(model)
    if theta is None:
        if model.true_theta is None:
            raise PoissonError("theta is required when the model has no theta*")
        theta = model.true_theta
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if grid is None:
        grid = default_grid(model, noise)
    nodes = grid.nodes
    dens = stationary_density(model, noise, grid)
    sig2 = float(noise.a[0, 0])
    a_inv = float(noise.a_inv[0, 0])

    thetas = np.broadcast_to(theta, (grid.n, model.k))
    grad_f = model.drift_grad_fn(nodes[:, None], thetas)[:, :, 0]  # (n, k)

    at_star = (model.true_theta is not None
               and np.allclose(theta, model.true_theta, atol=1e-12))
    if at_star:
        dv = np.zeros((grid.n, model.k))
    else:
        grad_g = objective_grad(model, noise, nodes[:, None], thetas)  # (n, k)
        gbar_grad = trapezoid(grad_g * dens[:, None], nodes, axis=0)
        dv = np.empty((grid.n, model.k))
        for j in range(model.k):
            sol = solve(model, noise,
                        lambda xv, j=j, c=gbar_grad[j]:
                        c - np.interp(xv, nodes, grad_g[:, j]),
                        grid)
            dv[:, j] = sol.dv_dx

    amat = grad_f * a_inv - dv  # (n, k)
    integrand = np.einsum("ni,nj->nij", amat, amat) * sig2
    h = trapezoid(integrand * dens[:, None, None], nodes, axis=0)
    return 0.5 * (h + h.T)
