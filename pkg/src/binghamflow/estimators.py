"""
Residual a posteriori machinery: elementwise projection of the
regularised stress onto linear tensors, local indicators with interior,
edge-jump, oscillation, and divergence parts, global totals, the closed
form graph-approximation bound, and the two marking strategies.
"""

from dataclasses import dataclass

import numpy as np

from .rheology import mu_n, s_star
from .spaces import pressure_gradient, velocity_gradient_at_qp
from .forms import convection_apply

# inverse of the P1 barycentric element mass matrix, times the element area
_P1_MASS_INV = 3.0 * np.array([
    [3.0, -1.0, -1.0],
    [-1.0, 3.0, -1.0],
    [-1.0, -1.0, 3.0],
])


@dataclass
class ProjectedStress:
    """Elementwise linear symmetric tensor: coeffs[cell, vertex, (xx, xy, yy)]."""
    coeffs: np.ndarray

    def at_quadrature(self, space):
        """Samples (C, nq, 3) at the space's quadrature points."""
        return np.einsum("cik,iq->cqk", self.coeffs, space.p1val)

    def divergence(self, space):
        """Per-cell constant divergence vector (C, 2)."""
        g = space.grad_p1
        div = np.empty((self.coeffs.shape[0], 2))
        div[:, 0] = (self.coeffs[..., 0] * g[..., 0]
                     + self.coeffs[..., 1] * g[..., 1]).sum(axis=1)
        div[:, 1] = (self.coeffs[..., 1] * g[..., 0]
                     + self.coeffs[..., 2] * g[..., 1]).sum(axis=1)
        return div


@dataclass
class IndicatorField:
    """Per-element indicators and their totals."""
    eta_pde: np.ndarray
    eta_ic: np.ndarray
    E_pde: float = 0.0
    E_ic: float = 0.0
    E: float = 0.0

    def __post_init__(self):
        self.E_pde = float(self.eta_pde.sum())
        self.E_ic = float(self.eta_ic.sum())
        self.E = self.E_pde + self.E_ic

    @property
    def per_element(self):
        return self.eta_pde + self.eta_ic


def _stress_samples(space, law, U):
    """Regularised stress at quadrature points as (C, nq, 3) components."""
    grad = velocity_gradient_at_qp(space, U)
    dxx = grad[..., 0, 0]
    dyy = grad[..., 1, 1]
    dxy = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
    mu = mu_n(law, dxx * dxx + 2.0 * dxy * dxy + dyy * dyy)
    return np.stack([mu * dxx, mu * dxy, mu * dyy], axis=-1)


def _project_samples(space, samples):
    """Elementwise L2 projection of quadrature samples onto P1, per component."""
    rhs = np.einsum("cq,cqk,iq->cik", space.qw_phys, samples, space.p1val)
    coeffs = np.einsum("ij,cjk->cik", _P1_MASS_INV, rhs) / space.areas[:, None, None]
    return ProjectedStress(coeffs)


def project_pi_n(space, law, U):
    """
    Elementwise L2 projection of the regularised stress onto linear
    symmetric tensors; orthogonality holds against every linear tensor
    on every element.
    """
    return _project_samples(space, _stress_samples(space, law, U))


def element_indicators(space, law, U, P, f, include_convection=False,
                       edge_jump_mode="halved"):
    """
    Squared local indicators of the momentum and incompressibility
    residuals. The interior part measures the strong residual scaled by
    h_K = sqrt(area), the edge part the normal jump of the projected
    stress minus the pressure, halved between the two elements sharing
    an interior edge ("halved") or counted fully on both ("double"),
    and the projection defect is added elementwise. Boundary edges
    contribute nothing.
    """
    if edge_jump_mode not in ("halved", "double"):
        raise ValueError("edge_jump_mode must be 'halved' or 'double'")
    mesh = space.mesh
    C = mesh.num_cells
    S = _stress_samples(space, law, U)
    proj = _project_samples(space, S)

    # interior strong residual at quadrature points
    r = -proj.divergence(space)[:, None, :] + pressure_gradient(space, P)[:, None, :]
    fq = np.asarray(f(space.qp_phys[..., 0], space.qp_phys[..., 1]), dtype=float)
    r = r - np.moveaxis(fq, 0, -1)
    if include_convection:
        r = r + convection_apply(space, U, "strong_form_at_quadrature")
    eta_int = space.areas * (space.qw_phys * (r ** 2).sum(axis=2)).sum(axis=1)

    # elementwise projection defect in the Frobenius norm
    d = S - proj.at_quadrature(space)
    frob = d[..., 0] ** 2 + 2.0 * d[..., 1] ** 2 + d[..., 2] ** 2
    eta_osc = (space.qw_phys * frob).sum(axis=1)

    # normal jumps of (projected stress - P I) over interior edges
    eta_edge = np.zeros(C)
    interior = np.flatnonzero(mesh.edge_counts == 2)
    if interior.size:
        Tc = proj.coeffs.copy()
        Pn = P[mesh.cells]
        Tc[..., 0] -= Pn
        Tc[..., 2] -= Pn
        ev = mesh.edges[interior]
        cells_adj = mesh.edge_cells[interior]
        vals = []
        for side in (0, 1):
            c = cells_adj[:, side]
            loc_a = np.argmax(mesh.cells[c] == ev[:, 0:1], axis=1)
            loc_b = np.argmax(mesh.cells[c] == ev[:, 1:2], axis=1)
            vals.append((Tc[c, loc_a], Tc[c, loc_b]))
        Ja = vals[0][0] - vals[1][0]
        Jb = vals[0][1] - vals[1][1]
        t = mesh.vertices[ev[:, 1]] - mesh.vertices[ev[:, 0]]
        he = np.sqrt((t ** 2).sum(axis=1))
        n = np.stack([t[:, 1], -t[:, 0]], axis=1) / he[:, None]
        J0 = np.stack([Ja[:, 0] * n[:, 0] + Ja[:, 1] * n[:, 1],
                       Ja[:, 1] * n[:, 0] + Ja[:, 2] * n[:, 1]], axis=1)
        J1 = np.stack([Jb[:, 0] * n[:, 0] + Jb[:, 1] * n[:, 1],
                       Jb[:, 1] * n[:, 0] + Jb[:, 2] * n[:, 1]], axis=1)
        line = ((J0 * J0).sum(axis=1) + (J0 * J1).sum(axis=1)
                + (J1 * J1).sum(axis=1)) / 3.0
        contrib = he * he * line
        if edge_jump_mode == "halved":
            contrib = 0.5 * contrib
        np.add.at(eta_edge, cells_adj[:, 0], contrib)
        np.add.at(eta_edge, cells_adj[:, 1], contrib)

    grad = velocity_gradient_at_qp(space, U)
    div = grad[..., 0, 0] + grad[..., 1, 1]
    eta_ic = (space.qw_phys * div ** 2).sum(axis=1)

    return IndicatorField(eta_pde=eta_int + eta_edge + eta_osc, eta_ic=eta_ic)


def global_estimator(ind):
    """Totals (E_pde, E_ic, E) of an indicator field."""
    return ind.E_pde, ind.E_ic, ind.E


def mark_doerfler(ind, theta):
    """
    Greedy bulk-chasing set: smallest collection of cells, indicators
    descending with ties at lower index first, whose indicator sum
    reaches theta times the total. Empty when everything is zero.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    eta = ind.per_element
    total = eta.sum()
    if total <= 0.0:
        return np.array([], dtype=int)
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(eta[order])
    k = int(np.searchsorted(csum, theta * total - 1e-14 * total)) + 1
    marked = order[:k]
    return np.sort(marked)


def mark_maximum(ind, theta_max):
    """Cells whose indicator reaches theta_max times the largest one."""
    if not 0.0 < theta_max <= 1.0:
        raise ValueError("theta_max must be in (0, 1]")
    eta = ind.per_element
    top = eta.max() if eta.size else 0.0
    if top <= 0.0:
        return np.array([], dtype=int)
    return np.flatnonzero(eta >= theta_max * top - 1e-14 * top)


def graph_distance_diagnostic(space, law, U):
    """
    Quadrature value of the squared stress distance between the
    regularised and the ideal constitutive response at the current
    velocity. Diagnostic only; the adaptive loop uses the closed-form
    bound.
    """
    grad = velocity_gradient_at_qp(space, U)
    D = np.empty(grad.shape[:2] + (2, 2))
    D[..., 0, 0] = grad[..., 0, 0]
    D[..., 1, 1] = grad[..., 1, 1]
    D[..., 0, 1] = D[..., 1, 0] = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
    Sn = _tensor_from_samples(space, law, U)
    Ss = s_star(law, D)
    frob = ((Sn - Ss) ** 2).sum(axis=(-2, -1))
    return float((space.qw_phys * frob).sum())


def _tensor_from_samples(space, law, U):
    s3 = _stress_samples(space, law, U)
    out = np.empty(s3.shape[:2] + (2, 2))
    out[..., 0, 0] = s3[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = s3[..., 1]
    out[..., 1, 1] = s3[..., 2]
    return out


def indicators_to_csv(ind, path):
    """Write cell,eta_pde,eta_ic rows for offline inspection."""
    with open(path, "w") as fh:
        fh.write("cell,eta_pde,eta_ic\n")
        for k in range(ind.eta_pde.size):
            fh.write("{},{:.12e},{:.12e}\n".format(
                k, ind.eta_pde[k], ind.eta_ic[k]))
