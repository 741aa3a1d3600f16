"""
Variational forms of the regularised flow problem: the solution-weighted
viscous block, the divergence coupling, the skew convection form, loads,
discrete residuals with their dual norms, and the energy functional that
the secant-weighted iteration descends.
"""

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix, factorize
from .rheology import mu_n
from .spaces import (
    _scatter,
    pressure_at_qp,
    riesz_matrices,
    velocity_at_qp,
    velocity_gradient_at_qp,
)


@dataclass
class SaddleSystem:
    """Assembled blocks of one linear velocity-pressure solve."""
    A: object
    B: object
    rhs: np.ndarray
    mean_weights: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray


@dataclass
class ResidualPair:
    """Velocity-dual and pressure-dual residual coefficient vectors."""
    F_pde: np.ndarray
    F_ic: np.ndarray


def _strain_invariant(space, U):
    """Squared Frobenius norm of the symmetric gradient at quadrature points."""
    grad = velocity_gradient_at_qp(space, U)
    dxx = grad[..., 0, 0]
    dyy = grad[..., 1, 1]
    dxy = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
    return dxx * dxx + 2.0 * dxy * dxy + dyy * dyy


def _weighted_d_blocks(space, wq):
    """Element blocks of the symmetric-gradient form with weight wq (C, nq)."""
    gx = space.grad_p2[..., 0]
    gy = space.grad_p2[..., 1]
    gxx = np.einsum("cq,cqi,cqj->cij", wq, gx, gx, optimize=True)
    gyy = np.einsum("cq,cqi,cqj->cij", wq, gy, gy, optimize=True)
    gxy = np.einsum("cq,cqi,cqj->cij", wq, gy, gx, optimize=True)
    axx = gxx + 0.5 * gyy
    ayy = gyy + 0.5 * gxx
    axy = 0.5 * gxy
    return axx, ayy, axy


def assemble_a_n(space, law, U_prev):
    """
    Viscous block of the fixed-point step: the symmetric-gradient form
    weighted by the secant viscosity evaluated at the previous iterate.
    Symmetric; spectrally between 2*nu and (effective_sigma*n + 2*nu)
    times the plain symmetric-gradient form.
    """
    wq = space.qw_phys * mu_n(law, _strain_invariant(space, U_prev))
    axx, ayy, axy = _weighted_d_blocks(space, wq)
    nn = space.num_nodes
    cells = space.cells_p2
    Axx = _scatter(axx, cells, cells, (nn, nn))
    Ayy = _scatter(ayy, cells, cells, (nn, nn))
    Axy = _scatter(axy, cells, cells, (nn, nn))
    return SparseMatrix(sp.bmat([[Axx, Axy], [Axy.T, Ayy]], format="csr"))


def assemble_b(space):
    """
    Pressure-velocity coupling, rows pressure dofs, columns velocity
    dofs: B[k, j] = -integral of psi_k div phi_j. Cached per space.
    """
    if "Bmat" in space.cache:
        return space.cache["Bmat"]
    gx = space.grad_p2[..., 0]
    gy = space.grad_p2[..., 1]
    psi = space.p1val
    bx = -np.einsum("cq,kq,cqj->ckj", space.qw_phys, psi, gx, optimize=True)
    by = -np.einsum("cq,kq,cqj->ckj", space.qw_phys, psi, gy, optimize=True)
    np_, nn = space.num_pressure_dofs, space.num_nodes
    Bx = _scatter(bx, space.mesh.cells, space.cells_p2, (np_, nn))
    By = _scatter(by, space.mesh.cells, space.cells_p2, (np_, nn))
    B = SparseMatrix(sp.hstack([Bx, By], format="csr"))
    space.cache["Bmat"] = B
    return B


def convection_apply(space, U, mode, V=None, W=None):
    """
    Skew-symmetrised convection built around transport field U.

    mode "trilinear_value": returns the real number
        1/2 * integral of ((U.grad)V).W - ((U.grad)W).V
    for coefficient vectors V, W.
    mode "linearised_matrix": returns the matrix N with
        W^T N V = trilinear value of (U; V, W), transport frozen.
    mode "strong_form_at_quadrature": returns (C, nq, 2) samples of
        (U.grad)U + 1/2 (div U) U.
    """
    Uq = velocity_at_qp(space, U)
    if mode == "trilinear_value":
        gV = velocity_gradient_at_qp(space, V)
        gW = velocity_gradient_at_qp(space, W)
        Vq = velocity_at_qp(space, V)
        Wq = velocity_at_qp(space, W)
        adv_V = np.einsum("cqa,cqia->cqi", Uq, gV)
        adv_W = np.einsum("cqa,cqia->cqi", Uq, gW)
        val = (adv_V * Wq - adv_W * Vq).sum(axis=2)
        return 0.5 * float((space.qw_phys * val).sum())
    if mode == "linearised_matrix":
        # scalar advection block C[i, j] = integral (U.grad phi_j) phi_i,
        # identical for both components
        adv = np.einsum("cqa,cqja->cqj", Uq, space.grad_p2)
        ce = np.einsum("cq,iq,cqj->cij", space.qw_phys, space.p2val, adv,
                       optimize=True)
        nn = space.num_nodes
        cells = space.cells_p2
        C = _scatter(ce, cells, cells, (nn, nn))
        N = 0.5 * (C - C.T)
        return SparseMatrix(sp.block_diag([N, N], format="csr"))
    if mode == "strong_form_at_quadrature":
        gU = velocity_gradient_at_qp(space, U)
        adv = np.einsum("cqa,cqia->cqi", Uq, gU)
        div = gU[..., 0, 0] + gU[..., 1, 1]
        return adv + 0.5 * div[..., None] * Uq
    raise ValueError("unknown convection mode '{}'".format(mode))


def assemble_load(space, f):
    """Load vector integral of f.phi by quadrature; f maps (x, y) arrays to (2, ...)."""
    fq = np.asarray(f(space.qp_phys[..., 0], space.qp_phys[..., 1]), dtype=float)
    wfx = space.qw_phys * fq[0]
    wfy = space.qw_phys * fq[1]
    lx = np.einsum("cq,iq->ci", wfx, space.p2val)
    ly = np.einsum("cq,iq->ci", wfy, space.p2val)
    L = np.zeros(space.num_velocity_dofs)
    np.add.at(L, space.cells_p2, lx)
    np.add.at(L, space.num_nodes + space.cells_p2, ly)
    return L


def _as_load(space, f):
    if f is None:
        return np.zeros(space.num_velocity_dofs)
    if callable(f):
        return assemble_load(space, f)
    return np.asarray(f, dtype=float)


def residual_pair(space, law, U, P, f, include_convection=False):
    """
    Discrete residuals of the regularised problem at (U, P): the momentum
    residual tested against velocity fields with zero boundary trace, and
    the incompressibility residual tested against pressures.
    """
    L = _as_load(space, f)
    B = assemble_b(space)
    F = assemble_a_n(space, law, U).csr @ U
    if include_convection:
        N = convection_apply(space, U, "linearised_matrix")
        F += N.csr @ U
    F += B.csr.T @ P - L
    F[space.dirichlet_dofs] = 0.0
    F_ic = -(B.csr @ U)
    return ResidualPair(F, F_ic)


def _free_riesz_solve(space, F):
    free = space.free_dofs
    if free.size == 0:
        warnings.warn("no free velocity dofs; dual norm is zero")
        return None
    if "G_ff" not in space.cache:
        G, _, _ = riesz_matrices(space)
        Gff = G[np.ix_(free, free)].tocsc()
        space.cache["G_ff"] = factorize(SparseMatrix(Gff))
    return space.cache["G_ff"].solve(F[free])


def dual_norm_pde(space, F_pde):
    """
    Dual norm of a momentum residual with respect to the full-gradient
    inner product on the zero-trace velocity space.
    """
    z = _free_riesz_solve(space, F_pde)
    if z is None:
        return 0.0
    return float(np.sqrt(max(F_pde[space.free_dofs] @ z, 0.0)))


def dual_norm_ic(space, F_ic):
    """Dual norm of an incompressibility residual under the pressure mass."""
    if "M_fact" not in space.cache:
        _, _, M = riesz_matrices(space)
        space.cache["M_fact"] = factorize(SparseMatrix(M.tocsc()))
    q = space.cache["M_fact"].solve(F_ic)
    return float(np.sqrt(max(F_ic @ q, 0.0)))


def energy(space, law, U, f):
    """
    Regularised flow energy: integral of
    effective_sigma * sqrt(|DU|^2 + n^-2) + nu |DU|^2 minus the load
    pairing. f may be a callable force or a preassembled load vector.
    """
    t = _strain_invariant(space, U)
    dens = law.effective_sigma * np.sqrt(t + law.n ** -2.0) + law.nu * t
    L = _as_load(space, f)
    return float((space.qw_phys * dens).sum() - L @ U)
