"""
Taylor-Hood space: continuous P2 vector velocity over continuous P1
pressure, one fixed symmetric quadrature rule, nodal interpolation, and
the Riesz matrices behind every norm in the solver.

Velocity nodes are the mesh vertices followed by the edge midpoints;
velocity coefficients are component-blocked, x-components first. The
pressure nodes are the vertices.
"""

from dataclasses import dataclass
import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix

# 16-point symmetric triangle rule, exact for total degree 8. Orbit
# parameters refined by Newton on the moment equations; the published
# 12-digit values miss the 1e-14 exactness target.
_Q_W0 = 0.1443156076777862
_Q_ORBITS3 = (
    (0.09509163426728515, 0.08141482341455374),
    (0.10321737053471837, 0.6588613844964794),
    (0.03245849762319798, 0.8989055433659382),
)
_Q_ORBIT6 = (0.02723031417443489, 0.008394777409957472, 0.2631128296346372)


def triangle_quadrature():
    """
    Reference-triangle rule: (points, weights) with points in the
    (xi, eta) plane and weights summing to the reference area 1/2.
    """
    bary = [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    wts = [_Q_W0]
    for w, a in _Q_ORBITS3:
        b = 0.5 * (1.0 - a)
        for pt in ((a, b, b), (b, a, b), (b, b, a)):
            bary.append(pt)
            wts.append(w)
    w, a, b = _Q_ORBIT6
    c = 1.0 - a - b
    for pt in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        bary.append(pt)
        wts.append(w)
    bary = np.array(bary)
    points = bary[:, 1:]
    weights = 0.5 * np.array(wts)
    return points, weights


def p2_values(points):
    """P2 basis values at reference points, shape (6, npts)."""
    xi, eta = points[:, 0], points[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta])
    vals = np.empty((6, points.shape[0]))
    for k in range(3):
        vals[k] = lam[k] * (2.0 * lam[k] - 1.0)
        vals[3 + k] = 4.0 * lam[(k + 1) % 3] * lam[(k + 2) % 3]
    return vals


def p2_reference_gradients(points):
    """P2 basis gradients at reference points, shape (6, npts, 2)."""
    xi, eta = points[:, 0], points[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta])
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.empty((6, points.shape[0], 2))
    for k in range(3):
        grads[k] = (4.0 * lam[k] - 1.0)[:, None] * dlam[k]
        grads[3 + k] = 4.0 * (lam[(k + 1) % 3][:, None] * dlam[(k + 2) % 3]
                              + lam[(k + 2) % 3][:, None] * dlam[(k + 1) % 3])
    return grads


def p1_values(points):
    """P1 basis values at reference points, shape (3, npts)."""
    xi, eta = points[:, 0], points[:, 1]
    return np.stack([1.0 - xi - eta, xi, eta])


@dataclass
class FieldPair:
    """One velocity-pressure iterate as coefficient vectors."""
    U: np.ndarray
    P: np.ndarray

    def copy(self):
        return FieldPair(self.U.copy(), self.P.copy())


class TaylorHoodSpace:
    """
    Degree-of-freedom maps, quadrature tables, and element geometry for
    one mesh. Immutable after build; factorizations of the Riesz and
    saddle matrices are memoized in ``cache``.
    """

    def __init__(self, mesh, dirichlet_data=None):
        self.mesh = mesh
        edges = mesh.edges
        V = mesh.num_vertices
        E = edges.shape[0]
        self.num_nodes = V + E
        self.num_velocity_dofs = 2 * self.num_nodes
        self.num_pressure_dofs = V
        self.node_coords = np.vstack([
            mesh.vertices,
            0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]]),
        ])
        # local nodes: three vertices then the midpoint of the edge
        # opposite each vertex
        self.cells_p2 = np.hstack([mesh.cells, V + mesh.cell_to_edge])

        qpts, qwts = triangle_quadrature()
        self.quad_points = qpts
        self.quad_weights = qwts
        self.p2val = p2_values(qpts)
        self.p1val = p1_values(qpts)
        refgrad = p2_reference_gradients(qpts)

        p = mesh.vertices[mesh.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        invJT = np.empty_like(J)
        invJT[:, 0, 0] = J[:, 1, 1]
        invJT[:, 0, 1] = -J[:, 1, 0]
        invJT[:, 1, 0] = -J[:, 0, 1]
        invJT[:, 1, 1] = J[:, 0, 0]
        invJT /= detJ[:, None, None]
        self.detJ = detJ
        self.areas = 0.5 * detJ
        # physical P2 gradients, (C, nq, 6, 2)
        self.grad_p2 = np.einsum("cab,iqb->cqia", invJT, refgrad)
        dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        # P1 gradients are constant per cell, (C, 3, 2)
        self.grad_p1 = np.einsum("cab,ib->cia", invJT, dlam)
        # physical quadrature points and scaled weights
        p1v = self.p1val
        self.qp_phys = np.einsum("iq,cia->cqa", p1v, mesh.vertices[mesh.cells])
        self.qw_phys = qwts[None, :] * detJ[:, None]

        self._build_dirichlet(dirichlet_data)
        self.cache = {}

    def _build_dirichlet(self, dirichlet_data):
        mesh = self.mesh
        V = mesh.num_vertices
        bmask = mesh.edge_counts == 1
        bnodes = np.concatenate([
            np.unique(mesh.edges[bmask]),
            V + np.flatnonzero(bmask),
        ])
        bnodes = np.unique(bnodes)
        nn = self.num_nodes
        dofs = np.concatenate([bnodes, nn + bnodes])
        coords = self.node_coords[bnodes]
        if dirichlet_data is None:
            vals = np.zeros(2 * bnodes.size)
        else:
            g = np.asarray(dirichlet_data(coords[:, 0], coords[:, 1]), dtype=float)
            vals = np.concatenate([g[0], g[1]])
        order = np.argsort(dofs)
        self.dirichlet_dofs = dofs[order]
        self.dirichlet_values = vals[order]
        self.is_dirichlet = np.zeros(self.num_velocity_dofs, dtype=bool)
        self.is_dirichlet[self.dirichlet_dofs] = True
        self.free_dofs = np.flatnonzero(~self.is_dirichlet)

    def velocity_dofs_of_cells(self):
        """(C, 12) global velocity dof indices, x block then y block."""
        return np.hstack([self.cells_p2, self.num_nodes + self.cells_p2])

    def lift(self):
        """Coefficient vector that is zero except for the boundary values."""
        U = np.zeros(self.num_velocity_dofs)
        U[self.dirichlet_dofs] = self.dirichlet_values
        return U

    def zero_pair(self):
        return FieldPair(np.zeros(self.num_velocity_dofs),
                         np.zeros(self.num_pressure_dofs))


def build_taylor_hood(mesh, dirichlet_data=None):
    """
    Build the mixed space on a conforming mesh.

    Parameters
    ----------
    mesh : Triangulation
    dirichlet_data : callable or None
        Vectorized boundary velocity ``g(x, y) -> (2, npts)``; None means
        homogeneous data. Both components of every boundary node are
        constrained.
    """
    return TaylorHoodSpace(mesh, dirichlet_data)


def interpolate_velocity(space, f):
    """Nodal interpolant of a continuous vector field, as coefficients."""
    x, y = space.node_coords[:, 0], space.node_coords[:, 1]
    vals = np.asarray(f(x, y), dtype=float)
    return np.concatenate([vals[0], vals[1]])


def velocity_at_qp(space, U):
    """Velocity values at quadrature points, (C, nq, 2)."""
    nn = space.num_nodes
    Ux = U[:nn][space.cells_p2]
    Uy = U[nn:][space.cells_p2]
    out = np.empty((space.mesh.num_cells, space.quad_points.shape[0], 2))
    out[..., 0] = np.einsum("ci,iq->cq", Ux, space.p2val)
    out[..., 1] = np.einsum("ci,iq->cq", Uy, space.p2val)
    return out


def velocity_gradient_at_qp(space, U):
    """Velocity gradients at quadrature points, (C, nq, 2, 2) as grad[i, j] = dU_i/dx_j."""
    nn = space.num_nodes
    Ux = U[:nn][space.cells_p2]
    Uy = U[nn:][space.cells_p2]
    out = np.empty((space.mesh.num_cells, space.quad_points.shape[0], 2, 2))
    out[..., 0, :] = np.einsum("ci,cqia->cqa", Ux, space.grad_p2)
    out[..., 1, :] = np.einsum("ci,cqia->cqa", Uy, space.grad_p2)
    return out


def pressure_at_qp(space, P):
    """Pressure values at quadrature points, (C, nq)."""
    Pc = P[space.mesh.cells]
    return np.einsum("ci,iq->cq", Pc, space.p1val)


def pressure_gradient(space, P):
    """Constant per-cell pressure gradient, (C, 2)."""
    Pc = P[space.mesh.cells]
    return np.einsum("ci,cia->ca", Pc, space.grad_p1)


def _scatter(Ae, rows_nodes, cols_nodes, shape):
    rows = np.broadcast_to(rows_nodes[:, :, None], Ae.shape).ravel()
    cols = np.broadcast_to(cols_nodes[:, None, :], Ae.shape).ravel()
    return sp.coo_matrix((Ae.ravel(), (rows, cols)), shape=shape).tocsr()


def assemble_riesz_matrices(space):
    """
    The three symmetric Riesz matrices of the space.

    Returns
    -------
    G : SparseMatrix
        Full velocity-gradient form, integral of grad u : grad v.
    D : SparseMatrix
        Symmetric-gradient form, integral of D(u) : D(v).
    M : SparseMatrix
        Pressure mass matrix.
    """
    C = space.mesh.num_cells
    nq = space.quad_points.shape[0]
    nn = space.num_nodes
    nv = space.num_velocity_dofs

    gxx = np.zeros((C, 6, 6))
    gyy = np.zeros((C, 6, 6))
    gxy = np.zeros((C, 6, 6))
    for q in range(nq):
        w = space.qw_phys[:, q]
        gx = space.grad_p2[:, q, :, 0]
        gy = space.grad_p2[:, q, :, 1]
        gxx += np.einsum("c,ci,cj->cij", w, gx, gx)
        gyy += np.einsum("c,ci,cj->cij", w, gy, gy)
        gxy += np.einsum("c,ci,cj->cij", w, gx, gy)

    cells = space.cells_p2
    g_scalar = _scatter(gxx + gyy, cells, cells, (nn, nn))
    G = sp.block_diag([g_scalar, g_scalar], format="csr")

    # D(u):D(v) blocks for component basis fields
    dxx = gxx + 0.5 * gyy
    dyy = gyy + 0.5 * gxx
    dxy = 0.5 * gxy.transpose(0, 2, 1)  # row x-dof i, col y-dof j: 1/2 dy(i) dx(j)
    Dxx = _scatter(dxx, cells, cells, (nn, nn))
    Dyy = _scatter(dyy, cells, cells, (nn, nn))
    Dxy = _scatter(dxy, cells, cells, (nn, nn))
    D = sp.bmat([[Dxx, Dxy], [Dxy.T, Dyy]], format="csr")

    Me = np.zeros((C, 3, 3))
    for q in range(nq):
        w = space.qw_phys[:, q]
        val = space.p1val[:, q]
        Me += w[:, None, None] * np.outer(val, val)[None, :, :]
    M = _scatter(Me, space.mesh.cells, space.mesh.cells,
                 (space.num_pressure_dofs, space.num_pressure_dofs))
    return SparseMatrix(G), SparseMatrix(D), SparseMatrix(M)


def riesz_matrices(space):
    """Cached scipy handles to (G, D, M)."""
    if "riesz" not in space.cache:
        G, D, M = assemble_riesz_matrices(space)
        space.cache["riesz"] = (G.csr, D.csr, M.csr)
    return space.cache["riesz"]


def field_norm(space, field, which):
    """
    Quadrature norm of a coefficient field.

    ``which`` is one of ``h1-velocity`` (gradient seminorm of a velocity
    vector), ``l2-pressure``, or ``l2-divergence`` (of a velocity vector).
    """
    key = which.lower().replace("_", "-")
    G, _, M = riesz_matrices(space)
    if key == "h1-velocity":
        return float(np.sqrt(max(field @ (G @ field), 0.0)))
    if key == "l2-pressure":
        return float(np.sqrt(max(field @ (M @ field), 0.0)))
    if key == "l2-divergence":
        grad = velocity_gradient_at_qp(space, field)
        div = grad[..., 0, 0] + grad[..., 1, 1]
        return float(np.sqrt((space.qw_phys * div ** 2).sum()))
    raise ValueError("unknown norm '{}'".format(which))


def transfer_pair(old_space, new_space, pair):
    """
    Carry a coefficient pair to the space of a refined mesh.

    Exact for nested refinement: every new node is evaluated inside its
    ancestor cell through the recorded lineage. Identical meshes return a
    copy.
    """
    new_mesh = new_space.mesh
    old_mesh = old_space.mesh
    if new_mesh is old_mesh:
        return pair.copy()
    if np.all(new_mesh.parent < 0):
        raise ValueError("target mesh does not descend from the source mesh")

    # one incident cell per node, then its ancestor in the old mesh
    nn = new_space.num_nodes
    node_cell = np.full(nn, -1, dtype=int)
    for k in range(6):
        node_cell[new_space.cells_p2[:, k]] = np.arange(new_mesh.num_cells)
    anc = new_mesh.parent[node_cell]

    tri = old_mesh.cells[anc]
    p0 = old_mesh.vertices[tri[:, 0]]
    J = np.stack([old_mesh.vertices[tri[:, 1]] - p0,
                  old_mesh.vertices[tri[:, 2]] - p0], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    diff = new_space.node_coords - p0
    xi = (J[:, 1, 1] * diff[:, 0] - J[:, 0, 1] * diff[:, 1]) / det
    eta = (-J[:, 1, 0] * diff[:, 0] + J[:, 0, 0] * diff[:, 1]) / det
    pts = np.column_stack([xi, eta])

    phi = p2_values(pts)        # (6, nn)
    psi = p1_values(pts)        # (3, nn)
    old_nn = old_space.num_nodes
    dofs = old_space.cells_p2[anc]      # (nn, 6)
    Ux = (pair.U[:old_nn][dofs] * phi.T).sum(axis=1)
    Uy = (pair.U[old_nn:][dofs] * phi.T).sum(axis=1)
    U = np.concatenate([Ux, Uy])

    nvert = new_mesh.num_vertices
    P = (pair.P[tri[:nvert]] * psi.T[:nvert]).sum(axis=1)
    return FieldPair(U, P)
