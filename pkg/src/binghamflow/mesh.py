"""
Conforming triangulations with newest-vertex bisection.

Cells are stored peak-first: the designated refinement edge of cell
(v0, v1, v2) is the edge opposite the vertex at position ``refine_edge``,
and bisection inserts the edge midpoint as the new peak of both children.
Meshes are value-semantic; refinement returns a new Triangulation and
records parent lineage for field transfer.
"""

from dataclasses import dataclass
import numpy as np


class Triangulation:
    """
    Triangle mesh of a polygonal domain.

    Attributes
    ----------
    vertices : (V, 2) float array
        Vertex coordinates.
    cells : (C, 3) int array
        Vertex indices per cell, positively oriented.
    refine_edge : (C,) int array
        Local index (0..2) of each cell's refinement edge; local edge k
        joins vertices k+1 and k+2 (mod 3), opposite vertex k.
    generation : (C,) int array
        Number of bisections separating each cell from the initial mesh.
    parent : (C,) int array
        Index of the cell in the previous mesh that each cell descends
        from; -1 on a mesh that was built directly.
    """

    def __init__(self, vertices, cells, refine_edge, generation=None, parent=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells, dtype=int)
        self.refine_edge = np.asarray(refine_edge, dtype=int)
        self.num_vertices = self.vertices.shape[0]
        self.num_cells = self.cells.shape[0]
        if generation is None:
            generation = np.zeros(self.num_cells, dtype=int)
        if parent is None:
            parent = np.full(self.num_cells, -1, dtype=int)
        self.generation = np.asarray(generation, dtype=int)
        self.parent = np.asarray(parent, dtype=int)
        self._edge_data = None

    def __str__(self):
        return "Triangulation with {} vertices and {} cells".format(
            self.num_vertices, self.num_cells)

    __repr__ = __str__

    def _build_edges(self):
        # unique sorted vertex pairs; local edge k of a cell is opposite vertex k
        c = self.cells
        raw = np.vstack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]])
        raw = np.sort(raw, axis=1)
        edges, inverse = np.unique(raw, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        cell_to_edge = inverse.reshape(3, self.num_cells).T
        counts = np.bincount(inverse, minlength=edges.shape[0])
        # incident cells per edge (at most two); row r of raw belongs to
        # local edge r // C of cell r % C
        edge_cells = np.full((edges.shape[0], 2), -1, dtype=int)
        edge_local = np.full((edges.shape[0], 2), -1, dtype=int)
        order = np.argsort(inverse, kind="stable")
        grouped = inverse[order]
        slot = np.arange(order.size) - np.searchsorted(grouped, grouped)
        edge_cells[grouped, slot] = order % self.num_cells
        edge_local[grouped, slot] = order // self.num_cells
        self._edge_data = (edges, cell_to_edge, edge_cells, edge_local, counts)

    @property
    def edges(self):
        """Sorted vertex-index pairs, one row per mesh edge."""
        if self._edge_data is None:
            self._build_edges()
        return self._edge_data[0]

    @property
    def cell_to_edge(self):
        """(C, 3) global edge index of each cell's local edges."""
        if self._edge_data is None:
            self._build_edges()
        return self._edge_data[1]

    @property
    def edge_cells(self):
        """(E, 2) incident cells per edge, -1 padding on the boundary."""
        if self._edge_data is None:
            self._build_edges()
        return self._edge_data[2]

    @property
    def edge_local(self):
        """(E, 2) local edge index inside each incident cell."""
        if self._edge_data is None:
            self._build_edges()
        return self._edge_data[3]

    @property
    def edge_counts(self):
        """Number of cells incident to each edge (1 or 2 when conforming)."""
        if self._edge_data is None:
            self._build_edges()
        return self._edge_data[4]

    @property
    def boundary_edges(self):
        """Set of sorted vertex-index pairs lying on the domain boundary."""
        mask = self.edge_counts == 1
        return {tuple(e) for e in self.edges[mask]}

    @property
    def boundary_vertices(self):
        mask = self.edge_counts == 1
        return np.unique(self.edges[mask])

    def signed_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self):
        """Smallest interior angle over all cells, in radians."""
        p = self.vertices[self.cells]
        ang = np.empty((self.num_cells, 3))
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            na = np.linalg.norm(a, axis=1)
            nb = np.linalg.norm(b, axis=1)
            cosv = np.clip((a * b).sum(axis=1) / (na * nb), -1.0, 1.0)
            ang[:, k] = np.arccos(cosv)
        return ang.min()


@dataclass
class ElementGeometry:
    """Area, mesh-size h_K = sqrt(area), edge lengths and outward unit normals."""
    area: float
    h_K: float
    edge_lengths: np.ndarray
    normals: np.ndarray


def build_structured_unit_square(divisions):
    """
    Mesh (0,1)^2 into divisions^2 squares, each cut by the same diagonal.

    Parameters
    ----------
    divisions : int
        Number of squares per side, at least 1.

    Returns
    -------
    Triangulation
        2*divisions^2 cells, (divisions+1)^2 vertices; refinement edges
        assigned by the longest-edge rule (the diagonals).
    """
    d = int(divisions)
    if d < 1:
        raise ValueError("divisions must be >= 1")
    side = np.linspace(0.0, 1.0, d + 1)
    X, Y = np.meshgrid(side, side)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (d + 1) + i

    cells = []
    for j in range(d):
        for i in range(d):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            e = vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, e))
    cells = np.array(cells, dtype=int)
    refine_edge = _longest_edge_labels(vertices, cells)
    return Triangulation(vertices, cells, refine_edge)


def _longest_edge_labels(vertices, cells):
    # refinement edge = longest edge; ties broken by lowest opposite-vertex index
    p = vertices[cells]
    lengths = np.empty((cells.shape[0], 3))
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        lengths[:, k] = np.hypot(e[:, 0], e[:, 1])
    labels = np.empty(cells.shape[0], dtype=int)
    for c in range(cells.shape[0]):
        lmax = lengths[c].max()
        tied = np.flatnonzero(lengths[c] >= lmax * (1.0 - 1e-12))
        labels[c] = tied[np.argmin(cells[c, tied])]
    return labels


def refine(mesh, marked):
    """
    Bisect every marked cell at least once and restore conformity.

    Marking a cell marks its refinement edge; the closure repeatedly adds
    refinement edges of any cell that touches a marked edge. Each cell is
    then split into 2, 3 or 4 children depending on how many of its edges
    carry a midpoint.

    Parameters
    ----------
    mesh : Triangulation
    marked : iterable of int
        Cell indices; an empty set returns an identical mesh.

    Returns
    -------
    Triangulation
        Conforming refined mesh with parent lineage into ``mesh``.
    """
    marked = np.asarray(sorted(set(int(c) for c in marked)), dtype=int)
    if marked.size == 0:
        return Triangulation(mesh.vertices.copy(), mesh.cells.copy(),
                             mesh.refine_edge.copy(), mesh.generation.copy(),
                             np.arange(mesh.num_cells))
    if marked.min() < 0 or marked.max() >= mesh.num_cells:
        raise IndexError("marked cell index out of range")

    c2e = mesh.cell_to_edge
    num_edges = mesh.edges.shape[0]
    edge_marked = np.zeros(num_edges, dtype=bool)
    edge_marked[c2e[marked, mesh.refine_edge[marked]]] = True

    # closure: a cell with any marked edge must have its refinement edge marked
    while True:
        has_marked = edge_marked[c2e].any(axis=1)
        ref_edges = c2e[np.arange(mesh.num_cells), mesh.refine_edge]
        need = has_marked & ~edge_marked[ref_edges]
        if not need.any():
            break
        edge_marked[ref_edges[need]] = True

    # one midpoint vertex per marked edge
    mids = np.flatnonzero(edge_marked)
    midpoint_of = np.full(num_edges, -1, dtype=int)
    midpoint_of[mids] = mesh.num_vertices + np.arange(mids.size)
    new_coords = 0.5 * (mesh.vertices[mesh.edges[mids, 0]]
                        + mesh.vertices[mesh.edges[mids, 1]])
    vertices = np.vstack([mesh.vertices, new_coords])

    cells_out = []
    ref_out = []
    gen_out = []
    parent_out = []

    def emit(tri, ref, gen, par):
        cells_out.append(tri)
        ref_out.append(ref)
        gen_out.append(gen)
        parent_out.append(par)

    for c in range(mesh.num_cells):
        re = mesh.refine_edge[c]
        if not edge_marked[c2e[c, re]]:
            emit(tuple(mesh.cells[c]), re, mesh.generation[c], c)
            continue
        # rotate to peak-first (p, a, b) with refinement edge (a, b)
        p = mesh.cells[c, re]
        a = mesh.cells[c, (re + 1) % 3]
        b = mesh.cells[c, (re + 2) % 3]
        w = midpoint_of[c2e[c, re]]
        gen1 = mesh.generation[c] + 1
        # children (w,p,a) and (w,b,p); their refinement edges (p,a) and
        # (b,p) are parent edges and may carry midpoints of their own
        for tri, eidx in (((w, p, a), c2e[c, (re + 2) % 3]),
                          ((w, b, p), c2e[c, (re + 1) % 3])):
            if edge_marked[eidx]:
                w2 = midpoint_of[eidx]
                q, s, t = tri
                emit((w2, q, s), 0, gen1 + 1, c)
                emit((w2, t, q), 0, gen1 + 1, c)
            else:
                emit(tri, 0, gen1, c)

    return Triangulation(vertices, np.array(cells_out, dtype=int),
                         np.array(ref_out, dtype=int),
                         np.array(gen_out, dtype=int),
                         np.array(parent_out, dtype=int))


def element_geometry(mesh, cell):
    """
    Geometry of one cell: area, h_K, edge lengths, outward unit normals.

    The k-th edge length and normal belong to the local edge opposite
    vertex k.
    """
    tri = mesh.cells[int(cell)]
    p = mesh.vertices[tri]
    d1 = p[1] - p[0]
    d2 = p[2] - p[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    lengths = np.empty(3)
    normals = np.empty((3, 2))
    for k in range(3):
        e = p[(k + 2) % 3] - p[(k + 1) % 3]
        lengths[k] = np.hypot(e[0], e[1])
        # rotate the edge vector; orientation guarantees (ey, -ex) points outward
        n = np.array([e[1], -e[0]]) / lengths[k]
        normals[k] = n
    return ElementGeometry(area=float(area), h_K=float(np.sqrt(area)),
                           edge_lengths=lengths, normals=normals)


def patch(mesh, cell):
    """All cells sharing at least one vertex with the given cell, itself included."""
    tri = mesh.cells[int(cell)]
    mask = np.isin(mesh.cells, tri).any(axis=1)
    return set(np.flatnonzero(mask).tolist())


def uniform_refine(mesh, rounds=1):
    """Refine with every cell marked, repeatedly."""
    for _ in range(rounds):
        mesh = refine(mesh, range(mesh.num_cells))
    return mesh
