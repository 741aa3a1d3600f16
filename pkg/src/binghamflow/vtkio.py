"""
Legacy ASCII VTK writers for meshes, solution fields, and per-element
indicators, plus a plain CSV dump of raw coefficient vectors.

Everything is written with an explicit float format so identical inputs
produce byte-identical files.
"""

import numpy as np

_FLOAT = "%.17g"


def _fmt(x):
    return _FLOAT % x


def _header(out, title):
    out.append("# vtk DataFile Version 3.0")
    out.append(title)
    out.append("ASCII")
    out.append("DATASET UNSTRUCTURED_GRID")


def _points_and_cells(out, mesh):
    V = mesh.num_vertices
    C = mesh.num_cells
    out.append("POINTS {} double".format(V))
    for x, y in mesh.vertices:
        out.append("{} {} 0".format(_fmt(x), _fmt(y)))
    out.append("CELLS {} {}".format(C, 4 * C))
    for a, b, c in mesh.cells:
        out.append("3 {} {} {}".format(a, b, c))
    out.append("CELL_TYPES {}".format(C))
    out.extend(["5"] * C)


def write_mesh(path, mesh, title="triangulation"):
    """Write the triangulation alone as an unstructured grid."""
    out = []
    _header(out, title)
    _points_and_cells(out, mesh)
    _write(path, out)


def write_fields(path, space, pair, title="flow state"):
    """
    Write vertex-sampled velocity (as 3-vectors with zero third
    component) and pressure over the triangulation. Midside velocity
    values are dropped; viewers interpolate linearly anyway.
    """
    mesh = space.mesh
    V = mesh.num_vertices
    nn = space.num_nodes
    ux = pair.U[:V]
    uy = pair.U[nn:nn + V]
    out = []
    _header(out, title)
    _points_and_cells(out, mesh)
    out.append("POINT_DATA {}".format(V))
    out.append("VECTORS velocity double")
    for a, b in zip(ux, uy):
        out.append("{} {} 0".format(_fmt(a), _fmt(b)))
    out.append("SCALARS pressure double 1")
    out.append("LOOKUP_TABLE default")
    for p in pair.P:
        out.append(_fmt(p))
    _write(path, out)


def write_indicators(path, mesh, indicators, title="error indicators"):
    """
    Write the two per-element indicator families as cell data on the
    triangulation that produced them.
    """
    if indicators.eta_pde.size != mesh.num_cells:
        raise ValueError("indicator length {} does not match {} cells".format(
            indicators.eta_pde.size, mesh.num_cells))
    out = []
    _header(out, title)
    _points_and_cells(out, mesh)
    out.append("CELL_DATA {}".format(mesh.num_cells))
    for name, vals in (("indicator_pde", indicators.eta_pde),
                      ("indicator_ic", indicators.eta_ic)):
        out.append("SCALARS {} double 1".format(name))
        out.append("LOOKUP_TABLE default")
        for v in vals:
            out.append(_fmt(v))
    _write(path, out)


def coefficients_to_csv(path, pair):
    """Dump raw velocity/pressure coefficients for debugging: kind,index,value."""
    out = ["kind,index,value"]
    for i, v in enumerate(pair.U):
        out.append("U,{},{}".format(i, _fmt(v)))
    for i, v in enumerate(pair.P):
        out.append("P,{},{}".format(i, _fmt(v)))
    _write(path, out)


def _write(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
