"""
Sparse storage, direct factorization, and dense test oracles.

Thin layer over scipy: CSR storage, SuperLU for the indefinite saddle
systems, LAPACK for the dense oracles used in tests. Desk-scale problems
factor in seconds, so no iterative solvers are provided.
"""

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    """Raised when a factorization hits a zero pivot.

    Attributes
    ----------
    pivot : int or None
        Index of the offending pivot when it could be located.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SparseMatrix:
    """Compressed sparse row matrix with sorted, duplicate-free columns."""

    def __init__(self, csr):
        csr = sp.csr_matrix(csr)
        csr.sum_duplicates()
        csr.sort_indices()
        self.csr = csr
        self.nrows, self.ncols = csr.shape

    @property
    def indptr(self):
        return self.csr.indptr

    @property
    def indices(self):
        return self.csr.indices

    @property
    def data(self):
        return self.csr.data

    def matvec(self, x):
        return self.csr @ np.asarray(x, dtype=float)

    def to_dense(self):
        return self.csr.toarray()

    def __repr__(self):
        return "SparseMatrix({}x{}, nnz={})".format(
            self.nrows, self.ncols, self.csr.nnz)


def assemble_from_triplets(rows, cols, vals, shape):
    """
    Build a SparseMatrix from (row, col, value) triplets.

    Duplicate entries are summed. An index outside ``shape`` raises a
    ValueError naming the offending triplet.
    """
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    vals = np.asarray(vals, dtype=float)
    nr, nc = shape
    if rows.size:
        bad = (rows < 0) | (rows >= nr) | (cols < 0) | (cols >= nc)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise ValueError(
                "triplet {} out of range: ({}, {}) for shape {}x{}".format(
                    k, rows[k], cols[k], nr, nc))
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(nr, nc))
    return SparseMatrix(coo.tocsr())


def _as_csc(A):
    if isinstance(A, SparseMatrix):
        return A.csr.tocsc()
    return sp.csc_matrix(A)


def _locate_pivot(A):
    # last-resort diagnosis for small systems
    dense = _as_csc(A).toarray()
    if dense.shape[0] > 2000:
        return None
    _, _, U = scipy.linalg.lu(dense)
    diag = np.abs(np.diag(U))
    tol = np.finfo(float).eps * max(1.0, diag.max())
    small = np.flatnonzero(diag <= tol)
    return int(small[0]) if small.size else None


class Factorization:
    """Reusable LU factorization of a square sparse matrix."""

    def __init__(self, A):
        csc = _as_csc(A)
        if csc.shape[0] != csc.shape[1]:
            raise ValueError("matrix must be square")
        try:
            self.lu = spla.splu(csc)
        except RuntimeError as err:
            raise SingularMatrixError(
                "sparse factorization failed: {}".format(err),
                pivot=_locate_pivot(csc)) from err
        self.shape = csc.shape
        self._A = csc

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("factorization produced non-finite solution",
                                      pivot=_locate_pivot(self._A))
        return x


def factorize(A):
    return Factorization(A)


def solve_sparse(A, b, rtol=1e-10):
    """
    Direct solve A x = b with a residual guarantee.

    Raises SingularMatrixError on breakdown and RuntimeError if the
    relative residual of the computed solution exceeds ``rtol``.
    """
    b = np.asarray(b, dtype=float)
    fact = Factorization(A)
    x = fact.solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm > 0.0:
        resid = np.linalg.norm(fact._A @ x - b) / bnorm
        if resid > rtol:
            raise RuntimeError(
                "direct solve residual {:.3e} exceeds {:.1e}".format(resid, rtol))
    return x


def dense_oracle_solve(A, b):
    """Dense LU solve for test oracles; dimensions capped at 2000."""
    A = A.to_dense() if isinstance(A, SparseMatrix) else np.asarray(A, dtype=float)
    if A.shape[0] > 2000:
        raise ValueError("dense oracle limited to 2000 rows")
    return scipy.linalg.solve(A, np.asarray(b, dtype=float))


def dense_generalized_eigen(A, B):
    """
    Eigenpairs of A v = lambda B v for symmetric A and SPD B.

    Returns eigenvalues ascending and the matching eigenvectors as
    columns. B failing a Cholesky test raises ValueError.
    """
    A = A.to_dense() if isinstance(A, SparseMatrix) else np.asarray(A, dtype=float)
    B = B.to_dense() if isinstance(B, SparseMatrix) else np.asarray(B, dtype=float)
    if A.shape[0] > 2000:
        raise ValueError("dense oracle limited to 2000 rows")
    try:
        scipy.linalg.cholesky(B)
    except scipy.linalg.LinAlgError as err:
        raise ValueError("B is not symmetric positive definite") from err
    vals, vecs = scipy.linalg.eigh(A, B)
    return vals, vecs


def write_matrix_market(A, path):
    """Dump a matrix in Matrix Market coordinate format."""
    mat = A.csr if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    scipy.io.mmwrite(str(path), mat)
