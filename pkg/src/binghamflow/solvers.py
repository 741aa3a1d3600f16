"""
Fixed-point solvers for the regularised flow problem and the inner loop
that drives them to the adaptive stopping criterion.

All three steps share one saddle-point kernel: eliminate Dirichlet dofs,
pin one pressure dof against consistency-projected continuity data,
factorize, solve, shift P back to weighted zero mean. The secant-weighted
steps keep the previous factorization as a Krylov preconditioner and only
refactorize when their viscous block has moved too far; the
damped-gradient step reuses one exact factorization per space, solving
for the scaled pressure delta*P so the damping parameter never enters
the matrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import SingularMatrixError, SparseMatrix, factorize
from .forms import (
    assemble_a_n,
    assemble_b,
    assemble_load,
    convection_apply,
    dual_norm_ic,
    dual_norm_pde,
    energy,
)
from .spaces import FieldPair, riesz_matrices

_METHODS = ("kacanov", "kacanov_convective", "zarantonello")


@dataclass
class SolverConfig:
    method: str = "kacanov"
    delta_rule: str = "adaptive_n"
    delta: float = None
    max_inner_iterations: int = 100
    force_min_one_step: bool = True
    criterion_exponent: float = 1.0

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError("method must be one of {}".format(_METHODS))
        if self.delta_rule not in ("fixed", "adaptive_n"):
            raise ValueError("delta_rule must be 'fixed' or 'adaptive_n'")
        if self.delta_rule == "fixed" and not (self.delta and self.delta > 0):
            raise ValueError("fixed delta_rule needs delta > 0")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be >= 1")

    @property
    def include_convection(self):
        return self.method != "kacanov"

    def step_size(self, law):
        if self.delta_rule == "fixed":
            return self.delta
        return 1.0 / law.n


@dataclass
class InnerLoopReport:
    iterations: int
    res_pde: float
    res_ic: float
    energy_trace: list
    stop_reason: str
    estimator_value: float = float("inf")
    indicators: object = None
    # one (inner index, energy, res_pde, res_ic) row per criterion check
    trace: list = None


def _mean_weights(space):
    if "mean_weights" not in space.cache:
        _, _, M = riesz_matrices(space)
        space.cache["mean_weights"] = np.asarray(
            M @ np.ones(space.num_pressure_dofs)).ravel()
    return space.cache["mean_weights"]


def _continuity_blocks(space, Bc, free, zero_mean, cacheable):
    """
    Dirichlet-restricted continuity block, with its pinned variant when
    the pressure mean is constrained: the first row is blanked and a unit
    diagonal entry fixes that pressure dof instead. Cached per space for
    the default constraint set.
    """
    key = ("saddle_blocks", zero_mean)
    if cacheable and key in space.cache:
        return space.cache[key]
    Bf = Bc[:, free].tocsr()
    if zero_mean:
        Bf0 = Bf.copy()
        Bf0.data[Bf0.indptr[0]:Bf0.indptr[1]] = 0.0
        one = np.ones(1)
        zeros = np.zeros(1, dtype=int)
        pin = sp.csr_matrix((one, (zeros, zeros)),
                            shape=(Bf.shape[0],) * 2)
    else:
        Bf0, pin = Bf, None
    blocks = (Bf, Bf0, pin)
    if cacheable:
        space.cache[key] = blocks
    return blocks


def solve_saddle(space, A, B, rhs, dirichlet=None, zero_mean=True,
                 cache_key=None, lag_key=None):
    """
    Solve A U + B^T P = rhs, B U = 0 with Dirichlet elimination and, by
    default, the pressure normalised to weighted zero mean.

    The mean constraint is imposed by pinning one pressure dof and
    shifting the returned P; beforehand the continuity data is projected
    onto the range of the constrained divergence, so any net-flux defect
    of the eliminated boundary values is spread mass-proportionally
    instead of landing on the pinned dof. This keeps the matrix free of
    dense rows, which the sparse factorization rewards by an order of
    magnitude.

    A, B accept SparseMatrix or scipy matrices. dirichlet overrides the
    space's constraint as a (dofs, values) pair. cache_key memoizes the
    factorization for iteration-independent blocks. lag_key keeps the
    last factorization under that key and tries it as a preconditioner
    for the current system, refactorizing only when the correction
    iteration cannot reach direct-solve accuracy; this pays off when the
    block drifts slowly between calls.
    """
    Ac = A.csr if isinstance(A, SparseMatrix) else A.tocsr()
    Bc = B.csr if isinstance(B, SparseMatrix) else B.tocsr()
    if dirichlet is None:
        ddofs, dvals = space.dirichlet_dofs, space.dirichlet_values
    else:
        ddofs, dvals = dirichlet
        ddofs = np.asarray(ddofs, dtype=int)
        dvals = np.asarray(dvals, dtype=float)
    keep = np.ones(Ac.shape[0], dtype=bool)
    keep[ddofs] = False
    free = np.flatnonzero(keep)
    nf = free.size
    np_ = Bc.shape[0]
    Bf, Bf0, pin = _continuity_blocks(space, Bc, free, zero_mean,
                                      cacheable=dirichlet is None)

    lift = np.zeros(Ac.shape[1])
    lift[ddofs] = dvals
    b1 = rhs[free] - (Ac @ lift)[free]
    b2 = -(Bc @ lift)
    if zero_mean:
        w = _mean_weights(space)
        b2 = b2 - (b2.sum() / w.sum()) * w
    full_rhs = np.concatenate([b1, b2])
    if zero_mean:
        full_rhs[nf] = 0.0

    fact = space.cache.get(("saddle", cache_key)) if cache_key else None
    sol = None
    if fact is None:
        K = sp.bmat([[Ac[free][:, free], Bf.T], [Bf0, pin]], format="csc")
        lagged = space.cache.get(("saddle_lag", lag_key)) if lag_key else None
        if lagged is not None and lagged.shape == K.shape:
            sol = _lagged_gmres(K, full_rhs, lagged)
        if sol is None:
            try:
                fact = factorize(SparseMatrix(K))
            except SingularMatrixError as exc:
                raise RuntimeError(
                    "saddle solve failed: {} free velocity dofs, {} "
                    "pressure dofs, pivot {}".format(
                        nf, np_, exc.pivot)) from exc
            if cache_key is not None:
                space.cache[("saddle", cache_key)] = fact
            if lag_key is not None:
                space.cache[("saddle_lag", lag_key)] = fact
    if sol is None:
        sol = fact.solve(full_rhs)

    U = lift
    U[free] = sol[:nf]
    P = sol[nf:nf + np_]
    if zero_mean:
        P = P - (w @ P) / w.sum()
    return FieldPair(U, P)


def _lagged_gmres(K, rhs, lagged):
    """
    Krylov correction of the current system preconditioned by an earlier
    factorization. Returns None unless the unpreconditioned residual
    reaches near-direct accuracy within one short cycle, so a stale
    preconditioner falls through to refactorization instead of degrading
    the solution.
    """
    M = spla.LinearOperator(K.shape, matvec=lagged.solve)
    sol, info = spla.gmres(K, rhs, M=M, rtol=1e-13, atol=0.0,
                           restart=30, maxiter=1)
    if info != 0:
        return None
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return sol
    if np.linalg.norm(rhs - K @ sol) <= 1e-12 * scale:
        return sol
    return None


def kacanov_step(space, law, pair, f, A=None, L=None):
    """
    One secant-weighted step: freeze the viscosity at the current
    velocity and solve the resulting linear saddle problem.
    """
    if A is None:
        A = assemble_a_n(space, law, pair.U)
    if L is None:
        L = assemble_load(space, f)
    return solve_saddle(space, A, assemble_b(space), L, lag_key="kacanov")


def kacanov_convective_step(space, law, pair, f, A=None, L=None):
    """
    Secant-weighted step with the convection matrix linearised around the
    current velocity (transport argument frozen).
    """
    if A is None:
        A = assemble_a_n(space, law, pair.U)
    if L is None:
        L = assemble_load(space, f)
    N = convection_apply(space, pair.U, "linearised_matrix")
    return solve_saddle(space, A.csr + N.csr, assemble_b(space), L,
                        lag_key="kacanov")


def zarantonello_step(space, law, pair, f, delta, include_convection=True,
                      F_pde=None, L=None):
    """
    One damped step preconditioned by the symmetric-gradient inner
    product: the new velocity solves the constrained linear problem whose
    right-hand side backs off delta times the current residual. The
    matrix never changes on a fixed space, so its factorization is
    reused; the pressure unknown is delta*P, rescaled on return.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    _, D, _ = riesz_matrices(space)
    B = assemble_b(space)
    if F_pde is None:
        if L is None:
            L = assemble_load(space, f)
        F_pde = assemble_a_n(space, law, pair.U).csr @ pair.U
        if include_convection:
            F_pde = F_pde + convection_apply(
                space, pair.U, "linearised_matrix").csr @ pair.U
        F_pde = F_pde - L
    rhs = D @ pair.U - delta * F_pde
    out = solve_saddle(space, D, B, rhs, cache_key="zarantonello")
    out.P /= delta
    return out


def _assemble_current(space, law, config, U, L):
    """Viscous (plus convection) block and momentum residual at U."""
    A = assemble_a_n(space, law, U)
    Astep = A
    F = A.csr @ U
    if config.include_convection:
        N = convection_apply(space, U, "linearised_matrix")
        Astep = SparseMatrix((A.csr + N.csr).tocsr())
        F = F + N.csr @ U
    return Astep, F - L


def inner_loop(space, law, start, f, config, thresholds):
    """
    Iterate the configured step until the residual dual norms drop under
    min(max(estimator, eta), zeta), with the estimator reevaluated at
    every pass; ties continue. At least one step is taken when the config
    forces it. Returns the first iterate meeting the criterion together
    with a report.

    thresholds: dict with keys estimator_value (number, or callable on
    the current FieldPair returning a number or an object with field E),
    eta_value, zeta_value.
    """
    est = thresholds.get("estimator_value", 0.0)
    eta = float(thresholds.get("eta_value", 0.0))
    zeta = float(thresholds.get("zeta_value", np.inf))
    L = assemble_load(space, f)
    B = assemble_b(space)
    delta = config.step_size(law)

    pair = start.copy()
    energies = [energy(space, law, pair.U, L)]
    min_steps = 1 if config.force_min_one_step else 0
    it = 0
    indicators = None
    trace = []
    while True:
        Astep, F_pde = _assemble_current(space, law, config, pair.U, L)
        F_pde_t = F_pde + B.csr.T @ pair.P
        F_pde_t[space.dirichlet_dofs] = 0.0
        res_pde = dual_norm_pde(space, F_pde_t)
        res_ic = dual_norm_ic(space, -(B.csr @ pair.U))
        trace.append((it, energies[-1], res_pde, res_ic))

        E = est(pair) if callable(est) else est
        if hasattr(E, "E"):
            indicators = E
            E = E.E
        E = float(E)
        threshold = min(max(E, eta) ** config.criterion_exponent, zeta)
        if it >= min_steps and res_pde + res_ic < threshold:
            reason = "criterion_met"
            break
        if it >= config.max_inner_iterations:
            reason = "max_iterations"
            break

        if config.method == "zarantonello":
            pair = zarantonello_step(space, law, pair, f, delta,
                                     F_pde=F_pde, L=L)
        else:
            pair = solve_saddle(space, Astep, B, L, lag_key="kacanov")
        it += 1
        energies.append(energy(space, law, pair.U, L))

    return pair, InnerLoopReport(
        iterations=it,
        res_pde=res_pde,
        res_ic=res_ic,
        energy_trace=energies,
        stop_reason=reason,
        estimator_value=E,
        indicators=indicators,
        trace=trace,
    )
