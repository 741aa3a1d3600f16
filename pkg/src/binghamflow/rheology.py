"""
Yield-stress constitutive law, its smooth regularisation, and the
closed-form iteration constants.

The material is rigid below the yield stress and Newtonian above it. The
regularised stress uses the smoothed tensor modulus |D|_n = sqrt(|D|^2 +
n^-2) with n = 2^m, so the viscosity coefficient mu_n stays within
[2 nu, 2 nu + sigma n]. The ``norm_factor`` kappa rescales the yield
stress inside the tensor law (kappa = sqrt(2) converts a simple-shear
yield value to the Frobenius convention); every formula below uses the
effective yield kappa * sigma.
"""

from dataclasses import dataclass, field
import math

import numpy as np

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)


class SmallDataError(ValueError):
    """Load too large for the damped-iteration smallness condition."""

    def __init__(self, f_norm, threshold):
        super().__init__(
            "dual load norm {:.6e} violates the smallness bound {:.6e}"
            .format(f_norm, threshold))
        self.f_norm = f_norm
        self.threshold = threshold


@dataclass(frozen=True)
class RegularisedLaw:
    """
    Parameters
    ----------
    sigma : float
        Yield stress, nonnegative.
    nu : float
        Viscosity, positive.
    m : int
        Graph approximation exponent; the regularisation index is n = 2^m.
    norm_factor : float
        kappa in {1, sqrt(2)}; effective yield is kappa * sigma.
    """
    sigma: float
    nu: float
    m: int = 0
    norm_factor: float = 1.0

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError("m must be a nonnegative integer")
        if not (abs(self.norm_factor - 1.0) < 1e-12
                or abs(self.norm_factor - _SQRT2) < 1e-12):
            raise ValueError("norm_factor must be 1 or sqrt(2)")

    @property
    def n(self):
        return float(2 ** self.m)

    @property
    def effective_sigma(self):
        return self.norm_factor * self.sigma

    def with_m(self, m):
        return RegularisedLaw(self.sigma, self.nu, m, self.norm_factor)


@dataclass
class IterationConstants:
    """Closed-form constants governing the fixed-point solvers."""
    q_con: float | None = None
    aposteriori_factor: float | None = None
    energy_lower: float | None = None
    energy_upper: float | None = None
    nu_F: float | None = None
    L_F: float | None = None
    R_window: tuple | None = None
    delta_bound: float | None = None
    C_B: float | None = None
    C_P: float | None = None
    extras: dict = field(default_factory=dict)


def tensor_norm(D):
    """Frobenius norm of symmetric 2x2 tensors, batched over leading axes."""
    D = np.asarray(D, dtype=float)
    return np.sqrt(D[..., 0, 0] ** 2 + 2.0 * D[..., 0, 1] ** 2 + D[..., 1, 1] ** 2)


def mu_n(law, t):
    """
    Regularised viscosity coefficient at squared strain modulus t >= 0.

    Decreases monotonically from 2 nu + kappa sigma n at t = 0 towards
    2 nu as t grows.
    """
    t = np.asarray(t, dtype=float)
    return law.effective_sigma / np.sqrt(t + law.n ** -2) + 2.0 * law.nu


def s_n(law, D):
    """Regularised stress (kappa sigma / |D|_n + 2 nu) D, batched over leading axes."""
    D = np.asarray(D, dtype=float)
    coef = mu_n(law, tensor_norm(D) ** 2)
    return coef[..., None, None] * D


def s_star(law, D):
    """
    Measurable selection of the exact yield-stress graph.

    Zero tensor where |D| = 0, otherwise kappa sigma D/|D| + 2 nu D.
    """
    D = np.asarray(D, dtype=float)
    mag = tensor_norm(D)
    out = 2.0 * law.nu * D
    nz = mag > 0.0
    if D.ndim == 2:
        if nz:
            out = out + law.effective_sigma * D / mag
        return out
    scale = np.zeros_like(mag)
    scale[nz] = law.effective_sigma / mag[nz]
    return out + scale[..., None, None] * D


def graph_bound_eta(law, C_graph):
    """Computable bound C * 2^(-2m/3) on the graph approximation error."""
    if C_graph <= 0.0:
        raise ValueError("C_graph must be positive")
    return C_graph * 2.0 ** (-2.0 * law.m / 3.0)


def kacanov_constants(law):
    """
    Contraction and equivalence constants of the frozen-coefficient
    iteration, in terms of s = kappa sigma n and nu.

    q_con is the energy-gap contraction factor, aposteriori_factor maps
    one increment to the error, and the energy bounds sandwich the
    squared error between energy gaps.
    """
    s = law.effective_sigma * law.n
    nu = law.nu
    q_con = 1.0 - nu ** 3 / ((_SQRT3 * s + 2.0 * nu) * (s + 2.0 * nu) ** 2)
    return IterationConstants(
        q_con=q_con,
        aposteriori_factor=(s + 2.0 * nu) / nu,
        energy_lower=0.5 * nu,
        energy_upper=0.5 * (_SQRT3 * s + 2.0 * nu),
    )


def zarantonello_constants(law, C_B, f_dual_norm, R=None, C_P=None):
    """
    Damped-iteration constants under the small-data condition.

    Parameters
    ----------
    C_B : float
        Bound on the convective trilinear form.
    f_dual_norm : float
        Dual norm of the load; must stay below nu^2 / (2 sqrt(2) C_B).
    R : float, optional
        Invariant-ball radius; defaults to the lower window endpoint.

    Raises
    ------
    SmallDataError
        When the load violates the smallness bound.
    """
    nu = law.nu
    s = law.effective_sigma * law.n
    threshold = nu ** 2 / (2.0 * _SQRT2 * C_B)
    if f_dual_norm >= threshold:
        raise SmallDataError(f_dual_norm, threshold)
    disc = math.sqrt(nu ** 2 - 2.0 * _SQRT2 * C_B * f_dual_norm)
    r_lo = (nu - disc) / (2.0 * _SQRT2 * C_B)
    r_hi = (nu + disc) / (2.0 * _SQRT2 * C_B)
    if R is None:
        R = r_lo
    elif not (r_lo <= R <= r_hi):
        raise ValueError("R outside the admissible window [{:.3e}, {:.3e}]"
                         .format(r_lo, r_hi))
    nu_F = nu - _SQRT2 * C_B * R
    L_F = _SQRT3 * s + 2.0 * nu + 2.0 * _SQRT2 * C_B * R
    return IterationConstants(
        nu_F=nu_F,
        L_F=L_F,
        R_window=(r_lo, r_hi),
        delta_bound=2.0 * nu_F / L_F ** 2,
        C_B=C_B,
        C_P=C_P,
    )
