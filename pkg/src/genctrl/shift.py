"""Analytic generalization of an optimal pulse to new parameter values.

If the change of the free Hamiltonian dH = H0(x') - H0(x) lies in the span
of the control operators, dH = sum_i du_i H_i, then the pulse u_i - du_i at
x' reproduces the trajectory of u_i at x slice by slice.  Parameter
derivatives transform with a 3 x 3 matrix R, so F(x') = R^T F(x) R and the
CR bound at x' follows without any new optimization.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import field_jacobian
from .fisher import cr_bound, evaluate

__all__ = [
    "FEASIBILITY_TOL",
    "POLE_TOL",
    "ShiftDecomposition",
    "TransformMatrix",
    "Generalization",
    "BoundViolationError",
    "InfeasibleShiftError",
    "SingularTransformError",
    "decompose_shift",
    "shift_pulse",
    "transform_matrix",
    "predict_bound",
    "direction_coefficients",
    "predict_bound_direction",
    "generalize",
]

FEASIBILITY_TOL = 1e-10
POLE_TOL = 1e-8


class BoundViolationError(ValueError):
    """Shifted pulse leaves [-u_max, u_max]."""


class InfeasibleShiftError(ValueError):
    """Hamiltonian shift is not in the span of the control operators."""


class SingularTransformError(ValueError):
    """Jacobian of the parametrization is singular (field at a pole or B = 0)."""


@dataclass
class ShiftDecomposition:
    coefficients: np.ndarray
    residual_norm: float

    @property
    def feasible(self):
        return self.residual_norm <= FEASIBILITY_TOL


@dataclass
class TransformMatrix:
    R: np.ndarray
    jacobian_pair: Optional[tuple] = None


@dataclass
class Generalization:
    decomposition: ShiftDecomposition
    shifted_pulse: Optional[np.ndarray]
    direct_bound: float
    predicted_bound: float
    direct_cfim: Optional[np.ndarray] = None
    predicted_cfim: Optional[np.ndarray] = None

    @property
    def feasible(self):
        return self.decomposition.feasible


def _as_real_columns(ops):
    # Frobenius inner product on Hermitian matrices == Euclidean product of (Re, Im) entries
    return np.column_stack([np.concatenate([o.real.ravel(), o.imag.ravel()]) for o in ops])


def decompose_shift(scenario, x, x_new):
    """Least-squares coefficients du with H0(x') - H0(x) ~ sum_i du_i H_i."""
    dh = np.asarray(scenario.free_hamiltonian(np.asarray(x_new, float))
                    - scenario.free_hamiltonian(np.asarray(x, float)))
    a = _as_real_columns(scenario.control_ops)
    b = np.concatenate([dh.real.ravel(), dh.imag.ravel()])
    coef = np.linalg.lstsq(a, b, rcond=None)[0]
    resid = dh - sum(c * h for c, h in zip(coef, scenario.control_ops))
    return ShiftDecomposition(coefficients=coef, residual_norm=float(np.linalg.norm(resid)))


def shift_pulse(pulse, decomposition, u_max=np.inf):
    """u_i -> u_i - du_i on every slice.

    Clipping would break the exact cancellation, so leaving the bound raises.
    """
    if not decomposition.feasible:
        raise InfeasibleShiftError(
            f"shift residual {decomposition.residual_norm:.3e} exceeds {FEASIBILITY_TOL}")
    out = np.asarray(pulse, dtype=float) - decomposition.coefficients[:, None]
    worst = np.max(np.abs(out)) if out.size else 0.0
    if worst > u_max * (1 + 1e-12):
        raise BoundViolationError(f"shifted amplitude {worst:.4f} exceeds bound {u_max}")
    return out


def _example1_jacobian(x):
    b, th, _ = x
    if abs(np.sin(th)) < POLE_TOL or b == 0:
        raise SingularTransformError(f"field parametrization singular at {tuple(x)}")
    return field_jacobian(x)


def transform_matrix(scenario, x, x_new):
    """R with d/dx'_a L(x') = sum_b d/dx_b L(x) R_ba.

    For the magnetic-field scenario R = C(x)^{-1} C(x') with C the Jacobian of
    the Cartesian field components.  Otherwise R is fitted from the
    derivative operators and must reproduce them exactly.
    """
    x = np.asarray(x, dtype=float)
    x_new = np.asarray(x_new, dtype=float)
    if scenario.kind.startswith("example1"):
        c_old = _example1_jacobian(x)
        c_new = _example1_jacobian(x_new)
        return TransformMatrix(R=np.linalg.solve(c_old, c_new), jacobian_pair=(c_old, c_new))
    old = _as_real_columns(scenario.free_derivatives(x))
    new = _as_real_columns(scenario.free_derivatives(x_new))
    r = np.linalg.lstsq(old, new, rcond=None)[0]
    if np.linalg.norm(old @ r - new) > FEASIBILITY_TOL or np.linalg.cond(r) > 1e10:
        raise SingularTransformError("derivative operators at x' are not a linear map of those at x")
    return TransformMatrix(R=r)


def predict_bound(f_at_x, transform):
    """F(x') = R^T F(x) R and tr F(x')^{-1} = tr[R^{-1} F(x)^{-1} R^{-T}]."""
    r = transform.R if isinstance(transform, TransformMatrix) else np.asarray(transform, float)
    f = np.asarray(f_at_x, dtype=float)
    f_new = r.T @ f @ r
    if not np.isfinite(cr_bound(f)):
        return f_new, np.inf
    r_inv = np.linalg.inv(r)
    return f_new, float(np.trace(r_inv @ np.linalg.inv(f) @ r_inv.T))


def direction_coefficients(theta, phi, theta_new, phi_new):
    """(C1, C2, C3) weighting the diagonal of F^{-1} after a field-direction change at fixed B."""
    s_new = np.sin(theta_new)
    if abs(s_new) < POLE_TOL:
        raise SingularTransformError(f"theta' = {theta_new} is at a pole")
    csc2 = 1.0 / s_new**2
    dphi = phi_new - phi
    c, s = np.cos(theta) ** 2, np.sin(theta) ** 2
    cd, sd = np.cos(dphi) ** 2, np.sin(dphi) ** 2
    c1 = c + s * (cd + csc2 * sd)
    c2 = s + c * (cd + csc2 * sd)
    c3 = s * csc2 * cd + s * sd
    return c1, c2, c3


def predict_bound_direction(f_at_x, theta, phi, theta_new, phi_new):
    """Closed form C1 dB^2 + C2 dtheta^2 + C3 dphi^2 from the diagonal of F^{-1}."""
    f = np.asarray(f_at_x, dtype=float)
    if not np.isfinite(cr_bound(f)):
        return np.inf
    d = np.diag(np.linalg.inv(f))
    return float(np.dot(direction_coefficients(theta, phi, theta_new, phi_new), d))


def generalize(scenario, x, x_new, pulse):
    """Shift ``pulse`` (optimal at x) to x' and compare direct evaluation with prediction."""
    dec = decompose_shift(scenario, x, x_new)
    if not dec.feasible:
        return Generalization(dec, None, np.nan, np.nan)
    shifted = shift_pulse(pulse, dec, scenario.u_max)
    at_x = evaluate(scenario.with_params(x), pulse, series=False)
    at_new = evaluate(scenario.with_params(x_new), shifted, series=False)
    f_pred, b_pred = predict_bound(at_x.cfim, transform_matrix(scenario, x, x_new))
    return Generalization(
        decomposition=dec,
        shifted_pulse=shifted,
        direct_bound=at_new.cr_bound,
        predicted_bound=b_pred,
        direct_cfim=at_new.cfim,
        predicted_cfim=f_pred,
    )
