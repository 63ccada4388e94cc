"""Damped Newton ascent shared by the parametric and Cox fitters."""

import numpy as np

from .exceptions import ConvergenceError

GRAD_TOL = 1e-6
MAX_ITER = 100
MAX_HALVINGS = 20
ROUNDOFF = 1e-11


def _ascent_direction(grad, hess):
    neg = -hess
    ridge = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(neg))))) if neg.size else 1.0
    for _ in range(30):
        try:
            chol = np.linalg.cholesky(neg + ridge * np.eye(neg.shape[0]))
        except np.linalg.LinAlgError:
            ridge = max(2.0 * ridge, 1e-8 * scale)
            continue
        return np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
    return grad / scale


def newton_maximize(objective, theta0, *, grad_tol=GRAD_TOL, max_iter=MAX_ITER,
                    max_halvings=MAX_HALVINGS, check=None, step_tol=None):
    """Maximize ``objective(theta) -> (value, grad, hess)``.

    Steps are halved until the objective does not decrease. Once the
    predicted Newton gain is below the floating-point resolution of the
    objective, steps are judged by the gradient instead, and the iterate
    is returned when no step improves it. The reported gradient can then
    sit slightly above ``grad_tol``. ``check`` is called with each
    accepted iterate and may raise.

    With ``step_tol`` set, convergence also requires the Newton step to
    be shorter than ``step_tol``. On a monotone likelihood the gradient
    vanishes while the steps do not, so this keeps divergent parameters
    moving until ``check`` can flag them.

    Returns
    -------
    theta, value, grad, n_iter, trace
    """
    theta = np.asarray(theta0, dtype=float).copy()
    value, grad, hess = objective(theta)
    if not np.isfinite(value):
        raise ConvergenceError("objective is not finite at the starting point")
    trace = [value]
    for it in range(max_iter + 1):
        step = _ascent_direction(grad, hess)
        if np.max(np.abs(grad), initial=0.0) <= grad_tol and (
                step_tol is None or np.max(np.abs(step), initial=0.0) <= step_tol):
            return theta, value, grad, it, trace
        if it == max_iter:
            break
        # near the optimum the predicted gain drops below the objective's
        # floating-point resolution; allow that much slack so Newton can
        # still polish the gradient
        floor = ROUNDOFF * (1.0 + abs(value))
        slack = floor if float(grad @ step) <= floor else 0.0
        for _ in range(max_halvings + 1):
            cand = theta + step
            c_value, c_grad, c_hess = objective(cand)
            if np.isfinite(c_value) and c_value >= value - slack:
                break
            step = step / 2.0
        else:
            if slack:
                return theta, value, grad, it, trace
            raise ConvergenceError(
                f"step-halving failed at iteration {it} (gradient {np.max(np.abs(grad)):.3g})",
                trace)
        if slack and np.max(np.abs(c_grad)) >= np.max(np.abs(grad)) and (
                step_tol is None or np.max(np.abs(step)) <= step_tol):
            return theta, value, grad, it, trace
        theta, value, grad, hess = cand, c_value, c_grad, c_hess
        trace.append(value)
        if check is not None:
            check(theta)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (gradient {np.max(np.abs(grad)):.3g})",
        trace)


def standardize(x):
    """Column means, scales and a mask of non-constant columns."""
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    varying = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
    sd = np.where(varying, sd, 1.0)
    return mean, sd, varying
