"""Levenberg-Marquardt least squares with parameter masking and soft box penalties."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteResidual, SingularNormalMatrix

log = logging.getLogger(__name__)

LAMBDA_MAX = 1e16


@dataclass
class ParameterVector:
    values: np.ndarray
    mask: Optional[np.ndarray] = None  # True = free
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).ravel()
        k = len(self.values)
        self.mask = np.ones(k, bool) if self.mask is None else np.array(self.mask, bool).ravel()
        self.lower = np.full(k, -np.inf) if self.lower is None else np.array(self.lower, float).ravel()
        self.upper = np.full(k, np.inf) if self.upper is None else np.array(self.upper, float).ravel()
        if not (len(self.mask) == len(self.lower) == len(self.upper) == k):
            raise ValueError("mask/bounds length mismatch")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def with_values(self, values) -> "ParameterVector":
        return replace(self, values=np.array(values, dtype=float))

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass
class LmSettings:
    initial_lambda: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    max_iterations: int = 200
    cost_rel_tol: float = 1e-8
    step_tol: float = 1e-10
    fd_step: float = 1e-6  # h = max(fd_step, fd_step * |x|)
    penalty_weight: float = 1.0
    # "append": one extra residual sqrt(c_p * sum rho); "add": c_p * sum rho added to every residual
    penalty_mode: str = "append"

    def __post_init__(self):
        if not (self.lambda_up > 1.0 > self.lambda_down > 0.0):
            raise ValueError("need lambda_up > 1 > lambda_down > 0")
        if min(self.initial_lambda, self.max_iterations, self.cost_rel_tol,
               self.step_tol, self.fd_step) <= 0 or self.penalty_weight < 0:
            raise ValueError("LM settings must be positive")
        if self.penalty_mode not in ("append", "add"):
            raise ValueError(f"unknown penalty mode {self.penalty_mode!r}")


@dataclass
class LmResult:
    x: np.ndarray
    cost_history: list = field(default_factory=list)
    termination: str = ""
    iterations: int = 0

    @property
    def cost(self) -> float:
        return self.cost_history[-1]


def _violation(values, lower, upper):
    """Per-parameter distance to the violated bound and its sign derivative."""
    below = values < lower
    above = values > upper
    rho = np.where(below, lower - values, np.where(above, values - upper, 0.0))
    drho = np.where(below, -1.0, np.where(above, 1.0, 0.0))
    return rho, drho


def constraint_penalty(x: ParameterVector, c_p: float) -> float:
    """``c_p`` times the summed distance of each parameter outside its bounds."""
    rho, _ = _violation(x.values, x.lower, x.upper)
    return float(c_p * rho.sum())


def numeric_jacobian(residual_fn: Callable, x: ParameterVector, fd_step: float = 1e-6,
                     executor=None) -> np.ndarray:
    """Central-difference Jacobian restricted to the free parameters.

    Each column is an independent pair of evaluations, so ``executor`` (any
    ``concurrent.futures`` executor) may evaluate them concurrently; columns are
    assembled in parameter order regardless.
    """
    base = x.values
    free = x.free

    def column(i):
        h = max(fd_step, fd_step * abs(base[i]))
        xp = base.copy()
        xm = base.copy()
        xp[i] += h
        xm[i] -= h
        rp = np.asarray(residual_fn(xp), dtype=float)
        rm = np.asarray(residual_fn(xm), dtype=float)
        return (rp - rm) / (2.0 * h)

    cols = list(executor.map(column, free)) if executor is not None else [column(i) for i in free]
    if not cols:
        m = len(np.atleast_1d(residual_fn(base)))
        return np.zeros((m, 0))
    J = np.column_stack(cols)
    if not np.all(np.isfinite(J)):
        raise NonFiniteResidual("non-finite finite-difference Jacobian")
    return J


class _Problem:
    """Residual/Jacobian pair with the bound penalty folded in."""

    def __init__(self, residual_fn, jacobian_fn, x0: ParameterVector, settings: LmSettings,
                 executor=None):
        self.residual_fn = residual_fn
        self.jacobian_fn = jacobian_fn
        self.x0 = x0
        self.s = settings
        self.executor = executor

    def residuals(self, values):
        r = np.atleast_1d(np.asarray(self.residual_fn(values), dtype=float))
        rho, _ = _violation(values, self.x0.lower, self.x0.upper)
        pen = self.s.penalty_weight * rho.sum()
        if self.s.penalty_mode == "add":
            return r + pen
        return np.append(r, np.sqrt(pen))

    def jacobian(self, values, r_aug):
        free = self.x0.free
        if self.jacobian_fn is None:
            return numeric_jacobian(self.residuals, self.x0.with_values(values),
                                    self.s.fd_step, self.executor)
        J = np.asarray(self.jacobian_fn(values), dtype=float)[:, free]
        rho, drho = _violation(values, self.x0.lower, self.x0.upper)
        c = self.s.penalty_weight
        if self.s.penalty_mode == "add":
            J = J + c * drho[free][None, :]
        else:
            root = r_aug[-1]
            row = c * drho[free] / (2.0 * root) if root > 0 else np.zeros(len(free))
            J = np.vstack([J, row])
        if not np.all(np.isfinite(J)):
            raise NonFiniteResidual("non-finite Jacobian")
        return J


def levenberg_marquardt(residual_fn: Callable, jacobian_fn: Optional[Callable],
                        x0: ParameterVector, settings: LmSettings | None = None,
                        executor=None) -> LmResult:
    """Minimize the sum of squared residuals over the free entries of ``x0``.

    ``residual_fn`` and ``jacobian_fn`` take the full parameter vector; the
    Jacobian must cover all K columns (only free ones are used). Pass
    ``jacobian_fn=None`` for central finite differences. The bound penalty of
    ``x0`` is folded into the residuals according to ``settings.penalty_mode``.
    """
    s = settings or LmSettings()
    prob = _Problem(residual_fn, jacobian_fn, x0, s, executor)
    x = x0.values.copy()
    free = x0.free
    r = prob.residuals(x)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual("residuals are not finite at the initial point")
    cost = float(r @ r)
    history = [cost]
    if len(free) == 0:
        return LmResult(x, history, "no_free_parameters", 0)

    lam = s.initial_lambda
    reason = "max_iterations"
    it = 0
    while it < s.max_iterations:
        it += 1
        J = prob.jacobian(x, r)
        g = J.T @ r
        H = J.T @ J
        diag = np.diag(H).copy()
        floor = 1e-12 * max(1.0, diag.max(initial=0.0))
        diag = np.maximum(diag, floor)
        accepted = False
        while True:
            A = H + lam * np.diag(diag)
            try:
                delta = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                lam *= s.lambda_up
                if lam > LAMBDA_MAX:
                    raise SingularNormalMatrix("damped normal equations are singular")
                continue
            step_norm = float(np.linalg.norm(delta))
            if step_norm < s.step_tol:
                reason = "step_tol"
                break
            x_new = x.copy()
            x_new[free] += delta
            r_new = prob.residuals(x_new)
            with np.errstate(over="ignore"):
                cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                accepted = True
                break
            lam *= s.lambda_up
            if lam > LAMBDA_MAX:
                reason = "no_improvement"
                break
        if not accepted:
            break
        rel = (cost - cost_new) / cost if cost > 0 else 0.0
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam * s.lambda_down, 1e-15)
        if cost == 0.0:
            reason = "zero_cost"
            break
        if rel < s.cost_rel_tol:
            reason = "cost_rel_tol"
            break
        if step_norm < s.step_tol:
            reason = "step_tol"
            break
    log.debug("LM stopped after %d iterations: %s (cost %.3g)", it, reason, cost)
    return LmResult(x, history, reason, it)
