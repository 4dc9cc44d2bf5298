"""Superquadric geometry: explicit/implicit forms, radial distance and its gradient."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePoint
from .rotation import euler_to_matrix, euler_to_matrix_derivatives, wrap_angles

SIZE_MIN = 0.1
SHAPE_MIN = 0.1
SHAPE_MAX = 1.9
F_FLOOR = 1e-12
CENTER_EPS = 1e-12

# Column layout of the 11-vector [a, eps, p, r].
A_SLICE = slice(0, 3)
EPS_SLICE = slice(3, 5)
P_SLICE = slice(5, 8)
R_SLICE = slice(8, 11)
N_PARAMS = 11


def _vec(v, n: int) -> np.ndarray:
    out = np.array(v, dtype=float).reshape(n)
    return out


@dataclass(eq=False)
class SuperquadricParams:
    """Size ``a`` (m), shape ``eps``, world position ``p`` (m), Euler orientation ``r`` (rad)."""

    a: np.ndarray = field(default_factory=lambda: np.ones(3))
    eps: np.ndarray = field(default_factory=lambda: np.ones(2))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.a = _vec(self.a, 3)
        self.eps = _vec(self.eps, 2)
        self.p = _vec(self.p, 3)
        self.r = _vec(self.r, 3)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.eps, self.p, self.r])

    @classmethod
    def from_vector(cls, x) -> "SuperquadricParams":
        x = np.asarray(x, dtype=float)
        return cls(a=x[A_SLICE], eps=x[EPS_SLICE], p=x[P_SLICE], r=x[R_SLICE])

    def replace(self, **kw) -> "SuperquadricParams":
        d = dict(a=self.a, eps=self.eps, p=self.p, r=self.r)
        d.update(kw)
        return SuperquadricParams(**d)

    def wrapped(self) -> "SuperquadricParams":
        return self.replace(r=wrap_angles(self.r))

    def is_valid(self) -> bool:
        return bool(np.all(self.a >= SIZE_MIN) and np.all(self.eps >= SHAPE_MIN)
                    and np.all(self.eps <= SHAPE_MAX) and np.all(np.isfinite(self.to_vector())))

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.r)

    @property
    def volume_term(self) -> float:
        return float(np.prod(self.a))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("a", "eps", "p", "r")}

    @classmethod
    def from_dict(cls, d: dict) -> "SuperquadricParams":
        return cls(a=d["a"], eps=d["eps"], p=d["p"], r=d["r"])

    def __repr__(self):
        f = lambda v: np.array2string(v, precision=4, separator=", ")
        return f"SuperquadricParams(a={f(self.a)}, eps={f(self.eps)}, p={f(self.p)}, r={f(self.r)})"


def spow(x, e):
    """Sign-preserving power ``sign(x) * |x|**e``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** e


def surface_point(params: SuperquadricParams, eta, omega) -> np.ndarray:
    """Explicit surface point in SQ coordinates; broadcasts over ``eta``/``omega``."""
    e1, e2 = params.eps
    ax, ay, az = params.a
    ce, se = spow(np.cos(eta), e1), spow(np.sin(eta), e1)
    co, so = spow(np.cos(omega), e2), spow(np.sin(omega), e2)
    return np.stack(np.broadcast_arrays(ax * ce * co, ay * ce * so, az * se), axis=-1)


def implicit_value(params: SuperquadricParams, t) -> np.ndarray:
    """Inside-outside function F; 1 on the surface, <1 inside, >1 outside."""
    t = np.asarray(t, dtype=float)
    e1, e2 = params.eps
    ax, ay, az = params.a
    xy = np.abs(t[..., 0] / ax) ** (2.0 / e2) + np.abs(t[..., 1] / ay) ** (2.0 / e2)
    return xy ** (e2 / e1) + np.abs(t[..., 2] / az) ** (2.0 / e1)


def radial_distance(params: SuperquadricParams, t) -> np.ndarray:
    """Radial distance ``|t| (F^(-eps1/2) - 1)``: positive inside, negative outside."""
    t = np.asarray(t, dtype=float)
    n = np.linalg.norm(t, axis=-1)
    if np.any(n < CENTER_EPS):
        raise DegeneratePoint("radial distance undefined at the superquadric center")
    F = np.maximum(implicit_value(params, t), F_FLOOR)
    return n * (F ** (-params.eps[0] / 2.0) - 1.0)


def world_to_sq(params: SuperquadricParams, t_world) -> np.ndarray:
    t_world = np.asarray(t_world, dtype=float)
    return (t_world - params.p) @ params.rotation


def sq_to_world(params: SuperquadricParams, t_sq) -> np.ndarray:
    t_sq = np.asarray(t_sq, dtype=float)
    return t_sq @ params.rotation.T + params.p


def surface_grid_local(params: SuperquadricParams, n_eta: int, n_omega: int) -> np.ndarray:
    eta = np.linspace(-np.pi / 2, np.pi / 2, n_eta)
    omega = np.linspace(-np.pi, np.pi, n_omega)
    E, W = np.meshgrid(eta, omega, indexing="ij")
    return surface_point(params, E, W).reshape(-1, 3)


def sample_surface_grid(params: SuperquadricParams, n_eta: int = 64, n_omega: int = 64) -> np.ndarray:
    """Uniform (eta, omega) grid of surface points, returned in world coordinates."""
    if n_eta < 2 or n_omega < 3:
        raise ValueError("need n_eta >= 2 and n_omega >= 3")
    return sq_to_world(params, surface_grid_local(params, n_eta, n_omega))


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), 0.0)


def _safe_div(num, den):
    return np.where(den != 0, num / np.where(den != 0, den, 1.0), 0.0)


def radial_distance_gradient(params: SuperquadricParams, t_world):
    """Analytic gradient of the radial distance of world points.

    Returns ``(value, d_xi, d_world)`` with shapes ``(n,)``, ``(n, 11)`` and
    ``(n, 3)``. Derivatives are taken through the world-to-SQ transform.
    """
    w = np.atleast_2d(np.asarray(t_world, dtype=float))
    R = params.rotation
    dR = euler_to_matrix_derivatives(params.r)
    d = w - params.p
    t = d @ R
    e1, e2 = params.eps
    ax, ay, az = params.a
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    n = np.linalg.norm(t, axis=1)
    if np.any(n < CENTER_EPS):
        raise DegeneratePoint("radial distance undefined at the superquadric center")

    qx, qy, qz = np.abs(tx / ax), np.abs(ty / ay), np.abs(tz / az)
    u = qx ** (2.0 / e2)
    v = qy ** (2.0 / e2)
    S = u + v
    Q = S ** (e2 / e1)
    wz = qz ** (2.0 / e1)
    F_raw = Q + wz
    clamped = F_raw < F_FLOOR
    F = np.maximum(F_raw, F_FLOOR)
    Fp = F ** (-e1 / 2.0)
    G = n * (Fp - 1.0)

    # dF/dt and dF/d(a, eps)
    QoS = _safe_div(Q, S)
    dF_dtx = (2.0 / e1) * QoS * _safe_div(u, tx)
    dF_dty = (2.0 / e1) * QoS * _safe_div(v, ty)
    dF_dtz = (2.0 / e1) * _safe_div(wz, tz)
    dF_dax = -(2.0 / e1) * QoS * u / ax
    dF_day = -(2.0 / e1) * QoS * v / ay
    dF_daz = -(2.0 / e1) * wz / az
    lnS = _safe_log(S)
    du_de2 = u * _safe_log(qx) * (-2.0 / e2**2)
    dv_de2 = v * _safe_log(qy) * (-2.0 / e2**2)
    dF_de1 = -Q * lnS * e2 / e1**2 - (2.0 / e1**2) * wz * _safe_log(qz)
    dF_de2 = Q * lnS / e1 + (e2 / e1) * QoS * (du_de2 + dv_de2)

    dG_dF = np.where(clamped, 0.0, n * (-e1 / 2.0) * F ** (-e1 / 2.0 - 1.0))
    dG_dt = (t / n[:, None]) * (Fp - 1.0)[:, None] + dG_dF[:, None] * np.stack(
        [dF_dtx, dF_dty, dF_dtz], axis=1)

    d_xi = np.empty((len(w), N_PARAMS))
    d_xi[:, 0] = dG_dF * dF_dax
    d_xi[:, 1] = dG_dF * dF_day
    d_xi[:, 2] = dG_dF * dF_daz
    d_xi[:, 3] = dG_dF * dF_de1 + n * Fp * (-0.5 * np.log(F))
    d_xi[:, 4] = dG_dF * dF_de2
    # t = R^T (w - p)
    d_xi[:, P_SLICE] = -dG_dt @ R.T
    for k in range(3):
        dt_dr = d @ dR[k]
        d_xi[:, 8 + k] = np.sum(dG_dt * dt_dr, axis=1)
    d_world = dG_dt @ R.T
    return G, d_xi, d_world
