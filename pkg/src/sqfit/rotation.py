"""Euler-angle rotations shared by superquadric and camera poses.

Angles are stored as ``(r_x, r_y, r_z)`` and composed intrinsically Z-Y-X,
``R = Rz(r_z) @ Ry(r_y) @ Rx(r_x)``. ``R`` maps body-frame vectors into the
world frame.
"""

from __future__ import annotations

import math

import numpy as np


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _dry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def euler_to_matrix(r) -> np.ndarray:
    rx, ry, rz = (float(v) for v in r)
    return _rz(rz) @ _ry(ry) @ _rx(rx)


def euler_to_matrix_derivatives(r) -> np.ndarray:
    """Return ``dR/dr_k`` stacked as a ``(3, 3, 3)`` array indexed by k."""
    rx, ry, rz = (float(v) for v in r)
    Rx, Ry, Rz = _rx(rx), _ry(ry), _rz(rz)
    return np.stack([
        Rz @ Ry @ _drx(rx),
        Rz @ _dry(ry) @ Rx,
        _drz(rz) @ Ry @ Rx,
    ])


def matrix_to_euler(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix`; at gimbal lock ``r_x`` is set to 0."""
    R = np.asarray(R, dtype=float)
    sy = -R[2, 0]
    if abs(sy) >= 1.0 - 1e-12:
        ry = math.copysign(math.pi / 2, sy)
        rx = 0.0
        rz = math.atan2(-R[0, 1], R[1, 1])
    else:
        ry = math.asin(sy)
        rx = math.atan2(R[2, 1], R[2, 2])
        rz = math.atan2(R[1, 0], R[0, 0])
    return wrap_angles(np.array([rx, ry, rz]))


def wrap_angles(r) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    r = np.asarray(r, dtype=float)
    w = np.mod(r + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)
