"""Minimal 3D rotation algebra: exponential map, left Jacobian, renormalization.

Rotations are plain 3x3 numpy arrays (row-major, right-handed, det +1).
Axis-angle vectors encode the axis as direction and the angle as magnitude.
The hot-path helpers are written in scalar arithmetic: they sit inside the
refinement inner loop where numpy call overhead on 3x3 operands dominates.
"""
import math

import numpy as np

ORTHONORMAL_TOL = 1e-9


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(w) @ v == cross(w, v)."""
    x, y, z = w
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rotation_from_axis_angle(aa: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map; zero vector gives the identity."""
    aa = np.asarray(aa, dtype=float)
    if aa.shape != (3,):
        raise ValueError("axis-angle must be a finite 3-vector")
    x, y, z = aa.tolist()
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError("axis-angle must be a finite 3-vector")
    th2 = x * x + y * y + z * z
    th = math.sqrt(th2)
    if th < 1e-12:
        # second-order Taylor keeps the result orthonormal to machine precision
        a, b = 1.0, 0.5
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th2
    # R = I + a W + b W^2 with W^2 = aa aa^T - th^2 I
    return np.array([
        [1.0 + b * (x * x - th2), -a * z + b * x * y, a * y + b * x * z],
        [a * z + b * x * y, 1.0 + b * (y * y - th2), -a * x + b * y * z],
        [-a * y + b * x * z, a * x + b * y * z, 1.0 + b * (z * z - th2)],
    ])


def axis_angle_from_rotation(R: np.ndarray) -> np.ndarray:
    """Principal log map (angle in [0, pi])."""
    tr = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    th = np.arccos(tr)
    if th < 1e-9:
        return np.zeros(3)
    if np.pi - th < 1e-6:
        # near pi the antisymmetric part degenerates; recover axis from R + I
        A = R + np.eye(3)
        axis = A[:, int(np.argmax(np.diag(A)))]
        axis = axis / np.linalg.norm(axis)
        return axis * th
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (th / (2.0 * np.sin(th)))


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    """Left Jacobian J_l with exp(hat(w + d)) ~= exp(hat(J_l(w) d)) exp(hat(w))."""
    x, y, z = np.asarray(w, dtype=float).tolist()
    th2 = x * x + y * y + z * z
    th = math.sqrt(th2)
    if th < 1e-8:
        a, b = 0.5, 1.0 / 6.0
    else:
        a = (1.0 - math.cos(th)) / th2
        b = (th - math.sin(th)) / (th2 * th)
    # J = I + a W + b W^2 with W^2 = w w^T - th^2 I
    return np.array([
        [1.0 + b * (x * x - th2), -a * z + b * x * y, a * y + b * x * z],
        [a * z + b * x * y, 1.0 + b * (y * y - th2), -a * x + b * y * z],
        [-a * y + b * x * z, a * x + b * y * z, 1.0 + b * (z * z - th2)],
    ])


def apply(R: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a vector (or (..., 3) stack of vectors)."""
    return np.asarray(v, dtype=float) @ np.asarray(R, dtype=float).T


def is_rotation(R: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    (a, b, c), (d, e, f), (g, h, i) = R.tolist()
    for v in (a, b, c, d, e, f, g, h, i):
        if not math.isfinite(v):
            return False
    if abs(a * a + d * d + g * g - 1.0) > tol:   # column norms
        return False
    if abs(b * b + e * e + h * h - 1.0) > tol:
        return False
    if abs(c * c + f * f + i * i - 1.0) > tol:
        return False
    if abs(a * b + d * e + g * h) > tol:         # column orthogonality
        return False
    if abs(a * c + d * f + g * i) > tol:
        return False
    if abs(b * c + e * f + h * i) > tol:
        return False
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return abs(det - 1.0) <= tol


def renormalize_rotation(R: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on rows; removes drift accumulated by composed increments."""
    R = np.asarray(R, dtype=float)
    (a, b, c), (d, e, f), _ = R.tolist()
    n0 = math.sqrt(a * a + b * b + c * c)
    a, b, c = a / n0, b / n0, c / n0
    dot = d * a + e * b + f * c
    d, e, f = d - dot * a, e - dot * b, f - dot * c
    n1 = math.sqrt(d * d + e * e + f * f)
    d, e, f = d / n1, e / n1, f / n1
    return np.array([[a, b, c],
                     [d, e, f],
                     [b * f - c * e, c * d - a * f, a * e - b * d]])
