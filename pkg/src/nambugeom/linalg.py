"""Small dense linear algebra: cyclic Jacobi, characteristic polynomials, cofactors."""
from __future__ import annotations

import math

import numpy as np

from .levi_civita import levi_civita

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100


class ConvergenceError(RuntimeError):
    pass


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL,
                max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with ``a @ v[:, k] = w[k] * v[:, k]``, eigenvalues in
    descending order.  Iterates until the off-diagonal Frobenius norm drops
    below ``tol * max(1, |a|)``; raises ``ConvergenceError`` otherwise.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jacobi_eigh needs a square matrix")
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    k = a.shape[0]
    v = np.eye(k)
    scale = max(1.0, float(np.linalg.norm(a)))

    mask = ~np.eye(k, dtype=bool)

    def off(m):
        return float(np.linalg.norm(m[mask]))

    for _ in range(max_sweeps):
        if off(a) <= tol * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        if off(a) > tol * scale:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def charpoly(a: np.ndarray) -> np.ndarray:
    """Coefficients c[0..k] of det(s I - a) = sum_j c[j] s^(k-j), by Faddeev-LeVerrier."""
    a = np.asarray(a, float)
    k = a.shape[0]
    c = np.zeros(k + 1)
    c[0] = 1.0
    mk = np.zeros_like(a)
    for j in range(1, k + 1):
        mk = a @ mk + c[j - 1] * np.eye(k)
        c[j] = -np.trace(a @ mk) / j
    return c


def adjugate(a: np.ndarray) -> np.ndarray:
    """adj(a)[b, a'] from the epsilon-epsilon cofactor expansion.

    adj(g)^{ba} = 1/(k-1)! eps^{a a1..} eps^{b b1..} g_{a1 b1} ... g_{a(k-1) b(k-1)}
    """
    a = np.asarray(a, float)
    k = a.shape[0]
    if k == 1:
        return np.ones((1, 1))
    eps = levi_civita(k)
    letters = "cdefgh"[: k - 1]
    blet = "pqrstu"[: k - 1]
    spec = (f"a{letters},b{blet}," + ",".join(f"{x}{y}" for x, y in zip(letters, blet)) + "->ba")
    return np.einsum(spec, eps, eps, *([a] * (k - 1)), optimize=True) / math.factorial(k - 1)
