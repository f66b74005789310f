"""Textbook submanifold geometry, computed without any brackets.

This is the reference side of every identity check: induced metric,
Levi-Civita connection and curvature of the submanifold, a Gram-Schmidt
normal frame differentiated through jets, second fundamental forms,
Weingarten maps, mean curvature, Gauss-equation Ricci map and the normal
connection coefficients.

Index conventions: ``e[a, i] = d_a x^i``; Christoffel ``G[a, b, c] = G^a_bc``;
Riemann ``R[a, b, c, d] = R^a_bcd`` with ``R(d_c, d_d) d_b = R^a_bcd d_a``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import PointFrame
from .jets import Jet, jet_einsum, jet_matinv

RANK_TOL = 1e-10


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    det_g: float
    dg: np.ndarray    # [a, b, c] = d_c g_ab
    ddg: np.ndarray   # [a, b, c, d] = d_c d_d g_ab
    g_jets: Jet       # (n, n), order 2


@dataclass(frozen=True, eq=False)
class Curvature:
    christoffel: np.ndarray   # G^a_bc
    dchristoffel: np.ndarray  # [a, b, c, e] = d_e G^a_bc
    riemann: np.ndarray       # R^a_bcd
    ricci_tensor: np.ndarray  # R_bd
    ricci_map: np.ndarray     # R^p_b
    scalar: float


@dataclass(frozen=True, eq=False)
class NormalFrame:
    normals: np.ndarray   # (p, m)
    derivs: np.ndarray    # (p, n, m): (nabla-bar_a N_A)^i
    normal_jets: Jet      # (p, m), order 2
    deriv_jets: Jet       # (p, n, m), order 1
    pivots: tuple[int, ...]

    def flipped(self, signs) -> "NormalFrame":
        s = np.asarray(signs, float)
        return NormalFrame(self.normals * s[:, None], self.derivs * s[:, None, None],
                           self.normal_jets * s[:, None], self.deriv_jets * s[:, None, None],
                           self.pivots)

    def aligned_to(self, z: np.ndarray, gbar: np.ndarray) -> "NormalFrame":
        """Hypersurfaces: flip the normal so that it agrees with ``z``."""
        if len(self.normals) != 1:
            raise ValueError("alignment is defined for hypersurfaces only")
        s = np.sign(self.normals[0] @ gbar @ z)
        return self if s >= 0 else self.flipped([-1.0])


@dataclass(frozen=True, eq=False)
class ShapeData:
    h: np.ndarray        # (p, n, n)
    W: np.ndarray        # (p, n, n): W[A, a, b] = (W_A)^a_b
    H: np.ndarray        # (m,)
    ricci: np.ndarray    # (n, n) Gauss-equation Ricci map R^p_b
    scalar_R: float
    K: float | None
    Dcoef: np.ndarray    # (n, p, p): [a, A, B] = gbar(nabla-bar_a N_A, N_B)
    det_W: np.ndarray    # (p,)
    nabla_W: np.ndarray  # (p, n, n, n): [A, a, c, b] = (nabla_a W_A)^c_b
    nabla_h: np.ndarray  # (p, n, n, n): [A, a, b, c] = nabla_a h_bc
    cm_W: np.ndarray     # (p, n, n, m): curly-W_A(e_a, e_b) as ambient vectors


def induced_metric(frame: PointFrame) -> MetricData:
    e = frame.e_jets
    gbar = frame.gbar_jets.truncate(2)
    g = jet_einsum("ai,ib->ab", e, jet_einsum("ij,bj->ib", gbar, e))
    g0 = g.value
    g_inv = np.linalg.solve(g0, np.eye(frame.n))
    dg = g.grad()
    ddg = g.hessian()
    return MetricData(g=g0, g_inv=g_inv, det_g=float(np.linalg.det(g0)), dg=dg, ddg=ddg, g_jets=g)


def sigma_connection_curvature(metric: MetricData) -> Curvature:
    g_inv, dg, ddg = metric.g_inv, metric.dg, metric.ddg
    # first-kind symbols G_dbc = (d_b g_dc + d_c g_db - d_d g_bc) / 2
    low = 0.5 * (np.einsum("dcb->dbc", dg) + dg - np.einsum("bcd->dbc", dg))
    dlow = 0.5 * (np.einsum("dcbe->dbce", ddg) + ddg - np.einsum("bcde->dbce", ddg))
    gam = np.einsum("ad,dbc->abc", g_inv, low)
    dginv = -np.einsum("ap,pqe,qd->ade", g_inv, dg, g_inv)
    dgam = np.einsum("ade,dbc->abce", dginv, low) + np.einsum("ad,dbce->abce", g_inv, dlow)
    riem = (np.einsum("adbc->abcd", dgam) - np.einsum("acbd->abcd", dgam)
            + np.einsum("ace,edb->abcd", gam, gam) - np.einsum("ade,ecb->abcd", gam, gam))
    ric = np.einsum("abad->bd", riem)
    ric_map = g_inv @ ric
    return Curvature(gam, dgam, riem, ric, ric_map, float(np.trace(ric_map)))


def _ip(v: Jet, w: Jet, gbar: Jet) -> Jet:
    return jet_einsum("i,i->", v, jet_einsum("ij,j->i", gbar, w))


def gram_schmidt_normals(frame: PointFrame) -> NormalFrame:
    """Complete the tangent frame with coordinate vectors and orthonormalize under gbar.

    The completion vector is the coordinate direction with the largest residual
    norm (ties to the lowest index).  The last normal is flipped if needed so
    that det(e_1..e_n, N_1..N_p) > 0.
    """
    n, m, p = frame.n, frame.m, frame.p
    gbar = frame.gbar_jets.truncate(2)
    ortho: list[Jet] = []
    for a in range(n):
        v = frame.e_jets[a]
        for w in ortho:
            v = v - w * _ip(v, w, gbar)
        norm = _ip(v, v, gbar)
        if norm.value <= RANK_TOL ** 2:
            raise RankDeficiencyError("tangent vectors are linearly dependent")
        ortho.append(v * norm.sqrt().reciprocal())

    normals: list[Jet] = []
    pivots = []
    for _ in range(p):
        best, best_norm, best_k = None, -1.0, -1
        for k in range(m):
            v = Jet.constant(np.eye(m)[k], n, 2)
            for w in ortho + normals:
                v = v - w * _ip(v, w, gbar)
            nv = _ip(v, v, gbar)
            if nv.value > best_norm:
                best, best_norm, best_k = (v, nv), nv.value, k
        if best_norm <= RANK_TOL ** 2:
            raise RankDeficiencyError("residual completion vector vanishes")
        v, nv = best
        normals.append(v * nv.sqrt().reciprocal())
        pivots.append(best_k)

    N = Jet.stack(normals)
    orient = np.linalg.det(np.vstack([frame.tangent_basis, N.value]))
    if orient < 0:
        N = N * np.r_[np.ones(p - 1), -1.0][:, None]

    # (nabla-bar_a N)^i = d_a N^i + Gamma^i_jk e_a^j N^k
    dN = N.gradient_jets().moveaxis(-1, 1)  # (p, n, m), order 1
    gam = frame.gamma_bar_jets.truncate(1)
    conn = jet_einsum("ijk,aj->aik", gam, frame.e_jets.truncate(1))
    DN = dN + jet_einsum("aik,Ak->Aai", conn, N.truncate(1))
    return NormalFrame(N.value, DN.value, N, DN, tuple(pivots))


def shape_data(frame: PointFrame, metric: MetricData, normals: NormalFrame,
               curvature: Curvature | None = None) -> ShapeData:
    n, m, p = frame.n, frame.m, frame.p
    curvature = curvature or sigma_connection_curvature(metric)
    e = frame.tangent_basis
    G = frame.ambient_value
    N, DN = normals.normals, normals.derivs
    g_inv = metric.g_inv

    h = -np.einsum("ai,ij,Abj->Aab", e, G, DN)
    W = np.einsum("ac,Acb->Aab", g_inv, h)
    trW = np.einsum("Aaa->A", W)
    H = (trW @ N) / n

    ricci = ambient_ricci_term(frame, g_inv) + sum(trW[A] * W[A] - W[A] @ W[A] for A in range(p))
    scalar = float(np.trace(ricci))
    K = scalar / 2 if n == 2 else None
    Dcoef = np.einsum("Aai,ij,Bj->aAB", DN, G, N)
    det_W = np.linalg.det(W)

    # Weingarten jets to order 1 for covariant derivatives
    e1 = frame.e_jets.truncate(1)
    G1 = frame.gbar_jets.truncate(1)
    h_j = -jet_einsum("ai,Abi->Aab", e1, jet_einsum("ij,Abj->Abi", G1, normals.deriv_jets))
    ginv_j = jet_matinv(metric.g_jets.truncate(1))
    W_j = jet_einsum("ac,Acb->Aab", ginv_j, h_j)
    dW = W_j.grad()  # [A, c, b, a] = d_a W^c_b
    dh = h_j.grad()  # [A, b, c, a] = d_a h_bc
    gam = curvature.christoffel
    nabla_W = (np.einsum("Acba->Aacb", dW) + np.einsum("cad,Adb->Aacb", gam, W)
               - np.einsum("dab,Acd->Aacb", gam, W))
    nabla_h = (np.einsum("Abca->Aabc", dh) - np.einsum("dab,Adc->Aabc", gam, h)
               - np.einsum("dac,Abd->Aabc", gam, h))

    # curly-W_A(e_a, e_b) = (nabla_a W_A)(e_b) - (nabla_b W_A)(e_a)
    #                       + sum_B [Dcoef(a, B, A) W_B(e_b) - Dcoef(b, B, A) W_B(e_a)]
    cw = np.einsum("Aacb->Aabc", nabla_W) - np.einsum("Abca->Aabc", nabla_W)
    cw = cw + np.einsum("aBA,Bcb->Aabc", Dcoef, W) - np.einsum("bBA,Bca->Aabc", Dcoef, W)
    cm_W = np.einsum("Aabc,ci->Aabi", cw, e)

    return ShapeData(h=h, W=W, H=H, ricci=ricci, scalar_R=scalar, K=K, Dcoef=Dcoef, det_W=det_W,
                     nabla_W=nabla_W, nabla_h=nabla_h, cm_W=cm_W)


def ambient_ricci_term(frame: PointFrame, g_inv: np.ndarray) -> np.ndarray:
    """g^pd g^ac gbar(R(e_c, e_d) e_b, e_a) as an (n, n) map."""
    e = frame.tangent_basis
    amb = np.einsum("ij,iklm,bk,cl,dm,aj->cdba", frame.ambient_value, frame.riemann_bar, e, e, e, e)
    return np.einsum("pd,ac,cdba->pb", g_inv, g_inv, amb)


def riemann_bar_apply(frame: PointFrame, X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Ambient vector R(X, Y) Z."""
    return np.einsum("ijkl,j,k,l->i", frame.riemann_bar, Z, X, Y)
