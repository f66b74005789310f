"""Nambu brackets on an embedded manifold and the geometry they encode.

Everything here is computed from brackets of the embedding coordinates (and,
where the formulation requires them, of normal-vector components).  The
classical module supplies only the normal frame that the bracket tensors are
built on, plus the comparison values used by the verifier.

Conventions: ``eps^{1..n} = +1`` on parameter space; the ambient Levi-Civita
tensor is ``sqrt(det gbar) * sign``.  Multi-indices ``I = i_1..i_{n-1}`` are
flattened row-major into a single axis of length ``m**(n-1)``.  Maps
``TM -> TM`` are stored with their second index lowered by ``gbar``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classical import MetricData, NormalFrame, ShapeData, ambient_ricci_term, riemann_bar_apply
from .embedding import DegeneratePointError, PointFrame
from .jets import Jet, JetError, jet_einsum
from .levi_civita import levi_civita, permutations_with_sign
from .linalg import adjugate, charpoly, jacobi_eigh

GAMMA_MIN = 1e-6
KEEP_THRESHOLD = 0.5


class CodimensionError(ValueError):
    """An operation was applied outside its dimension or ambient restrictions."""


class NonPositiveDensityError(DegeneratePointError):
    """The bracket density is not positive at the point."""


# -- context ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BracketContext:
    frame: PointFrame
    rho_jet: Jet         # order 2
    gamma_jet: Jet       # sqrt(g) / rho, order 2
    eps_ambient: np.ndarray

    @property
    def rho(self) -> float:
        return self.rho_jet.value

    @property
    def gamma(self) -> float:
        return self.gamma_jet.value

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def m(self) -> int:
        return self.frame.m

    @property
    def p(self) -> int:
        return self.frame.p

    @property
    def gbar(self) -> np.ndarray:
        return self.frame.ambient_value

    @property
    def euclidean(self) -> bool:
        return self.frame.euclidean


def make_context(frame: PointFrame) -> BracketContext:
    rho = frame.rho_jet.truncate(2)
    if rho.value <= 0:
        raise NonPositiveDensityError(f"density {rho.value!r} is not positive (gamma > 0 is assumed)")
    gamma = frame.sqrt_g_jet / rho
    eps = math.sqrt(np.linalg.det(frame.ambient_value)) * levi_civita(frame.m)
    return BracketContext(frame=frame, rho_jet=rho, gamma_jet=gamma, eps_ambient=eps)


# -- brackets -----------------------------------------------------------------

def alternating_product(rho_jet: Jet, grads: Sequence[Jet]) -> Jet:
    """(1/rho) eps^{a_1..a_n} G_1[.., a_1] ... G_n[.., a_n] for families of gradient jets.

    ``grads[r]`` has batch shape ``s_r + (n,)``; the result has batch shape
    ``s_1 + ... + s_n``.  All inputs are truncated to their common order.
    """
    n = rho_jet.n_vars
    if len(grads) != n:
        raise ValueError(f"need exactly {n} slots, got {len(grads)}")
    order = min(g.order for g in grads)
    grads = [g.truncate(order) if g.order > order else g for g in grads]
    shapes = [g.shape[:-1] for g in grads]
    total = sum(len(s) for s in shapes)
    out = None
    for perm, sign in permutations_with_sign(n):
        term = None
        offset = 0
        for g, s, a in zip(grads, shapes, perm):
            piece = Jet(g.n_vars, order, g.c[..., a, :])
            piece = piece.reshape((1,) * offset + s + (1,) * (total - offset - len(s)))
            offset += len(s)
            term = piece if term is None else term * piece
        term = term * float(sign)
        out = term if out is None else out + term
    return out * rho_jet.truncate(order).reciprocal()


def bracket_family(rho_jet: Jet, fs: Sequence[Jet]) -> Jet:
    """Nambu bracket of n jet families; consumes one derivative order."""
    for f in fs:
        if f.order < 1:
            raise JetError("bracket arguments need jet order >= 1")
    return alternating_product(rho_jet, [f.gradient_jets() for f in fs])


def bracket(ctx: BracketContext, fs: Sequence[Jet]) -> float:
    """{f_1, ..., f_n} at the point (scalar jets of order >= 1)."""
    if len(fs) != ctx.n:
        raise ValueError(f"bracket takes {ctx.n} arguments, got {len(fs)}")
    return bracket_family(ctx.rho_jet, fs).value


def bracket_jet(ctx: BracketContext, fs: Sequence[Jet]) -> Jet:
    """The bracket as a jet one order below its inputs (inputs need order >= 2)."""
    if len(fs) != ctx.n:
        raise ValueError(f"bracket takes {ctx.n} arguments, got {len(fs)}")
    if min(f.order for f in fs) < 2:
        raise JetError("bracket_jet needs inputs of order >= 2")
    return bracket_family(ctx.rho_jet, fs)


def f_bracket(ctx: BracketContext, g1: Jet, g2: Jet, fs: Sequence[Jet]) -> np.ndarray:
    """{g1, g2}_f = {g1, g2, f_1, ..., f_{n-2}} (values, batch shapes concatenated)."""
    if len(fs) != ctx.n - 2:
        raise ValueError(f"need {ctx.n - 2} test functions, got {len(fs)}")
    return np.asarray(bracket_family(ctx.rho_jet, [g1, g2, *fs]).value)


def coordinate_brackets(ctx: BracketContext, order: int = 2) -> Jet:
    """{x^{k_1}, ..., x^{k_n}} as a jet array of shape (m,)*n."""
    x = ctx.frame.x_jets.truncate(order + 1)
    return bracket_family(ctx.rho_jet, [x] * ctx.n)


def _kron_power(g: Jet | np.ndarray, k: int):
    """gbar_IJ for multi-indices of length k, flattened to (m**k, m**k)."""
    if isinstance(g, np.ndarray):
        out = np.ones((1, 1))
        for _ in range(k):
            out = np.kron(out, g)
        return out
    m = g.shape[0]
    out = Jet.constant(np.ones((1, 1)), g.n_vars, g.order)
    for _ in range(k):
        r = out.shape[0]
        out = (out.expand(1).expand(3) * g.expand(0).expand(2)).reshape(r * m, r * m)
    return out


# -- tensors ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BracketTensors:
    P: np.ndarray        # (m, M): P^{iJ}
    S: np.ndarray        # (p, m, M)
    T: np.ndarray        # (p, M, m)
    P2: np.ndarray       # (m, m) contravariant
    B: np.ndarray        # (p, m, m)
    ST: np.ndarray       # (p, m, m)
    P2_map: np.ndarray   # second index lowered
    B_map: np.ndarray
    ST_map: np.ndarray
    S_map: np.ndarray | None  # surfaces only: S_A as maps
    P_map: np.ndarray | None  # surfaces only
    c_np: float
    gbar_I: np.ndarray
    P_jet: Jet           # (m, M), order 2
    P2_jet: Jet          # (m, m), order 2, contravariant
    B_map_jet: Jet       # (p, m, m), order 1
    normals: NormalFrame


def c_np(n: int, p: int) -> float:
    return math.factorial(n) * math.factorial(n - 1) * math.sqrt(math.factorial(p - 1))


def build_tensors(ctx: BracketContext, normals: NormalFrame) -> BracketTensors:
    fr = ctx.frame
    n, m, p = ctx.n, ctx.m, ctx.p
    M = m ** (n - 1)
    sign = (-1.0) ** n
    norm = 1.0 / math.sqrt(math.factorial(n - 1))
    e2 = fr.e_jets.moveaxis(0, 1)            # (m, n) gradient family of x, order 2
    e1 = e2.truncate(1)

    P_jet = (alternating_product(ctx.rho_jet, [e2] * n) * norm).reshape(m, M)
    gI2 = _kron_power(fr.gbar_jets.truncate(2), n - 1)
    gI1 = gI2.truncate(1)
    G1 = fr.gbar_jets.truncate(1)

    S_list, T_list = [], []
    for A in range(p):
        dn = normals.deriv_jets[A].moveaxis(0, 1)  # (m, n), order 1
        S_list.append((alternating_product(ctx.rho_jet, [e1] + [dn] * (n - 1)) * (sign * norm)).reshape(m, M))
        T_list.append((alternating_product(ctx.rho_jet, [e1] * (n - 1) + [dn]) * (sign * norm)).reshape(M, m))
    S_jet, T_jet = Jet.stack(S_list), Jet.stack(T_list)

    P2_jet = jet_einsum("iJ,kJ->ik", jet_einsum("iI,IJ->iJ", P_jet, gI2), P_jet)
    PG1 = jet_einsum("iI,IJ->iJ", P_jet.truncate(1), gI1)
    B_jet = jet_einsum("iJ,AJk->Aik", PG1, T_jet)
    B_map_jet = jet_einsum("Aik,kl->Ail", B_jet, G1)

    G, gI = ctx.gbar, gI2.value
    P, S, T = P_jet.value, S_jet.value, T_jet.value
    ST = np.einsum("AiI,IJ,AJk->Aik", S, gI, T)
    S_map = P_map = None
    if n == 2:
        S_map = S @ G
        P_map = P @ G
    return BracketTensors(P=P, S=S, T=T, P2=P2_jet.value, B=B_jet.value, ST=ST,
                          P2_map=P2_jet.value @ G, B_map=B_map_jet.value, ST_map=ST @ G,
                          S_map=S_map, P_map=P_map, c_np=c_np(n, p), gbar_I=gI,
                          P_jet=P_jet, P2_jet=P2_jet, B_map_jet=B_map_jet, normals=normals)


def rel(diff, ref=None) -> float:
    """Residual norm |diff| / max(1, |ref|)."""
    d = float(np.linalg.norm(np.asarray(diff, float)))
    r = 0.0 if ref is None else float(np.linalg.norm(np.asarray(ref, float)))
    return d / max(1.0, r)


def _ip(G, a, b):
    return float(a @ G @ b)


def check_pbst(ctx: BracketContext, t: BracketTensors, metric: MetricData, shape: ShapeData,
               X: np.ndarray) -> dict[str, float]:
    """Residuals of the six action identities for P^2, B_A and S_A T_A."""
    G, e, g_inv, g2 = ctx.gbar, ctx.frame.tangent_basis, metric.g_inv, ctx.gamma ** 2
    DN = t.normals.derivs
    res = {}
    ref = g2 * (g_inv @ (e @ G @ X)) @ e
    res["P2X"] = rel(t.P2_map @ X - ref, ref)
    rb, rst = 0.0, 0.0
    for A in range(ctx.p):
        w = DN[A] @ G @ X  # gbar(X, nabla_a N_A)
        ref_b = -g2 * (g_inv @ w) @ e
        rb = max(rb, rel(t.B_map[A] @ X - ref_b, ref_b))
        adj_h = adjugate(shape.h[A])
        ref_st = g2 * ((adj_h / metric.det_g) @ w) @ e
        rst = max(rst, rel(t.ST_map[A] @ X - ref_st, ref_st))
    res["BX"], res["STX"] = rb, rst

    ry, rby, rsty = 0.0, 0.0, 0.0
    for a in range(ctx.n):
        Y = e[a]
        ry = max(ry, rel(t.P2_map @ Y - g2 * Y, Y))
        for A in range(ctx.p):
            WY = shape.W[A][:, a] @ e
            rby = max(rby, rel(t.B_map[A] @ Y - g2 * WY, g2 * WY))
            ref = -g2 * shape.det_W[A] * Y
            rsty = max(rsty, rel(t.ST_map[A] @ Y - ref, ref))
    res["P2Y"], res["BY"], res["STY"] = ry, rby, rsty
    return res


def traces(ctx: BracketContext, t: BracketTensors) -> dict[str, np.ndarray | float]:
    n = ctx.n
    return {
        "P2": np.trace(t.P2_map) / n,
        "B": np.trace(t.B_map, axis1=1, axis2=2),
        "ST": np.trace(t.ST_map, axis1=1, axis2=2) / n,
    }


def projection_and_H(t: BracketTensors, n: int) -> tuple[np.ndarray, np.ndarray]:
    tr = float(np.trace(t.P2_map))
    if tr <= 0:
        raise ValueError("Tr P^2 must be positive")
    proj = (n / tr) * t.P2_map
    trB = np.trace(t.B_map, axis1=1, axis2=2)
    H = (trB @ t.normals.normals) / tr
    return proj, H


def normal_connection(ctx: BracketContext, t: BracketTensors) -> np.ndarray:
    """[a, A, B] = gbar(B_B(N_A), e_a) / gamma^2, to be compared with (D_{e_a})_{AB}."""
    G, e, N = ctx.gbar, ctx.frame.tangent_basis, t.normals.normals
    BN = np.einsum("Bij,Aj->ABi", t.B_map, N)  # B_B(N_A)
    return np.einsum("ABi,ik,ak->aAB", BN, G, e) / ctx.gamma ** 2


def induced_metric_inverse(ctx: BracketContext) -> np.ndarray:
    e = ctx.frame.tangent_basis
    return np.linalg.inv(e @ ctx.gbar @ e.T)


def ricci_bracket(ctx: BracketContext, t: BracketTensors, X: np.ndarray) -> np.ndarray:
    """Ricci map of the submanifold applied to a tangent ambient vector X."""
    e, G = ctx.frame.tangent_basis, ctx.gbar
    out = np.zeros(ctx.m)
    if not ctx.euclidean:
        g_inv = induced_metric_inverse(ctx)
        xb = g_inv @ (e @ G @ X)
        out = (ambient_ricci_term(ctx.frame, g_inv) @ xb) @ e
    for A in range(ctx.p):
        BA = t.B_map[A]
        out = out + (np.trace(BA) * (BA @ X) - BA @ (BA @ X)) / ctx.gamma ** 4
    return out


# -- normal vectors from brackets ---------------------------------------------

@dataclass(frozen=True, eq=False)
class ZFamily:
    Z: np.ndarray        # (K, m) with K = m**(p-1)
    Zmat: np.ndarray     # Z_alpha^beta
    gram: np.ndarray     # gbar(Z_alpha, Z_beta)
    eigvals: np.ndarray
    eigvecs: np.ndarray  # E[:, k] = E_k, orthonormal under gbar_alpha_beta
    Nhat: np.ndarray     # (K, m)
    kept: tuple[int, ...]


def z_vectors_lower(ctx: BracketContext, brackets: np.ndarray | None = None) -> np.ndarray:
    """eps_{j K alpha} {x^K} / (gamma n! sqrt((p-1)!)) as an (m, m**(p-1)) array (index j lowered)."""
    n, m, p = ctx.n, ctx.m, ctx.p
    if brackets is None:
        brackets = coordinate_brackets(ctx, order=0).value
    zl = np.tensordot(ctx.eps_ambient, brackets, axes=(list(range(1, n + 1)), list(range(n))))
    zl = zl.reshape(m, m ** (p - 1))
    return zl / (ctx.gamma * math.factorial(n) * math.sqrt(math.factorial(p - 1)))


def z_normals(ctx: BracketContext) -> ZFamily:
    m, p = ctx.m, ctx.p
    G = ctx.gbar
    G_inv = np.linalg.inv(G)
    Z = (G_inv @ z_vectors_lower(ctx)).T          # (K, m), vector components
    gram = Z @ G @ Z.T
    Ga_inv = _kron_power(G_inv, p - 1)
    Zmat = gram @ Ga_inv
    C = _kron_power(np.linalg.cholesky(G), p - 1)
    Ci = np.linalg.inv(C)
    mu, Q = jacobi_eigh(Ci @ gram @ Ci.T)
    E = Ci.T @ Q
    Nhat = E.T @ Z
    kept = tuple(int(k) for k in np.flatnonzero(mu > KEEP_THRESHOLD))
    return ZFamily(Z=Z, Zmat=Zmat, gram=gram, eigvals=mu, eigvecs=E, Nhat=Nhat, kept=kept)


def hypersurface_normal(ctx: BracketContext) -> np.ndarray:
    if ctx.p != 1:
        raise CodimensionError("a single bracket normal exists only for hypersurfaces")
    return (np.linalg.inv(ctx.gbar) @ z_vectors_lower(ctx)[:, 0])


def _require_euclidean(ctx: BracketContext, what: str):
    if not ctx.euclidean:
        raise CodimensionError(f"{what} assumes a euclidean ambient space")


def _y_jets(ctx: BracketContext) -> Jet:
    """Y_{j alpha} = eps_{j k K alpha} {x^k, x^K} as (m, m**(p-1)) jets of order 2 (euclidean)."""
    n, m, p = ctx.n, ctx.m, ctx.p
    Q = coordinate_brackets(ctx, order=2)
    c = np.tensordot(levi_civita(m), Q.c, axes=(list(range(1, n + 1)), list(range(n))))
    return Jet(n, Q.order, c.reshape(m, m ** (p - 1), -1)), Q


def barm_sums(ctx: BracketContext, X: np.ndarray) -> dict[str, np.ndarray]:
    """Normal-free nested-bracket forms of sum_A (Tr B_A) B_A(X), sum_A B_A^2(X), sum_A (Tr B_A) N_A."""
    _require_euclidean(ctx, "the normal-free sums")
    n, m = ctx.n, ctx.m
    M = m ** (n - 1)
    Y, Q = _y_jets(ctx)
    x2 = ctx.frame.x_jets.truncate(2)
    Qv = Q.value.reshape(m, M)
    R = bracket_family(ctx.rho_jet, [x2] * (n - 1) + [Y]).value.reshape(M, m, -1)  # {x^J, Y_{k alpha}}
    U = np.einsum("iJ,Jka->aik", Qv, R)
    Tr = np.einsum("ajj->a", U)
    pref = 1.0 / (ctx.gamma ** 2 * c_np(n, ctx.p) ** 2)
    return {
        "TrBB": pref * np.einsum("a,aik,k->i", Tr, U, X),
        "B2": pref * np.einsum("aij,ajk,k->i", U, U, X),
        "TrBN": (-1) ** n * math.factorial(n - 1) * pref * (Y.value @ Tr),
    }


def barm_normal_side(t: BracketTensors, X: np.ndarray) -> dict[str, np.ndarray]:
    trB = np.trace(t.B_map, axis1=1, axis2=2)
    return {
        "TrBB": np.einsum("A,Aik,k->i", trB, t.B_map, X),
        "B2": np.einsum("Aij,Ajk,k->i", t.B_map, t.B_map, X),
        "TrBN": trB @ t.normals.normals,
    }


def detW_bracket(ctx: BracketContext) -> float:
    """det W of a hypersurface in R^{n+1}, w.r.t. the bracket normal Z, from nested brackets."""
    if ctx.p != 1:
        raise CodimensionError("det W formula needs codimension 1")
    _require_euclidean(ctx, "the det W formula")
    n = ctx.n
    Y, _ = _y_jets(ctx)
    y = Y[:, 0]
    x2 = ctx.frame.x_jets.truncate(2)
    F = bracket_family(ctx.rho_jet, [x2] + [y] * (n - 1)).value      # {x^i, Y_{j1}, ...}
    S = bracket_family(ctx.rho_jet, [x2] * (n - 1) + [y]).value      # {x^J, Y_i}
    m = ctx.m
    total = np.einsum("iJ,Ji->", F.reshape(m, -1), S.reshape(-1, m))
    g = ctx.gamma
    return float(-total / (g * (g * math.factorial(n)) ** (n + 1)))


def symmetric_functions(ctx: BracketContext, t: BracketTensors) -> np.ndarray:
    """Elementary symmetric functions sigma_1..sigma_n of the principal curvatures (p = 1).

    The (n+1)x(n+1) map B has eigenvalues gamma^2 kappa_a and 0, so with
    det(s - B) = sum_k c_k s^(n+1-k) one has sigma_k = (-1)^k c_k / gamma^(2k).
    """
    if ctx.p != 1:
        raise CodimensionError("symmetric functions are defined here for hypersurfaces")
    c = charpoly(t.B_map[0])
    g2 = ctx.gamma ** 2
    return np.array([(-1) ** k * c[k] / g2 ** k for k in range(1, ctx.n + 1)])


# -- Codazzi-Mainardi ---------------------------------------------------------

def _eps_contract_f(ctx: BracketContext, fs: Sequence[Jet]) -> np.ndarray:
    """omega[a, b] = eps^{a b a_1..} d_{a_1} f_1 ... (1 for n = 2 as eps^{ab})."""
    n = ctx.n
    eps = levi_civita(n)
    out = eps
    for f in fs:
        out = np.tensordot(out, f.grad(), axes=([2], [0]))
    return out


@dataclass(frozen=True, eq=False)
class CMData:
    C_oracle: np.ndarray    # (p, m): from the oracle W-tensor
    C_bracket: np.ndarray   # (p, m): bracket expression
    C_compact: np.ndarray | None  # surfaces: compact B-sum form
    rhs: np.ndarray         # (p, m): theorem right-hand side
    cmW: np.ndarray         # (p, n, n, m): gamma^2 W_A(e_a, e_b) + P^2(R(e_a, e_b) N_A)
    tangency: float         # max |gbar(C_A, N_B)| of the oracle side
    normal_leak: float      # normal part of the unprojected bracket expression


def cm_CA_oracle(ctx: BracketContext, shape: ShapeData, fs: Sequence[Jet]) -> np.ndarray:
    om = _eps_contract_f(ctx, fs)
    return np.einsum("ab,Aabi->Ai", om, shape.cm_W) / (2 * ctx.rho)


def cm_CA_bracket(ctx: BracketContext, t: BracketTensors,
                  fs: Sequence[Jet]) -> tuple[np.ndarray, np.ndarray | None, float]:
    """C_A(f) from brackets, projected onto the tangent space by gamma^-2 P^2.

    Returns ``(C, C_compact, leak)``: the compact form is the surface variant
    of the normal sum (None for n > 2), ``leak`` the largest normal component
    of the unprojected expression.
    """
    fr = ctx.frame
    p, m = ctx.p, ctx.m
    G, Gam = ctx.gbar, fr.gamma_bar
    fs1 = [f.truncate(1) for f in fs]
    x1 = fr.x_jets.truncate(1)
    gi2 = ctx.gamma_jet.truncate(1).ipow(-2)
    N = t.normals.normals
    Nj = t.normals.normal_jets.truncate(1)
    B = t.B_map
    g2 = ctx.gamma ** 2
    xx = f_bracket(ctx, x1, x1, fs1)                      # {x^j, x^l}_f
    out = np.zeros((p, m))
    for A in range(p):
        bj = t.B_map_jet[A] * gi2                         # gamma^-2 (B_A)^i_k
        term1 = np.einsum("ikk->i", f_bracket(ctx, bj, x1, fs1))
        term2 = (np.einsum("jl,ijk,kl->i", xx, Gam, B[A]) - np.einsum("jl,ik,kjl->i", xx, B[A], Gam)) / g2
        nx = f_bracket(ctx, Nj[A], x1, fs1)                # {n_A^k, x^l}_f
        term3 = np.zeros(m)
        for Bi in range(p):
            nB_low = G @ N[Bi]
            term3 += np.einsum("kl,il,k->i", nx, B[Bi], nB_low)
            term3 += np.einsum("klj,lq,j,iq,k->i", Gam, xx, N[A], B[Bi], nB_low)
        out[A] = term1 + term2 - term3 / g2
    # the raw expression carries a normal part when the W_A do not commute; project it away
    proj = t.P2_map / g2
    leak = float(np.abs(out @ G @ N.T).max()) if p > 1 else 0.0
    out = out @ proj.T
    compact = None
    if ctx.n == 2:
        compact = np.zeros((p, m))
        for A in range(p):
            bj = t.B_map_jet[A] * gi2
            term1 = np.einsum("ikk->i", f_bracket(ctx, bj, x1, fs1))
            term2 = (np.einsum("jl,ijk,kl->i", xx, Gam, B[A]) - np.einsum("jl,ik,kjl->i", xx, B[A], Gam)) / g2
            term3 = sum(B[Bi] @ (t.S_map[A] @ N[Bi]) for Bi in range(p)) / g2
            compact[A] = proj @ (term1 + term2 + term3)
    return out, compact, leak


def cm_theorem_rhs(ctx: BracketContext, t: BracketTensors, fs: Sequence[Jet]) -> np.ndarray:
    """(P^2)^i_j [ {x^k, Gamma^j_{k j'}}_f - {x^k, x^l}_f Gamma^q_{l j'} Gamma^j_{k q} ] n_A^{j'}."""
    fr = ctx.frame
    fs1 = [f.truncate(1) for f in fs]
    x1 = fr.x_jets.truncate(1)
    gam_j = fr.gamma_bar_jets.truncate(1)
    Gam = fr.gamma_bar
    dG = f_bracket(ctx, x1, gam_j, fs1)                    # [k, j, k', j']
    term = np.einsum("kjkq->jq", dG) - np.einsum("kl,qlr,jkq->jr", f_bracket(ctx, x1, x1, fs1), Gam, Gam)
    return np.einsum("ij,jr,Ar->Ai", t.P2_map, term, t.normals.normals)


def cm_residual(ctx: BracketContext, t: BracketTensors, shape: ShapeData,
                fs: Sequence[Jet]) -> CMData:
    fr = ctx.frame
    C_or = cm_CA_oracle(ctx, shape, fs)
    C_br, compact, leak = cm_CA_bracket(ctx, t, fs)
    rhs = cm_theorem_rhs(ctx, t, fs)
    e = fr.tangent_basis
    n, p = ctx.n, ctx.p
    cmW = np.zeros_like(shape.cm_W)
    for A in range(p):
        for a in range(n):
            for b in range(n):
                rb = riemann_bar_apply(fr, e[a], e[b], t.normals.normals[A])
                cmW[A, a, b] = ctx.gamma ** 2 * shape.cm_W[A, a, b] + t.P2_map @ rb
    tang = float(np.abs(C_or @ ctx.gbar @ t.normals.normals.T).max())
    return CMData(C_oracle=C_or, C_bracket=C_br, C_compact=compact, rhs=rhs, cmW=cmW,
                  tangency=tang, normal_leak=leak)


# -- surfaces -----------------------------------------------------------------

def _require_surface(ctx: BracketContext):
    if ctx.n != 2:
        raise CodimensionError("this operation is defined for surfaces (n = 2)")


def surface_K(ctx: BracketContext, t: BracketTensors) -> tuple[float, float | None]:
    """(K from Tr S_A^2, K from the bracket normals Z); the second is None for curved ambients."""
    _require_surface(ctx)
    fr = ctx.frame
    e, G = fr.tangent_basis, ctx.gbar
    g2 = ctx.gamma ** 2
    amb = 0.0
    if not ctx.euclidean:
        gdet = np.linalg.det(e @ G @ e.T)
        amb = _ip(G, riemann_bar_apply(fr, e[0], e[1], e[1]), e[0]) / gdet
    k_s = amb - sum(np.trace(SA @ SA) for SA in t.S_map) / (2 * g2)
    if not ctx.euclidean:
        return float(k_s), None
    Y, _ = _y_jets(ctx)
    x2 = fr.x_jets.truncate(2)
    R = bracket_family(ctx.rho_jet, [x2, Y]).value         # [i, j, I] = {x^i, Y_{jI}}
    k_z = -np.einsum("ijI,jiI->", R, R) / (8 * g2 ** 2 * math.factorial(ctx.p - 1))
    return float(k_s), float(k_z)


def complex_structure(ctx: BracketContext, t: BracketTensors) -> np.ndarray:
    """J = P / gamma as a map TM -> TM; squares to minus the tangent projector.

    P scales like 1/rho, i.e. like gamma, so gamma^-1 P is the density-free
    combination (the two agree for rho = sqrt(g)).
    """
    _require_surface(ctx)
    return t.P_map / ctx.gamma


def _require_r3(ctx: BracketContext):
    if ctx.n != 2 or ctx.m != 3 or not ctx.euclidean:
        raise CodimensionError("this identity needs a surface in euclidean R^3")


def cm_surface_r3(ctx: BracketContext, t: BracketTensors) -> tuple[np.ndarray, float]:
    """Components sum_k {gamma^-2 (P^2)^{ik}, n^k} and the bracket-swap residual."""
    _require_r3(ctx)
    fr = ctx.frame
    rho = ctx.rho_jet
    gi2 = ctx.gamma_jet.ipow(-2)
    nj = t.normals.normal_jets[0]
    cm = np.einsum("ikk->i", bracket_family(rho, [t.P2_jet * gi2, nj]).value)

    f1 = gi2.truncate(1)
    x2 = fr.x_jets.truncate(2)
    xx = bracket_family(rho, [fr.x_jets, fr.x_jets]).truncate(1)   # {x^i, x^j}, order 1
    xn = bracket_family(rho, [x2, nj])                               # {x^j, n^k}, order 1
    lhs_in = jet_einsum("ij,jk->ik", xx, xn) * f1
    rhs_in = jet_einsum("ij,jk->ik", xx, bracket_family(rho, [x2, x2])) * f1
    x1, n1 = fr.x_jets.truncate(1), nj.truncate(1)
    lhs = np.einsum("ikk->i", bracket_family(rho, [lhs_in, x1]).value)
    rhs = np.einsum("ikk->i", bracket_family(rho, [rhs_in, n1]).value)
    return cm, rel(lhs - rhs, rhs)


def poisson_identity(rho_jet: Jet, x_jets: Jet) -> np.ndarray:
    """The three components of the R^3 Codazzi-Mainardi expression for arbitrary functions.

    ``x_jets`` holds three jets of order >= 3 in two variables; the bracket is
    (1/rho) det.  No frame or normal enters.
    """
    if x_jets.shape != (3,) or x_jets.n_vars != 2:
        raise ValueError("poisson_identity needs three functions of two variables")
    if x_jets.order < 3:
        raise JetError("poisson_identity needs jets of order >= 3")
    rho = rho_jet.truncate(2)
    Q = bracket_family(rho, [x_jets, x_jets])             # order 2
    g2 = Q[0, 1] * Q[0, 1] + Q[1, 2] * Q[1, 2] + Q[2, 0] * Q[2, 0]
    if g2.value <= 1e-10:
        raise ValueError("gamma vanishes at the point")
    ig = g2.sqrt().reciprocal()
    A = jet_einsum("ij,jk->ik", Q, Q) * (ig * ig)
    V = Jet(2, Q.order, 0.5 * np.einsum("kln,lnc->kc", levi_civita(3), Q.c)) * ig
    return np.einsum("ikk->i", bracket_family(rho, [A, V]).value)


def cm_hypersurface_identities(ctx: BracketContext, t: BracketTensors, shape: ShapeData,
                               fs: Sequence[Jet]) -> dict[str, float]:
    """Residuals of the swap identity, the nabla h reproduction and the eps-contracted identity."""
    if ctx.p != 1:
        raise CodimensionError("hypersurface identities need codimension 1")
    _require_euclidean(ctx, "the hypersurface identities")
    fr = ctx.frame
    n, m = ctx.n, ctx.m
    M = m ** (n - 1)
    rho = ctx.rho_jet
    fs1 = [f.truncate(1) for f in fs]
    x2, x1 = fr.x_jets.truncate(2), fr.x_jets.truncate(1)
    nj = t.normals.normal_jets[0]
    gi2 = ctx.gamma_jet.truncate(1).ipow(-2)
    Qf = coordinate_brackets(ctx, order=2)
    Q_iJ = Qf.truncate(1).reshape(m, M)
    Q_Jk = Qf.truncate(1).reshape(M, m)
    R1 = bracket_family(rho, [x2] * (n - 1) + [nj]).reshape(M, m)    # {x^J, n^k}, order 1
    L = jet_einsum("iJ,Jk->ik", Q_iJ, R1) * gi2
    Mk = jet_einsum("iJ,Jk->ik", Q_iJ, Q_Jk) * gi2
    n1 = nj.truncate(1)
    lhs = np.einsum("ikk->i", f_bracket(ctx, L, x1, fs1))
    rhs = np.einsum("ikk->i", f_bracket(ctx, Mk, n1, fs1))
    out = {"swap": rel(lhs - rhs, rhs)}

    e = fr.tangent_basis
    hb = np.einsum("ikk->i", f_bracket(ctx, (t.P2_jet * ctx.gamma_jet.ipow(-2)).truncate(1), n1, fs1))
    lhs_h = e @ hb
    om = _eps_contract_f(ctx, fs)
    sign = 1.0 if n == 2 else -1.0
    rhs_h = sign * np.einsum("ab,abc->c", om, shape.nabla_h[0]) / ctx.rho
    out["nabla_h"] = rel(lhs_h - rhs_h, rhs_h)

    V = Jet(n, Qf.order, np.tensordot(levi_civita(m), Qf.c, axes=(list(range(1, n + 1)), list(range(n)))))
    V = V * ctx.gamma_jet.reciprocal()
    eps_id = np.einsum("ikk->i", f_bracket(ctx, Mk, V.truncate(1), fs1))
    out["eps"] = rel(eps_id)
    return out
