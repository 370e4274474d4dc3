"""Fused KAN-layer kernels: pre-activation jets and their adjoints.

For one layer with inputs ``x_i`` (a jet: value, 2 first partials, 3 second
partials, stacked along axis 0 as ``xs[6, N, n_in]``) the pre-activation is

    pre_j = sum_i G_ij(x_i),   G_ij(x) = A_ij SiLU(x) + sum_b C_ijb B_b(x)

and its jet follows from G', G'' by the chain rule. Derivatives of G with
respect to x are again G-type sums over the analytic basis derivatives, which
is what the backward kernels exploit: nothing of size N * n_in * n_basis is
ever materialised.

``xs`` with a leading axis of 1 selects the value-only path. Both a numba
kernel and a numpy version are provided; :func:`kan_layer` chooses by
``pikan._accel.HAVE_NUMBA`` unless told otherwise.
"""

from __future__ import annotations

import numpy as np

from pikan import autodiff as ad
from pikan._accel import HAVE_NUMBA, njit
from pikan.bspline import KnotVector, basis_table, derivative_stencils, local_basis

_PAIRS = ((0, 0), (0, 1), (1, 1))


@njit
def _silu_derivs(x, out):
    s = 0.5 * (1.0 + np.tanh(0.5 * x))
    p = s * (1.0 - s)
    q = 1.0 - 2.0 * s
    out[0] = x * s
    out[1] = s + x * p
    out[2] = p * (2.0 + x * q)
    out[3] = p * q * (2.0 + x * q) + p * (q - 2.0 * x * p)


def silu_table(x: np.ndarray) -> np.ndarray:
    """SiLU and its first three derivatives, stacked on a new leading axis."""
    s = 0.5 * (1.0 + np.tanh(0.5 * x))
    p = s * (1.0 - s)
    q = 1.0 - 2.0 * s
    return np.stack([x * s, s + x * p, p * (2.0 + x * q),
                     p * q * (2.0 + x * q) + p * (q - 2.0 * x * p)])


# ---------------------------------------------------------------------------
# numba


@njit
def _g_rows(Ct, A, B, S, i, c, k, nder, Gm):
    """Gm[m, j] = S[m] A[i, j] + sum_r B[m, r] Ct[i, c + r, j] for m <= nder."""
    n_out = Gm.shape[1]
    for m in range(nder + 1):
        sm = S[m]
        for j in range(n_out):
            Gm[m, j] = sm * A[i, j]
        for r in range(k + 1):
            bm = B[m, r]
            for j in range(n_out):
                Gm[m, j] += bm * Ct[i, c + r, j]


@njit
def _fwd_numba(xs, Ct, A, lo, hi, h, G, k, stencil, out):
    jet = xs.shape[0] == 6
    _, N, n_in = xs.shape
    n_out = Ct.shape[2]
    nder = 2 if jet else 0
    Nscr = np.zeros((k + 1, k + 1))
    B = np.zeros((4, k + 1))
    S = np.zeros(4)
    Gm = np.zeros((4, n_out))
    for n in range(N):
        for i in range(n_in):
            x = xs[0, n, i]
            c = local_basis(x, lo, hi, h, G, k, nder, stencil, Nscr, B)
            _silu_derivs(x, S)
            _g_rows(Ct, A, B, S, i, c, k, nder, Gm)
            for j in range(n_out):
                out[0, n, j] += Gm[0, j]
            if jet:
                a, b = xs[1, n, i], xs[2, n, i]
                aa, ab, bb = xs[3, n, i], xs[4, n, i], xs[5, n, i]
                for j in range(n_out):
                    g1 = Gm[1, j]
                    g2 = Gm[2, j]
                    out[1, n, j] += g1 * a
                    out[2, n, j] += g1 * b
                    out[3, n, j] += g2 * (a * a) + g1 * aa
                    out[4, n, j] += g2 * (a * b) + g1 * ab
                    out[5, n, j] += g2 * (b * b) + g1 * bb


@njit
def _bwd_numba(xs, Ct, A, g, lo, hi, h, G, k, stencil, gxs, gCt, gA):
    jet = xs.shape[0] == 6
    _, N, n_in = xs.shape
    n_out = Ct.shape[2]
    nder = 3 if jet else 1
    Nscr = np.zeros((k + 1, k + 1))
    B = np.zeros((4, k + 1))
    S = np.zeros(4)
    Gm = np.zeros((4, n_out))
    gG = np.zeros((3, n_out))
    for n in range(N):
        for i in range(n_in):
            x = xs[0, n, i]
            c = local_basis(x, lo, hi, h, G, k, nder, stencil, Nscr, B)
            _silu_derivs(x, S)
            _g_rows(Ct, A, B, S, i, c, k, nder, Gm)
            gx = 0.0
            if jet:
                a, b = xs[1, n, i], xs[2, n, i]
                aa, ab, bb = xs[3, n, i], xs[4, n, i], xs[5, n, i]
                ga = gb = gaa = gab = gbb = 0.0
                for j in range(n_out):
                    g0, g1, g2 = g[0, n, j], g[1, n, j], g[2, n, j]
                    g3, g4, g5 = g[3, n, j], g[4, n, j], g[5, n, j]
                    h1 = g1 * a + g2 * b + g3 * aa + g4 * ab + g5 * bb
                    h2 = g3 * (a * a) + g4 * (a * b) + g5 * (b * b)
                    gG[0, j] = g0
                    gG[1, j] = h1
                    gG[2, j] = h2
                    gx += g0 * Gm[1, j] + h1 * Gm[2, j] + h2 * Gm[3, j]
                    ga += g1 * Gm[1, j] + (2.0 * g3 * a + g4 * b) * Gm[2, j]
                    gb += g2 * Gm[1, j] + (g4 * a + 2.0 * g5 * b) * Gm[2, j]
                    gaa += g3 * Gm[1, j]
                    gab += g4 * Gm[1, j]
                    gbb += g5 * Gm[1, j]
                gxs[1, n, i] = ga
                gxs[2, n, i] = gb
                gxs[3, n, i] = gaa
                gxs[4, n, i] = gab
                gxs[5, n, i] = gbb
                for r in range(k + 1):
                    b0, b1, b2 = B[0, r], B[1, r], B[2, r]
                    for j in range(n_out):
                        gCt[i, c + r, j] += gG[0, j] * b0 + gG[1, j] * b1 + gG[2, j] * b2
                for j in range(n_out):
                    gA[i, j] += gG[0, j] * S[0] + gG[1, j] * S[1] + gG[2, j] * S[2]
            else:
                for j in range(n_out):
                    gx += g[0, n, j] * Gm[1, j]
                for r in range(k + 1):
                    b0 = B[0, r]
                    for j in range(n_out):
                        gCt[i, c + r, j] += g[0, n, j] * b0
                for j in range(n_out):
                    gA[i, j] += g[0, n, j] * S[0]
            gxs[0, n, i] = gx


# ---------------------------------------------------------------------------
# numpy


def _g_tables(xs, C, A, kv, nder):
    """G^(m)[n, i, j] for m = 0..nder, plus the basis and SiLU tables."""
    T = basis_table(kv, xs[0], nder, use_numba=False)       # (nder+1, N, n_in, nb)
    S = silu_table(xs[0])[:nder + 1]                         # (nder+1, N, n_in)
    Gm = np.stack([np.einsum("nib,ijb->nij", T[m], C) + S[m][..., None] * A
                   for m in range(nder + 1)])
    return Gm, T, S


def _fwd_numpy(xs, C, A, kv):
    jet = xs.shape[0] == 6
    Gm, _, _ = _g_tables(xs, C, A, kv, 2 if jet else 0)
    out = np.empty((xs.shape[0], xs.shape[1], C.shape[1]))
    out[0] = Gm[0].sum(axis=1)
    if jet:
        d1, d2 = xs[1:3], xs[3:6]
        for k in range(2):
            out[1 + k] = np.einsum("nij,ni->nj", Gm[1], d1[k])
        for p, (k, l) in enumerate(_PAIRS):
            out[3 + p] = (np.einsum("nij,ni->nj", Gm[2], d1[k] * d1[l])
                          + np.einsum("nij,ni->nj", Gm[1], d2[p]))
    return out


def _bwd_numpy(xs, C, A, g, kv):
    jet = xs.shape[0] == 6
    Gm, T, S = _g_tables(xs, C, A, kv, 3 if jet else 1)
    gG = [np.broadcast_to(g[0][:, None, :], Gm.shape[1:])]
    gxs = np.zeros_like(xs)
    if jet:
        a, b, aa, ab, bb = xs[1:]
        g1, g2, g3, g4, g5 = (g[m][:, None, :] for m in range(1, 6))
        col = lambda v: v[..., None]
        gG.append(g1 * col(a) + g2 * col(b) + g3 * col(aa) + g4 * col(ab) + g5 * col(bb))
        gG.append(g3 * col(a * a) + g4 * col(a * b) + g5 * col(b * b))
        G1, G2 = Gm[1], Gm[2]
        gxs[1] = (g1 * G1 + (2.0 * g3 * col(a) + g4 * col(b)) * G2).sum(-1)
        gxs[2] = (g2 * G1 + (g4 * col(a) + 2.0 * g5 * col(b)) * G2).sum(-1)
        gxs[3] = (g3 * G1).sum(-1)
        gxs[4] = (g4 * G1).sum(-1)
        gxs[5] = (g5 * G1).sum(-1)
    gxs[0] = sum((gG[m] * Gm[m + 1]).sum(-1) for m in range(len(gG)))
    gC = sum(np.einsum("nij,nib->ijb", gG[m], T[m]) for m in range(len(gG)))
    gA = sum(np.einsum("nij,ni->ij", gG[m], S[m]) for m in range(len(gG)))
    return gxs, gC, gA


# ---------------------------------------------------------------------------
# tape primitive


def _fwd(xs, C, A, kv, use_numba):
    if use_numba:
        out = np.zeros((xs.shape[0], xs.shape[1], C.shape[1]))
        Ct = np.ascontiguousarray(C.transpose(0, 2, 1))
        _fwd_numba(np.ascontiguousarray(xs), Ct, np.ascontiguousarray(A),
                   kv.domain_min, kv.domain_max, kv.h, kv.grid_size, kv.order,
                   derivative_stencils(kv.order, 3), out)
        return out
    return _fwd_numpy(xs, C, A, kv)


def _vjp(g, out, xs, C, A, kv, use_numba):
    if use_numba:
        gxs = np.zeros_like(xs)
        Ct = np.ascontiguousarray(C.transpose(0, 2, 1))
        gCt = np.zeros_like(Ct)
        gA = np.zeros_like(A)
        _bwd_numba(np.ascontiguousarray(xs), Ct, np.ascontiguousarray(A),
                   np.ascontiguousarray(g), kv.domain_min, kv.domain_max, kv.h, kv.grid_size,
                   kv.order, derivative_stencils(kv.order, 3), gxs, gCt, gA)
        return gxs, gCt.transpose(0, 2, 1), gA
    return _bwd_numpy(xs, C, A, g, kv)


ad.primitive("kan_layer", _fwd, _vjp)


def kan_layer(xs: ad.Var, C: ad.Var, A: ad.Var, kv: KnotVector,
              use_numba: bool | None = None) -> ad.Var:
    """Fused pre-activation of one KAN layer.

    ``xs`` is (6, N, n_in) for jets or (1, N, n_in) for values, ``C`` the
    spline coefficients (n_in, n_out, n_basis), ``A`` the combined SiLU
    weights (n_in, n_out). Returns (6 or 1, N, n_out).
    """
    if use_numba is None:
        use_numba = HAVE_NUMBA
    return xs.tape.record("kan_layer", (xs, C, A), kv=kv, use_numba=bool(use_numba))
