"""Uniform B-spline bases on an extended knot vector.

The knot vector on ``[a, b]`` with ``G`` cells and degree ``k`` is extended by
``k`` equally spaced ghost knots on each side, giving ``G + k`` basis
functions that form a partition of unity on ``[a, b]``. Inputs outside the
domain are clamped to it.

Evaluation works in the local coordinate of the containing cell, where every
basis is a translate of the same cardinal B-spline, so only the ``k + 1``
active functions are ever computed. Derivatives use the uniform-knot identity

    B_{i,k}^{(m)} = h^{-m} sum_j (-1)^j C(m, j) B_{i+j,k-m}

which is exact and cheap once the lower-degree tables exist.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from pikan._accel import HAVE_NUMBA, njit


@dataclass(frozen=True)
class KnotVector:
    domain_min: float
    domain_max: float
    grid_size: int
    order: int
    knots: np.ndarray

    @property
    def h(self) -> float:
        return (self.domain_max - self.domain_min) / self.grid_size

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order

    def __hash__(self) -> int:
        return hash((self.domain_min, self.domain_max, self.grid_size, self.order))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (self.domain_min, self.domain_max, self.grid_size, self.order) == (
            other.domain_min, other.domain_max, other.grid_size, other.order)


def make_knots(domain_min: float, domain_max: float, G: int, k: int) -> KnotVector:
    if not domain_min < domain_max:
        raise ValueError(f"invalid domain: [{domain_min}, {domain_max}]")
    if int(G) != G or int(k) != k or G < 1 or k < 0:
        raise ValueError(f"invalid size: grid_size={G}, order={k} (need G >= 1, k >= 0)")
    G, k = int(G), int(k)
    h = (domain_max - domain_min) / G
    knots = domain_min + np.arange(-k, G + k + 1, dtype=np.float64) * h
    knots.setflags(write=False)
    return KnotVector(float(domain_min), float(domain_max), G, k, knots)


# ---------------------------------------------------------------------------
# kernels


def derivative_stencils(k: int, nder: int) -> np.ndarray:
    """stencil[m, j] = (-1)^j C(m, j); rows with m > k stay zero."""
    st = np.zeros((nder + 1, nder + 1))
    for m in range(min(k, nder) + 1):
        for j in range(m + 1):
            st[m, j] = (-1) ** j * comb(m, j)
    return st


@njit(inline="always")
def local_basis(xv, lo, hi, h, G, k, nder, stencil, N, Bloc):
    """Active basis values/derivatives at one point.

    Fills ``Bloc[m, r]`` (m-th derivative of basis ``c + r``) and returns the
    cell index ``c``. ``N`` is (k+1, k+1) scratch. Outside the domain the
    value is clamped and all derivatives vanish.
    """
    inside = lo <= xv <= hi
    if xv < lo:
        xv = lo
    elif xv > hi:
        xv = hi
    s = (xv - lo) / h
    c = int(np.floor(s))
    if c > G - 1:
        c = G - 1
    if c < 0:
        c = 0
    u = s - c
    N[0, 0] = 1.0
    for p in range(1, k + 1):
        inv = 1.0 / p
        for r in range(p + 1):
            acc = 0.0
            if r >= 1:
                acc += (u + p - r) * N[p - 1, r - 1]
            if r <= p - 1:
                acc += (r + 1 - u) * N[p - 1, r]
            N[p, r] = acc * inv
    for m in range(nder + 1):
        if m > k or (m > 0 and not inside):
            for r in range(k + 1):
                Bloc[m, r] = 0.0
            continue
        q = k - m
        scale = 1.0
        for _ in range(m):
            scale /= h
        for r in range(k + 1):
            acc = 0.0
            for j in range(m + 1):
                idx = r + j - m
                if 0 <= idx <= q:
                    acc += stencil[m, j] * N[q, idx]
            Bloc[m, r] = acc * scale
    return c


@njit
def _table_numba(x, lo, hi, h, G, k, stencil, out):
    nder = out.shape[0] - 1
    N = np.zeros((k + 1, k + 1))
    Bloc = np.zeros((nder + 1, k + 1))
    for n in range(x.shape[0]):
        c = local_basis(x[n], lo, hi, h, G, k, nder, stencil, N, Bloc)
        for m in range(nder + 1):
            for r in range(k + 1):
                out[m, n, c + r] = Bloc[m, r]


def _table_numpy(x, lo, hi, h, G, k, stencil, out):
    nder = out.shape[0] - 1
    xc = np.clip(x, lo, hi)
    s = (xc - lo) / h
    c = np.clip(np.floor(s), 0, G - 1).astype(np.int64)
    u = s - c
    tables = [np.ones((1, x.shape[0]))]
    for p in range(1, k + 1):
        prev = tables[-1]
        cur = np.empty((p + 1, x.shape[0]))
        for r in range(p + 1):
            acc = np.zeros(x.shape[0])
            if r >= 1:
                acc = acc + (u + p - r) * prev[r - 1]
            if r <= p - 1:
                acc = acc + (r + 1 - u) * prev[r]
            cur[r] = acc / p
        tables.append(cur)
    rows = np.arange(x.shape[0])
    inside = (x >= lo) & (x <= hi)
    for m in range(min(nder, k) + 1):
        q = k - m
        scale = np.where(inside, h ** (-m), 0.0) if m else 1.0
        for r in range(k + 1):
            acc = np.zeros(x.shape[0])
            for j in range(m + 1):
                idx = r + j - m
                if 0 <= idx <= q:
                    acc = acc + stencil[m, j] * tables[q][idx]
            out[m, rows, c + r] = acc * scale


def basis_table(kv: KnotVector, x, nder: int = 0, use_numba: bool | None = None) -> np.ndarray:
    """Basis values and derivatives up to ``nder`` for an array of inputs.

    Returns an array of shape ``(nder + 1, *x.shape, n_basis)``. Derivative
    orders above the degree are identically zero, as are all derivatives at
    inputs outside the domain (the clamp makes the basis constant there).
    """
    x = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(x.reshape(-1))
    out = np.zeros((nder + 1, flat.shape[0], kv.n_basis))
    stencil = derivative_stencils(kv.order, nder)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    kernel = _table_numba if use_numba else _table_numpy
    kernel(flat, kv.domain_min, kv.domain_max, kv.h, kv.grid_size, kv.order, stencil, out)
    return out.reshape((nder + 1,) + x.shape + (kv.n_basis,))


def basis_values(kv: KnotVector, x) -> np.ndarray:
    """B_i(x) for every basis function; trailing axis indexes the basis."""
    return basis_table(kv, x, 0)[0]


def basis_derivatives(kv: KnotVector, x, deriv_order: int) -> np.ndarray:
    if deriv_order < 0:
        raise ValueError("deriv_order must be non-negative")
    if deriv_order > kv.order:
        raise ValueError(f"order too high: deriv_order={deriv_order} exceeds degree {kv.order}")
    return basis_table(kv, x, deriv_order)[deriv_order]


def in_domain(kv: KnotVector, x) -> np.ndarray:
    x = np.asarray(x)
    return (x >= kv.domain_min) & (x <= kv.domain_max)
