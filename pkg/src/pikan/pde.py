"""Benchmark problems: Klein-Gordon, viscous Burgers and Helmholtz.

Coordinates are always pairs ``(x, t)`` or ``(x, y)``, stored as the columns
of an (N, 2) array. Residual operators take the network output as a
:class:`~pikan.autodiff.Jet2` at the same points and return tape nodes.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.special import roots_hermite

from pikan import autodiff as ad
from pikan.autodiff import Jet2, Tape, Var

log = logging.getLogger(__name__)

PI = np.pi
BURGERS_NU = 0.01 / PI


# ---------------------------------------------------------------------------
# Klein-Gordon: u_tt - u_xx + u^3 = f on [0, 1]^2


def kg_exact(x, t):
    x, t = np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)
    return x * np.cos(5 * PI * t) + (x * t) ** 3


def kg_velocity(x, t):
    """du/dt of the manufactured solution."""
    x, t = np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)
    return -5 * PI * x * np.sin(5 * PI * t) + 3 * x ** 3 * t ** 2


def kg_forcing(x, t):
    x, t = np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)
    u = kg_exact(x, t)
    u_tt = -25 * PI ** 2 * x * np.cos(5 * PI * t) + 6 * x ** 3 * t
    u_xx = 6 * x * t ** 3
    return u_tt - u_xx + u ** 3


def kg_residual(u: Jet2, x, t) -> Var:
    return u.dtt - u.dxx + u.v ** 3 - kg_forcing(x, t)


# ---------------------------------------------------------------------------
# Burgers: u_t + u u_x = nu u_xx on [-1, 1] x [0, 1]


def burgers_residual(u: Jet2, nu: float = BURGERS_NU) -> Var:
    return u.dt + u.v * u.dx - nu * u.dxx


def burgers_reference(x, t, nu: float = BURGERS_NU, nodes: int = 256):
    """Cole-Hopf solution for u(x, 0) = -sin(pi x), u(+-1, t) = 0.

    Evaluates the quotient of Gaussian convolutions by Gauss-Hermite
    quadrature after substituting eta = 2 sqrt(nu t) z. Exponents are shifted
    by their maximum per point so neither integral underflows.
    """
    if nodes < 100:
        raise ValueError("use at least 100 quadrature nodes")
    x, t = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64))
    shape = x.shape
    x, t = x.reshape(-1), t.reshape(-1)
    z, w = roots_hermite(nodes)
    out = -np.sin(PI * x)
    pos = t > 0
    if np.any(pos):
        y = x[pos, None] - 2.0 * np.sqrt(nu * t[pos, None]) * z[None, :]
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        expo = -np.cos(PI * y) / (2 * PI * nu) + logw[None, :]
        expo -= expo.max(axis=1, keepdims=True)
        e = np.exp(expo)
        out[pos] = -np.sum(np.sin(PI * y) * e, axis=1) / np.sum(e, axis=1)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# Helmholtz: u_xx + u_yy + k^2 u = q on [-1, 1]^2


def helmholtz_exact(x, y, a1: float = 1.0, a2: float = 4.0):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    return np.sin(a1 * PI * x) * np.sin(a2 * PI * y)


def helmholtz_forcing(x, y, k: float = 1.0, a1: float = 1.0, a2: float = 4.0):
    return (k ** 2 - (a1 * PI) ** 2 - (a2 * PI) ** 2) * helmholtz_exact(x, y, a1, a2)


def helmholtz_residual(u: Jet2, x, y, k: float = 1.0, a1: float = 1.0, a2: float = 4.0) -> Var:
    return u.dxx + u.dyy + (k ** 2) * u.v - helmholtz_forcing(x, y, k, a1, a2)


# ---------------------------------------------------------------------------
# batches and problems


@dataclass
class PointBatch:
    interior: np.ndarray
    boundary: np.ndarray
    bc_target: np.ndarray
    initial: np.ndarray | None = None
    ic_target: np.ndarray | None = None
    ic_velocity: np.ndarray | None = None

    def __post_init__(self):
        if self.interior.shape[0] == 0 or self.boundary.shape[0] == 0:
            raise ValueError("empty batch")
        if self.initial is not None and self.initial.shape[0] == 0:
            raise ValueError("empty batch")


DEFAULT_COUNTS = {"n_r": 5000, "n_bc": 400, "n_ic": 400}


def _split(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (i < extra) for i in range(parts)]


class Problem:
    """A benchmark PDE on the box ``lo <= (x0, x1) <= hi``.

    Subclasses set the box, the task list and whether coordinate 1 is time
    (``transient``). Transient problems have boundary edges at the two ends
    of x and an initial edge at t = lo[1]; steady ones put all four edges in
    the boundary set.
    """

    name = ""
    lo = (0.0, 0.0)
    hi = (1.0, 1.0)
    transient = True
    coords = ("x", "t")

    @property
    def tasks(self) -> tuple[str, ...]:
        return ("r", "ic", "bc") if self.transient else ("r", "bc")

    # -- data --------------------------------------------------------------
    def exact(self, X) -> np.ndarray:
        raise NotImplementedError

    def bc_value(self, X) -> np.ndarray:
        return self.exact(X)

    def ic_value(self, x) -> np.ndarray:
        raise NotImplementedError

    def ic_velocity(self, x) -> np.ndarray | None:
        return None

    def residual(self, u: Jet2, X) -> Var:
        raise NotImplementedError

    # -- sampling ----------------------------------------------------------
    def sample_batch(self, counts: Mapping[str, int] | None = None, seed=0) -> PointBatch:
        c = {**DEFAULT_COUNTS, **(counts or {})}
        for key in ("n_r", "n_bc") + (("n_ic",) if self.transient else ()):
            if int(c[key]) < 1:
                raise ValueError(f"{key} must be >= 1, got {c[key]}")
        rng = np.random.default_rng(seed)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        interior = lo + (hi - lo) * rng.random((int(c["n_r"]), 2))
        if self.transient:
            edges = [(0, lo[0]), (0, hi[0])]
        else:
            edges = [(0, lo[0]), (0, hi[0]), (1, lo[1]), (1, hi[1])]
        blocks = []
        for (axis, val), n in zip(edges, _split(int(c["n_bc"]), len(edges))):
            P = lo + (hi - lo) * rng.random((n, 2))
            P[:, axis] = val
            blocks.append(P)
        boundary = np.concatenate(blocks)
        batch = PointBatch(interior, boundary, self.bc_value(boundary))
        if self.transient:
            n = int(c["n_ic"])
            init = np.empty((n, 2))
            init[:, 0] = lo[0] + (hi[0] - lo[0]) * rng.random(n)
            init[:, 1] = lo[1]
            batch.initial = init
            batch.ic_target = self.ic_value(init[:, 0])
            batch.ic_velocity = self.ic_velocity(init[:, 0])
        return batch

    def eval_grid(self, shape=None) -> tuple[np.ndarray, tuple[int, int]]:
        """Tensor grid including the box faces, x0 varying slowest."""
        shape = tuple(shape) if shape is not None else self.default_grid
        a = np.linspace(self.lo[0], self.hi[0], shape[0])
        b = np.linspace(self.lo[1], self.hi[1], shape[1])
        A, B = np.meshgrid(a, b, indexing="ij")
        return np.column_stack([A.ravel(), B.ravel()]), shape

    default_grid = (256, 100)

    def reference(self, shape=None) -> tuple[np.ndarray, np.ndarray]:
        """Evaluation points and ground-truth values on the grid."""
        X, _ = self.eval_grid(shape)
        return X, self.exact(X)

    # -- losses ------------------------------------------------------------
    def loss_terms(self, net, batch: PointBatch, tape: Tape | None = None,
                   params=None) -> dict[str, Var]:
        """Mean-squared residual, boundary and initial losses as tape nodes."""
        tape = tape if tape is not None else Tape()
        P = params if params is not None else net.register(tape)
        n_r = batch.interior.shape[0]
        if self.transient and batch.ic_velocity is not None:
            # the velocity term needs u_t on the initial line, so it rides along
            # with the interior jets
            u = net.forward(np.concatenate([batch.interior, batch.initial]), tape, params=P)
            u_r = Jet2(u.v[:n_r], tuple(d[:n_r] for d in u.d1), tuple(d[:n_r] for d in u.d2))
            u_ic, ut_ic = u.v[n_r:], u.dt[n_r:]
            X_val = batch.boundary
        else:
            u_r = net.forward(batch.interior, tape, params=P)
            ut_ic = None
            X_val = batch.boundary if not self.transient else np.concatenate(
                [batch.boundary, batch.initial])
        vals = net.forward(X_val, tape, jet=False, params=P)
        n_bc = batch.boundary.shape[0]
        out = {"r": ad.square(self.residual(u_r, batch.interior)).mean()}
        if self.transient:
            if ut_ic is None:
                u_ic = vals[n_bc:]
            L_ic = ad.square(u_ic - batch.ic_target).mean()
            if ut_ic is not None:
                L_ic = L_ic + ad.square(ut_ic - batch.ic_velocity).mean()
            out["ic"] = L_ic
            vals = vals[:n_bc]
        out["bc"] = ad.square(vals - batch.bc_target).mean()
        return out

    def exact_jet(self, tape: Tape, X) -> Jet2:
        """Jet of the closed-form solution, for plug-in residual checks."""
        raise NotImplementedError


class KleinGordon(Problem):
    name = "klein_gordon"
    lo, hi = (0.0, 0.0), (1.0, 1.0)

    def exact(self, X):
        return kg_exact(X[:, 0], X[:, 1])

    def ic_value(self, x):
        return kg_exact(x, 0.0)

    def ic_velocity(self, x):
        return kg_velocity(x, 0.0)

    def residual(self, u, X):
        return kg_residual(u, X[:, 0], X[:, 1])

    def exact_jet(self, tape, X):
        def f(x, t):
            return x * ad.jet_cos(5 * PI * t) + (x * t) ** 3
        return ad.jet_eval(f, X, tape)


class Burgers(Problem):
    name = "burgers"
    lo, hi = (-1.0, 0.0), (1.0, 1.0)

    def __init__(self, nu: float = BURGERS_NU, quadrature_nodes: int = 256,
                 cache_dir: str | os.PathLike | None = None):
        self.nu = float(nu)
        self.quadrature_nodes = int(quadrature_nodes)
        self.cache_dir = cache_dir

    def exact(self, X):
        return burgers_reference(X[:, 0], X[:, 1], self.nu, self.quadrature_nodes)

    def bc_value(self, X):
        return np.zeros(X.shape[0])

    def ic_value(self, x):
        return -np.sin(PI * x)

    def residual(self, u, X):
        return burgers_residual(u, self.nu)

    def reference(self, shape=None):
        X, shape = self.eval_grid(shape)
        path = self._cache_path(shape)
        if path is not None and path.exists():
            data = np.loadtxt(path, delimiter=",", skiprows=1)
            if data.shape == (X.shape[0], 3) and np.array_equal(data[:, :2], X):
                return X, data[:, 2]
            log.warning("ignoring stale reference cache %s", path)
        u = self.exact(X)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            write_grid_csv(path, X, u, self.coords + ("u",))
        return X, u

    def _cache_path(self, shape) -> Path | None:
        root = self.cache_dir if self.cache_dir is not None else os.environ.get("PIKAN_CACHE")
        if not root:
            return None
        key = hashlib.sha256(f"{self.nu!r}|{shape[0]}x{shape[1]}|{self.quadrature_nodes}"
                             .encode()).hexdigest()[:16]
        return Path(root) / f"burgers_ref_{shape[0]}x{shape[1]}_{key}.csv"


class Helmholtz(Problem):
    name = "helmholtz"
    lo, hi = (-1.0, -1.0), (1.0, 1.0)
    transient = False
    coords = ("x", "y")
    default_grid = (256, 256)

    def __init__(self, k: float = 1.0, a1: float = 1.0, a2: float = 4.0):
        self.k, self.a1, self.a2 = float(k), float(a1), float(a2)

    def exact(self, X):
        return helmholtz_exact(X[:, 0], X[:, 1], self.a1, self.a2)

    def bc_value(self, X):
        return np.zeros(X.shape[0])

    def residual(self, u, X):
        return helmholtz_residual(u, X[:, 0], X[:, 1], self.k, self.a1, self.a2)

    def exact_jet(self, tape, X):
        def f(x, y):
            return ad.jet_sin(self.a1 * PI * x) * ad.jet_sin(self.a2 * PI * y)
        return ad.jet_eval(f, X, tape)


PROBLEMS = {"klein_gordon": KleinGordon, "burgers": Burgers, "helmholtz": Helmholtz}
ALIASES = {"kg": "klein_gordon", "klein-gordon": "klein_gordon"}


def get_problem(name: str, **kwargs) -> Problem:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    return PROBLEMS[key](**kwargs)


def write_grid_csv(path, X, values, header) -> None:
    """Comma-separated grid file with 17 significant digits."""
    data = np.column_stack([X, values])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=",".join(header), comments="")
