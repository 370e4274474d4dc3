"""KAN and MLP approximators evaluated on a tape.

Both networks keep their trainable reals in one flat fp64 vector ``theta``;
the per-layer arrays are views into it, registered on the tape in storage
order so the gradient list from :func:`pikan.autodiff.backward` concatenates
straight back into a flat gradient.

KAN layer (hidden layers)::

    out_j = tanh( sum_i phi_ji(x_i) + sum_i W_ji SiLU(x_i) )
    phi_ji(x) = w_b SiLU(x) + sum_b c_b B_b(x)

The last layer skips the tanh so the output is unbounded. Spline inputs live
on the fixed grid [-1, 1]; the raw coordinates are mapped there affinely.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from pikan import autodiff as ad
from pikan import kernels
from pikan.autodiff import Jet2, Tape, Var
from pikan.bspline import KnotVector, make_knots

_PAIRS = ((0, 0), (0, 1), (1, 1))


class _Network:
    kind = ""

    def __init__(self, widths, lo=(-1.0, -1.0), hi=(1.0, 1.0)):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid widths {widths}")
        if widths[0] != 2:
            raise ValueError("networks take exactly 2 input coordinates")
        self.widths = widths
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if self.lo.shape != (2,) or np.any(self.hi <= self.lo):
            raise ValueError("input box must satisfy lo < hi in both coordinates")
        shapes = self._shapes()
        self.theta = np.zeros(sum(int(np.prod(s)) for _, s in shapes))
        self._names = [n for n, _ in shapes]
        self._views = []
        off = 0
        for _, s in shapes:
            n = int(np.prod(s))
            self._views.append(self.theta[off:off + n].reshape(s))
            off += n
        self.seed = None

    def _shapes(self) -> list[tuple[str, tuple]]:
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self._views)

    def arrays(self) -> dict[str, np.ndarray]:
        return dict(zip(self._names, self._views))

    def set_theta(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.theta.shape:
            raise ValueError(f"expected {self.theta.shape[0]} parameters, got {theta.shape}")
        self.theta[:] = theta

    def input_scale(self) -> np.ndarray:
        return 2.0 / (self.hi - self.lo)

    def normalise(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        # clip guards the 1-ulp overshoot at the upper face of the box
        return np.clip((X - self.lo) * self.input_scale() - 1.0, -1.0, 1.0)

    def input_jet(self, tape: Tape, X) -> Jet2:
        """Mapped inputs as a batch jet with components of shape (N, 2)."""
        Xn = self.normalise(X)
        n = Xn.shape[0]
        s = self.input_scale()
        zero = tape.const(np.zeros((n, 2)))
        d0 = np.zeros((n, 2))
        d0[:, 0] = s[0]
        d1 = np.zeros((n, 2))
        d1[:, 1] = s[1]
        return Jet2(tape.const(Xn), (tape.const(d0), tape.const(d1)), (zero, zero, zero))

    def register(self, tape: Tape) -> dict[str, Var]:
        return {n: tape.param(v) for n, v in zip(self._names, self._views)}

    def forward(self, X, tape: Tape | None = None, jet: bool = True, params=None):
        """u(X) for points X of shape (N, 2).

        Returns a :class:`Jet2` (components of shape (N,)) when ``jet`` is set,
        otherwise a value node. Parameters are registered on ``tape`` unless
        already-registered ``params`` are passed.
        """
        tape = tape if tape is not None else Tape()
        P = params if params is not None else self.register(tape)
        if jet:
            h = self.input_jet(tape, X)
        else:
            h = tape.const(self.normalise(X))
        out = self._propagate(P, h)
        if isinstance(out, Jet2):
            return Jet2(out.v.reshape(-1), tuple(d.reshape(-1) for d in out.d1),
                        tuple(d.reshape(-1) for d in out.d2))
        return out.reshape(-1)

    def predict(self, X, chunk: int = 8192) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk] = self.forward(X[s:s + chunk], jet=False).value
        return out

    def header(self) -> dict:
        return {"kind": self.kind, "widths": self.widths, "lo": self.lo.tolist(),
                "hi": self.hi.tolist(), "seed": self.seed, "count": self.n_params}


class KanNetwork(_Network):
    kind = "kan"

    def __init__(self, widths, grid_size: int = 20, order: int = 4, lo=(-1.0, -1.0),
                 hi=(1.0, 1.0)):
        self.kv: KnotVector = make_knots(-1.0, 1.0, grid_size, order)
        self.fused = True
        super().__init__(widths, lo, hi)

    @property
    def grid_size(self) -> int:
        return self.kv.grid_size

    @property
    def order(self) -> int:
        return self.kv.order

    def _shapes(self):
        nb = self.kv.n_basis
        out = []
        for l, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            out += [(f"spline_coeffs.{l}", (a, b, nb)), (f"basis_weight.{l}", (a, b)),
                    (f"residual.{l}", (b, a))]
        return out

    def layer(self, l: int) -> dict[str, np.ndarray]:
        arr = self.arrays()
        return {k: arr[f"{k}.{l}"] for k in ("spline_coeffs", "basis_weight", "residual")}

    def _propagate(self, P, h):
        L = len(self.widths) - 1
        for l in range(L):
            h = kan_layer_forward(P[f"spline_coeffs.{l}"], P[f"basis_weight.{l}"],
                                  P[f"residual.{l}"], self.kv, h, activate=l < L - 1,
                                  fused=self.fused)
        return h

    def header(self) -> dict:
        return {**super().header(), "G": self.grid_size, "k": self.order}


class MlpNetwork(_Network):
    kind = "mlp"

    def _shapes(self):
        out = []
        for l, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            out += [(f"weight.{l}", (a, b)), (f"bias.{l}", (b,))]
        return out

    def _propagate(self, P, h):
        L = len(self.widths) - 1
        for l in range(L):
            W, b = P[f"weight.{l}"], P[f"bias.{l}"]
            if isinstance(h, Jet2):
                h = Jet2(h.v @ W + b, tuple(d @ W for d in h.d1), tuple(d @ W for d in h.d2))
                if l < L - 1:
                    h = ad.jet_tanh(h)
            else:
                h = h @ W + b
                if l < L - 1:
                    h = ad.tanh(h)
        return h


# ---------------------------------------------------------------------------
# building blocks


def phi_eval(coeffs: Var, basis_weight: Var, kv: KnotVector, x):
    """Single edge activation w_b SiLU(x) + sum_b c_b B_b(x).

    ``x`` is a value node or a :class:`Jet2`; spline derivatives come from the
    analytic basis derivatives, not from differentiating the recursion.
    """
    if isinstance(x, Jet2):
        B0, B1, B2 = ad.bspline_jet(x.v, kv, 2)
        s0, s1, s2 = ad.silu_derivs(x.v)
        f0 = (B0 * coeffs).sum(axis=-1) + basis_weight * s0
        f1 = (B1 * coeffs).sum(axis=-1) + basis_weight * s1
        f2 = (B2 * coeffs).sum(axis=-1) + basis_weight * s2
        return ad.apply(x, f0, f1, f2)
    return (ad.bspline_basis(x, kv, 0) * coeffs).sum(axis=-1) + basis_weight * ad.silu(x)


def kan_layer_forward(coeffs: Var, basis_weight: Var, residual: Var, kv: KnotVector, x,
                      activate: bool = True, fused: bool = True):
    """One KAN layer on a batch; ``x`` has components of shape (N, n_in).

    The SiLU branch of every edge and the residual branch share the same
    nonlinearity, so they are contracted together through ``w_b + W^T``.
    ``fused`` runs the single-primitive kernel from :mod:`pikan.kernels`;
    otherwise the layer is composed from elementary tape operations.
    """
    A = basis_weight + residual.T
    if fused:
        if isinstance(x, Jet2):
            out = kernels.kan_layer(ad.stack(x.components()), coeffs, A, kv)
            pre = Jet2(out[0], (out[1], out[2]), (out[3], out[4], out[5]))
            return ad.jet_tanh(pre) if activate else pre
        out = kernels.kan_layer(x.reshape((1,) + x.shape), coeffs, A, kv)[0]
        return ad.tanh(out) if activate else out

    n_in, n_out, nb = coeffs.shape
    C = coeffs.transpose(0, 2, 1).reshape(n_in * nb, n_out)
    xv = x.v if isinstance(x, Jet2) else x
    n = xv.shape[0]

    def flat(B):
        return B.reshape(n, n_in * nb)

    if not isinstance(x, Jet2):
        B0 = ad.bspline_basis(xv, kv, 0)
        v = flat(B0) @ C + ad.silu(xv) @ A
        return ad.tanh(v) if activate else v

    B0, B1, B2 = ad.bspline_jet(xv, kv, 2)
    s0, s1, s2 = ad.silu_derivs(xv)
    v = flat(B0) @ C + s0 @ A
    col = lambda d: d.reshape(n, n_in, 1)
    d1 = tuple(flat(B1 * col(dk)) @ C + (s1 * dk) @ A for dk in x.d1)
    d2 = []
    for (k, l), dkl in zip(_PAIRS, x.d2):
        dk, dl = x.d1[k], x.d1[l]
        prod = dk * dl
        d2.append(flat(B2 * col(prod) + B1 * col(dkl)) @ C + (s2 * prod + s1 * dkl) @ A)
    out = Jet2(v, d1, tuple(d2))
    return ad.jet_tanh(out) if activate else out


def kan_forward(net: KanNetwork, x, tape: Tape | None = None) -> Jet2:
    return net.forward(np.atleast_2d(x), tape=tape, jet=True)


def mlp_forward(net: MlpNetwork, x, tape: Tape | None = None) -> Jet2:
    return net.forward(np.atleast_2d(x), tape=tape, jet=True)


def param_count(net: _Network) -> int:
    return net.n_params


def expected_param_count(kind: str, widths, G: int = 0, k: int = 0) -> int:
    pairs = list(zip(widths[:-1], widths[1:]))
    if kind == "kan":
        return sum(a * b * (G + k + 2) for a, b in pairs)
    return sum(a * b + b for a, b in pairs)


def init_params(net: _Network, seed: int) -> _Network:
    """Deterministic initialisation from ``seed``.

    Spline coefficients ~ N(0, 0.1/sqrt(G+k)); basis weights, residual
    matrices and dense weights Xavier-uniform; biases zero.
    """
    rng = np.random.default_rng(seed)
    for name, view in net.arrays().items():
        kind = name.split(".")[0]
        if kind == "spline_coeffs":
            view[...] = rng.normal(0.0, 0.1 / np.sqrt(view.shape[-1]), size=view.shape)
        elif kind in ("basis_weight", "weight"):
            fan_in, fan_out = view.shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            view[...] = rng.uniform(-lim, lim, size=view.shape)
        elif kind == "residual":
            fan_out, fan_in = view.shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            view[...] = rng.uniform(-lim, lim, size=view.shape)
        else:
            view[...] = 0.0
    net.seed = int(seed)
    return net


def build_network(kind: str, widths, G: int = 20, k: int = 4, lo=(-1.0, -1.0),
                  hi=(1.0, 1.0)) -> _Network:
    if kind == "kan":
        return KanNetwork(widths, G, k, lo, hi)
    if kind == "mlp":
        return MlpNetwork(widths, lo, hi)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# persistence: raw little-endian fp64 blob plus a JSON header


def save_params(net: _Network, path) -> tuple[Path, Path]:
    path = Path(path)
    header = path.with_suffix(".json")
    path.write_bytes(net.theta.astype("<f8").tobytes())
    header.write_text(json.dumps(net.header(), indent=2) + "\n")
    return path, header


def load_params(path) -> _Network:
    path = Path(path)
    hdr = json.loads(path.with_suffix(".json").read_text())
    theta = np.frombuffer(path.read_bytes(), dtype="<f8")
    if theta.shape[0] != hdr["count"]:
        raise ValueError(f"blob holds {theta.shape[0]} values, header says {hdr['count']}")
    net = build_network(hdr["kind"], hdr["widths"], hdr.get("G", 0), hdr.get("k", 0),
                        hdr["lo"], hdr["hi"])
    net.set_theta(theta)
    net.seed = hdr.get("seed")
    return net
