"""Fast consistency checks behind ``pikan check``."""

from __future__ import annotations

import numpy as np

from pikan import approximator as ap
from pikan import autodiff as ad
from pikan import bspline, pde


def _counts():
    kan = ap.param_count(ap.build_network("kan", [2, 20, 20, 20, 1], 20, 4))
    mlp = ap.param_count(ap.build_network("mlp", [2] + [64] * 6 + [1]))
    return kan == 22360 and mlp == 21057, f"kan={kan} mlp={mlp}"


def _spline():
    kv = bspline.make_knots(-1.0, 1.0, 7, 4)
    x = np.random.default_rng(0).uniform(-1, 1, 1000)
    T = bspline.basis_table(kv, x, 1)
    pu = np.abs(T[0].sum(-1) - 1).max()
    dsum = np.abs(T[1].sum(-1)).max()
    h = 1e-6
    xi = np.clip(x, -1 + h, 1 - h)
    fd = (bspline.basis_values(kv, xi + h) - bspline.basis_values(kv, xi - h)) / (2 * h)
    der = np.abs(fd - bspline.basis_derivatives(kv, xi, 1)).max() / np.abs(fd).max()
    return pu < 1e-12 and dsum < 1e-10 and der < 1e-6, \
        f"unity={pu:.1e} dsum={dsum:.1e} d1_fd={der:.1e}"


def _gradient():
    net = ap.init_params(ap.build_network("kan", [2, 3, 1], 4, 3), 3)
    X = np.random.default_rng(1).uniform(-1, 1, (8, 2))

    def loss(theta):
        net.set_theta(theta)
        tape = ad.Tape()
        P = net.register(tape)
        u = net.forward(X, tape, params=P)
        return tape, ad.square(u.dxx + u.v).mean()

    theta = net.theta.copy()
    tape, L = loss(theta)
    g = np.concatenate([a.ravel() for a in ad.backward(tape, L)])
    e = 1e-6
    fd = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += e
        tm[i] -= e
        fd[i] = (float(loss(tp)[1].value) - float(loss(tm)[1].value)) / (2 * e)
    net.set_theta(theta)
    err = np.linalg.norm(g - fd) / np.linalg.norm(fd)
    return err < 1e-5, f"rel={err:.1e}"


def _residuals():
    rng = np.random.default_rng(2)
    worst = 0.0
    for prob in (pde.KleinGordon(), pde.Helmholtz()):
        lo, hi = np.asarray(prob.lo), np.asarray(prob.hi)
        X = lo + (hi - lo) * rng.random((100, 2))
        tape = ad.Tape()
        r = prob.residual(prob.exact_jet(tape, X), X)
        worst = max(worst, float(np.abs(r.value).max()))
    return worst < 1e-6, f"max|r|={worst:.1e}"


CHECKS = {
    "parameter counts": _counts,
    "spline basis": _spline,
    "parameter gradient": _gradient,
    "exact-solution residuals": _residuals,
}


def run_checks() -> bool:
    ok = True
    for name, fn in CHECKS.items():
        passed, detail = fn()
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
