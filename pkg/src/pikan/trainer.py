"""Training loop: one tape per epoch, separate Adam states for theta and log sigma."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from pikan import autodiff as ad
from pikan import dbaw
from pikan.autodiff import Tape
from pikan.config import ExperimentConfig
from pikan.dbaw import DbawState

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "gamma", "lambda_r", "lambda_ic", "lambda_bc",
                   "L_r", "L_ic", "L_bc", "L_total", "val_l2")


class TrainingAborted(RuntimeError):
    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    step: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Bias-corrected Adam; ``params`` is updated in place and returned.

    Non-finite gradients leave both the parameters and the state untouched.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("non-finite gradient, step rejected")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def relative_l2(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"need equal non-empty lengths, got {pred.shape} and {truth.shape}")
    den = np.linalg.norm(truth)
    if den == 0.0:
        raise ZeroDivisionError("relative L2 undefined: reference is identically zero")
    return float(np.linalg.norm(pred - truth) / den)


@dataclass
class TrainRecord:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_l2: float = math.inf
    best_theta: np.ndarray | None = None
    initial_l2: float = math.inf
    final_l2: float = math.nan
    log_sigma: np.ndarray | None = None
    wall_time: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows])


def epoch_seed(seed: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(epoch)])


def train(problem, net, cfg: ExperimentConfig, *, validation=None,
          on_row: Callable[[dict], None] | None = None, state: DbawState | None = None,
          ) -> TrainRecord:
    """Run ``cfg.epochs`` full-batch epochs and track the best validation snapshot.

    ``validation`` is an (X, truth) pair; by default the problem's reference
    grid of shape ``cfg.eval_grid``. ``on_row`` receives every history row as
    soon as it is complete.
    """
    t0 = time.perf_counter()
    use_dbaw = cfg.weighting == "dbaw"
    tasks = problem.tasks
    if state is None:
        state = DbawState(tasks=tasks, gamma_max=cfg.gamma_max, gamma_min=cfg.gamma_min,
                          alpha=cfg.alpha, epsilon=cfg.epsilon)
    weights = {t: cfg.weights.get(t, 1.0) for t in tasks}
    X_val, u_val = validation if validation is not None else problem.reference(cfg.eval_grid)

    adam_theta = AdamState(net.theta.size, lr=cfg.lr_theta)
    adam_sigma = AdamState(len(state.tasks), lr=cfg.lr_sigma)
    rec = TrainRecord()
    rec.initial_l2 = relative_l2(net.predict(X_val), u_val)
    rec.best_l2 = rec.initial_l2
    rec.best_theta = net.theta.copy()
    smooth_keys = [k for k in net.arrays() if k.startswith("spline_coeffs.")]

    for epoch in range(1, cfg.epochs + 1):
        batch = problem.sample_batch(cfg.counts(), seed=epoch_seed(cfg.seed, epoch))
        tape = Tape()
        P = net.register(tape)
        bundle = problem.loss_terms(net, batch, tape, params=P)
        row = {c: None for c in HISTORY_COLUMNS}
        row["epoch"] = epoch
        if use_dbaw:
            ls = dbaw.register_log_sigma(tape, state)
            lam = dbaw.adaptive_weights(state, epoch)
            total = dbaw.adaptive_total_loss(bundle, state, epoch, ls)
            row["gamma"] = dbaw.gamma_bound(epoch, state)
        else:
            lam = weights
            total = dbaw.fixed_total_loss(bundle, weights)
        penalty = dbaw.smoothness_penalty([P[k] for k in smooth_keys], cfg.smoothness)
        if penalty is not None:
            total = total + penalty
        for t in tasks:
            row[f"lambda_{t}"] = float(lam[t])
            row[f"L_{t}"] = float(bundle[t].value)
        row["L_total"] = float(total.value)
        if not math.isfinite(row["L_total"]):
            raise TrainingAborted(epoch, "non-finite loss")

        try:
            grads = ad.backward(tape, total)
        except FloatingPointError as exc:
            raise TrainingAborted(epoch, str(exc)) from None
        n_net = len(P)
        g_theta = np.concatenate([g.ravel() for g in grads[:n_net]])
        if cfg.grad_clip is not None:
            norm = float(np.linalg.norm(g_theta))
            if norm > cfg.grad_clip:
                g_theta *= cfg.grad_clip / norm
        try:
            adam_step(adam_theta, net.theta, g_theta)
            if use_dbaw:
                g_sigma = np.array([float(g) for g in grads[n_net:]])
                adam_step(adam_sigma, state.log_sigma, g_sigma)
        except NonFiniteGradient as exc:
            raise TrainingAborted(epoch, str(exc)) from None

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            l2 = relative_l2(net.predict(X_val), u_val)
            row["val_l2"] = l2
            if l2 < rec.best_l2:
                rec.best_l2, rec.best_epoch = l2, epoch
                rec.best_theta = net.theta.copy()
            rec.final_l2 = l2
            log.info("epoch %d  loss %.4e  val %.4e", epoch, row["L_total"], l2)
        rec.rows.append(row)
        if on_row is not None:
            on_row(row)

    if cfg.epochs == 0:
        rec.final_l2 = rec.initial_l2
    rec.log_sigma = state.log_sigma.copy()
    rec.wall_time = time.perf_counter() - t0
    return rec
