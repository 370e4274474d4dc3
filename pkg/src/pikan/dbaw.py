"""Dynamic balancing adaptive weighting of multi-task PINN losses.

Each task j (residual, initial, boundary) carries a trainable ``log sigma_j``.
Its weight is the inverse of ``sigma_j^2 + 1/gamma(t)``, clamped from above
by ``gamma(t)``, where the bound decays exponentially from
``gamma_max + gamma_min`` towards ``gamma_min``::

    gamma(t)  = gamma_max exp(-alpha t) + gamma_min
    lambda_j  = min(1 / (sigma_j^2 + 1/gamma + eps), gamma)
    L         = sum_j lambda_j L_j + log(sigma_j^2 + 1/gamma)

``gamma`` is a schedule, not a parameter, so it is a constant on the tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from pikan import autodiff as ad
from pikan.autodiff import Tape, Var

TASKS = ("r", "ic", "bc")


class MissingTaskError(KeyError):
    """A loss bundle names a task that has no weight or log-sigma entry."""


@dataclass
class DbawState:
    tasks: tuple[str, ...] = TASKS
    gamma_max: float = 100.0
    gamma_min: float = 1.0
    alpha: float = 1e-4
    epsilon: float = 1e-12
    log_sigma: np.ndarray = field(default=None)

    def __post_init__(self):
        self.tasks = tuple(self.tasks)
        if len(set(self.tasks)) != len(self.tasks) or not self.tasks:
            raise ValueError(f"task labels must be unique and non-empty: {self.tasks}")
        if not (self.gamma_max > self.gamma_min > 0):
            raise ValueError(f"need gamma_max > gamma_min > 0, got "
                             f"{self.gamma_max}, {self.gamma_min}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.log_sigma is None:
            self.log_sigma = np.zeros(len(self.tasks))
        else:
            self.log_sigma = np.array(self.log_sigma, dtype=np.float64)
            if self.log_sigma.shape != (len(self.tasks),):
                raise ValueError("log_sigma must have one entry per task")

    def index(self, task: str) -> int:
        try:
            return self.tasks.index(task)
        except ValueError:
            raise MissingTaskError(f"no log-sigma entry for task {task!r}") from None

    def sigma2(self) -> np.ndarray:
        return np.exp(2.0 * self.log_sigma)


def gamma_bound(t, s: DbawState) -> float:
    if t < 0:
        raise ValueError("epoch must be non-negative")
    return s.gamma_max * math.exp(-s.alpha * t) + s.gamma_min


def adaptive_weights(s: DbawState, t) -> dict[str, float]:
    g = gamma_bound(t, s)
    lam = np.minimum(1.0 / (s.sigma2() + 1.0 / g + s.epsilon), g)
    return dict(zip(s.tasks, lam.tolist()))


def register_log_sigma(tape: Tape, s: DbawState) -> dict[str, Var]:
    """One scalar parameter leaf per task, registered in task order."""
    return {task: tape.param(s.log_sigma[i]) for i, task in enumerate(s.tasks)}


def _log_sigma_nodes(tape: Tape, s: DbawState, log_sigma) -> dict[str, Var]:
    if log_sigma is None:
        return {task: tape.const(s.log_sigma[i]) for i, task in enumerate(s.tasks)}
    return log_sigma


def _check_tasks(bundle: Mapping, known) -> None:
    for task in bundle:
        if task not in known:
            raise MissingTaskError(f"no entry for task {task!r}")


def adaptive_total_loss(bundle: Mapping[str, Var], s: DbawState, t,
                        log_sigma: Mapping[str, Var] | None = None) -> Var:
    """Clamped uncertainty-weighted loss as a tape node.

    ``log_sigma`` holds the tape leaves to differentiate against (see
    :func:`register_log_sigma`); without it the current state values enter
    as constants.
    """
    _check_tasks(bundle, s.tasks)
    if not bundle:
        raise ValueError("empty loss bundle")
    tape = next(iter(bundle.values())).tape
    ls = _log_sigma_nodes(tape, s, log_sigma)
    _check_tasks(bundle, ls)
    g = gamma_bound(t, s)
    total = None
    for task, L in bundle.items():
        s2 = ad.exp(ad.affine(ls[task], 2.0))
        lam = ad.minimum(1.0 / ad.affine(s2, 1.0, 1.0 / g + s.epsilon), g)
        term = lam * L + ad.log(ad.affine(s2, 1.0, 1.0 / g))
        total = term if total is None else total + term
    return total


def fixed_total_loss(bundle: Mapping[str, Var], weights: Mapping[str, float]) -> Var:
    _check_tasks(bundle, weights)
    if not bundle:
        raise ValueError("empty loss bundle")
    total = None
    for task, L in bundle.items():
        w = float(weights[task])
        if not w > 0:
            raise ValueError(f"weight for task {task!r} must be positive, got {w}")
        term = L if w == 1.0 else w * L
        total = term if total is None else total + term
    return total


def uncertainty_nll_loss(bundle: Mapping[str, Var], s: DbawState,
                         log_sigma: Mapping[str, Var] | None = None) -> Var:
    """Unclamped homoscedastic form: sum L_j / (2 sigma_j^2) + log(sigma_j^2) / 2."""
    _check_tasks(bundle, s.tasks)
    if not bundle:
        raise ValueError("empty loss bundle")
    tape = next(iter(bundle.values())).tape
    ls = _log_sigma_nodes(tape, s, log_sigma)
    total = None
    for task, L in bundle.items():
        inv = ad.exp(ad.affine(ls[task], -2.0))
        term = 0.5 * (inv * L) + ls[task]
        total = term if total is None else total + term
    return total


def smoothness_penalty(coeffs: list[Var], weight: float) -> Var | None:
    """weight * mean squared second difference of spline coefficients, per edge.

    Returns ``None`` when the weight is zero so the loss graph is untouched.
    """
    if weight == 0.0 or not coeffs:
        return None
    total = None
    for C in coeffs:
        nb = C.shape[-1]
        if nb < 3:
            continue
        d2 = C[..., 2:] - 2.0 * C[..., 1:-1] + C[..., :-2]
        term = ad.square(d2).mean()
        total = term if total is None else total + term
    return None if total is None else float(weight) * total
