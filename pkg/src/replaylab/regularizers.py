"""Self-supervised and parameter-anchoring regularizers.

Two families:

* prediction-space penalties that only read softmax outputs and consume no
  labels: the confidence/diversity pair (``im_loss``) and plain entropy
  minimization (``em_loss``);
* parameter-space penalties that anchor weights near values that mattered
  for earlier tasks: a Fisher-weighted quadratic (``ewc_penalty``) and a
  path-importance quadratic (``si_penalty``).

All loss values are scalars to be minimized; every penalty ships with its
exact gradient so composites stay finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError
from .net import PROB_FLOOR, backward, cross_entropy_grad  # noqa: F401 (cross_entropy_grad re-exported for composites)
from .net import forward, softmax, softmax_grad_to_logits


class RegKind(str, Enum):
    NONE = "none"
    IM = "im"       # confidence + diversity
    EM = "em"       # confidence only
    EWC = "ewc"
    SI = "si"


class RegTarget(str, Enum):
    """Which samples a prediction-space regularizer is evaluated on."""

    CURRENT = "ct"
    BUFFER = "bf"
    BOTH = "all"


# --------------------------------------------------------------------------
# prediction-space terms
# --------------------------------------------------------------------------

def entropy_term(probs):
    """Mean per-row Shannon entropy (nats), in [0, ln K]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0)
    return float(-(p * np.log(p)).sum(axis=1).mean())


def diversity_term(probs):
    """Negative entropy of the batch-mean prediction, in [-ln K, 0]."""
    probs = np.asarray(probs, dtype=np.float64)
    marginal = np.clip(probs.mean(axis=0), PROB_FLOOR, 1.0)
    return float((marginal * np.log(marginal)).sum())


def im_loss(probs):
    """Confidence plus diversity; <= 0 for every valid batch, minimum -ln K."""
    return entropy_term(probs) + diversity_term(probs)


def em_loss(probs):
    """Entropy minimization objective; identical to the confidence term."""
    return entropy_term(probs)


def _entropy_grad_wrt_probs(probs):
    p = np.clip(probs, PROB_FLOOR, 1.0)
    return -(np.log(p) + 1.0) / probs.shape[0]


def _diversity_grad_wrt_probs(probs):
    marginal = np.clip(probs.mean(axis=0), PROB_FLOOR, 1.0)
    row = (np.log(marginal) + 1.0) / probs.shape[0]
    return np.broadcast_to(row, probs.shape)


def em_grad_wrt_logits(probs):
    """Exact gradient of :func:`em_loss` through row-wise softmax."""
    probs = np.asarray(probs, dtype=np.float64)
    return softmax_grad_to_logits(probs, _entropy_grad_wrt_probs(probs))


def im_grad_wrt_logits(probs):
    """Exact gradient of :func:`im_loss`; the diversity part couples all rows."""
    probs = np.asarray(probs, dtype=np.float64)
    grad_wrt_probs = _entropy_grad_wrt_probs(probs) + _diversity_grad_wrt_probs(probs)
    return softmax_grad_to_logits(probs, grad_wrt_probs)


# --------------------------------------------------------------------------
# parameter-space penalties
# --------------------------------------------------------------------------

@dataclass
class EwcState:
    """Anchor parameters and accumulated diagonal Fisher weights."""

    anchor: np.ndarray
    fisher: np.ndarray
    strength: float = 1.0

    @classmethod
    def fresh(cls, net, strength=1.0):
        theta = net.to_vector()
        return cls(anchor=theta, fisher=np.zeros_like(theta), strength=strength)


def ewc_penalty(theta, state):
    """0.5 * strength * sum_i F_i (theta_i - anchor_i)^2, always >= 0."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != state.anchor.shape:
        raise ConfigError(f"theta shape {theta.shape} != anchor shape {state.anchor.shape}")
    delta = theta - state.anchor
    return float(0.5 * state.strength * (state.fisher * delta * delta).sum())


def ewc_penalty_grad(theta, state):
    return state.strength * state.fisher * (np.asarray(theta, dtype=np.float64) - state.anchor)


def ewc_consolidate(net, features, labels, state):
    """Task-boundary update: re-anchor and add this task's diagonal Fisher.

    The Fisher diagonal is the per-sample squared gradient of the correct
    label's log-probability, averaged over the task data.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0:
        raise DataError("cannot estimate parameter importance from empty task data")
    increment = np.zeros_like(state.fisher)
    for i in range(features.shape[0]):
        cache = forward(net, features[i:i + 1])
        probs = softmax(cache.logits)
        upstream = probs.copy()
        upstream[0, labels[i]] -= 1.0  # d(-log p_y)/d logits for one sample
        grad = backward(net, cache, upstream).to_vector()
        increment += grad * grad
    increment /= features.shape[0]
    return EwcState(anchor=net.to_vector(), fisher=state.fisher + increment,
                    strength=state.strength)


@dataclass
class SiState:
    """Per-parameter path accumulators and consolidated importance weights."""

    omega: np.ndarray        # running -grad * step contributions, reset each task
    importance: np.ndarray   # consolidated weights, >= 0
    ref: np.ndarray          # anchor used by the penalty
    task_start: np.ndarray   # parameters at the start of the current task
    damping: float = 0.1
    strength: float = 1.0

    @classmethod
    def fresh(cls, net, strength=1.0, damping=0.1):
        if damping <= 0:
            raise ConfigError("damping must be > 0")
        theta = net.to_vector()
        zeros = np.zeros_like(theta)
        return cls(omega=zeros.copy(), importance=zeros.copy(),
                   ref=theta.copy(), task_start=theta.copy(),
                   damping=damping, strength=strength)


def si_accumulate(state, grad, prev_theta, new_theta):
    """After each optimizer step: omega += -g * (theta_new - theta_prev)."""
    state.omega += -np.asarray(grad) * (np.asarray(new_theta) - np.asarray(prev_theta))
    return state


def si_consolidate(state, theta_end):
    """Task-boundary update: fold the path accumulator into importance.

    Negative accumulators are clamped to zero; the squared total drift over
    the task plus the damping constant normalizes the contribution.
    """
    theta_end = np.asarray(theta_end, dtype=np.float64)
    drift = theta_end - state.task_start
    state.importance += np.maximum(state.omega, 0.0) / (drift * drift + state.damping)
    state.omega = np.zeros_like(state.omega)
    state.ref = theta_end.copy()
    state.task_start = theta_end.copy()
    return state


def si_penalty(theta, state):
    """strength * sum_k importance_k (theta_k - ref_k)^2, always >= 0."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != state.ref.shape:
        raise ConfigError(f"theta shape {theta.shape} != ref shape {state.ref.shape}")
    delta = theta - state.ref
    return float(state.strength * (state.importance * delta * delta).sum())


def si_penalty_grad(theta, state):
    return 2.0 * state.strength * state.importance * (np.asarray(theta, dtype=np.float64) - state.ref)
