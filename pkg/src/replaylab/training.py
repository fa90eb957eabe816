"""Rehearsal training loops and their regularized composites.

Three method losses share one pattern: cross-entropy on the current batch
plus optional replay terms drawn from the buffer. Replay only starts with
the second task, so the buffer never feeds samples back into the task that
produced them. An active prediction- or parameter-space regularizer R is
blended as ``(1 - w) * method_loss + w * R``; with weight 0 or no
regularizer the step is arithmetically identical to the plain method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .buffer import BufferEntry, ReplayBuffer, stack_entries
from .errors import ConfigError, NumericError
from .metrics import AccuracyMatrix
from .net import (Gradients, Mlp, backward, cross_entropy, cross_entropy_grad,
                  forward, sgd_step, softmax)
from .regularizers import (EwcState, RegKind, RegTarget, SiState,
                           em_grad_wrt_logits, em_loss, ewc_consolidate,
                           ewc_penalty, ewc_penalty_grad, im_grad_wrt_logits,
                           im_loss, si_accumulate, si_consolidate, si_penalty,
                           si_penalty_grad)


class Method(str, Enum):
    ER = "er"
    DER = "der"
    DERPP = "derpp"


@dataclass
class TrainConfig:
    epochs_per_task: int = 5
    batch_size: int = 16
    lr: float = 0.1
    seed: int = 0
    method: Method = Method.ER
    alpha: float = 0.3             # logit distillation weight (DER, DER++)
    beta: float = 0.5              # replay cross-entropy weight (DER++ only)
    regularizer: RegKind = RegKind.NONE
    reg_weight: float = 0.5
    reg_target: RegTarget = RegTarget.CURRENT
    per_class_budget: int = 5
    ewc_strength: float = 1.0
    si_strength: float = 1.0
    si_damping: float = 0.1
    hidden_dims: tuple = (64,)
    insert_at: str = "batch"       # or "task_end"

    def validate(self):
        if self.epochs_per_task < 0:
            raise ConfigError("epochs_per_task must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.per_class_budget < 1:
            raise ConfigError("per_class_budget must be >= 1")
        if not 0.0 <= self.reg_weight <= 1.0:
            raise ConfigError("reg_weight must lie in [0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.si_damping <= 0:
            raise ConfigError("si_damping must be > 0")
        if self.insert_at not in ("batch", "task_end"):
            raise ConfigError(f"unknown insert_at '{self.insert_at}'")
        return self


@dataclass
class LossBreakdown:
    """Weighted contributions; they sum to ``total`` by construction."""

    total: float
    ce_current: float
    ce_replay: float = 0.0
    distill: float = 0.0
    reg: float = 0.0


def _ce_term(net, x, y):
    cache = forward(net, x)
    probs = softmax(cache.logits)
    return cross_entropy(probs, y), cache, probs, cross_entropy_grad(probs, y)


def _distill_term(net, x, target_logits):
    cache = forward(net, x)
    with np.errstate(over="ignore", invalid="ignore"):
        diff = cache.logits - target_logits
        value = float((diff * diff).mean())
        grad = 2.0 * diff / diff.size
    return value, cache, softmax(cache.logits), grad


def er_loss(net, cur_x, cur_y, replay_x=None, replay_y=None):
    """CE(current) + CE(replay); the replay term is skipped when absent."""
    value, cache, _, up = _ce_term(net, cur_x, cur_y)
    grads = backward(net, cache, up)
    if replay_x is not None:
        rep_value, rep_cache, _, rep_up = _ce_term(net, replay_x, replay_y)
        value += rep_value
        grads.add_scaled(backward(net, rep_cache, rep_up))
    return value, grads


def der_loss(net, cur_x, cur_y, replay_x=None, replay_logits=None, alpha=0.3):
    """CE(current) + alpha * MSE(current logits on replay inputs, stored logits)."""
    if replay_x is not None and replay_logits is None:
        raise ConfigError("replay entries carry no stored logits; required for logit distillation")
    value, cache, _, up = _ce_term(net, cur_x, cur_y)
    grads = backward(net, cache, up)
    if replay_x is not None:
        mse, rep_cache, _, rep_up = _distill_term(net, replay_x, replay_logits)
        value += alpha * mse
        grads.add_scaled(backward(net, rep_cache, rep_up), alpha)
    return value, grads


def derpp_loss(net, cur_x, cur_y, rep1_x=None, rep1_logits=None,
               rep2_x=None, rep2_y=None, alpha=0.3, beta=0.5):
    """DER plus a beta-weighted cross-entropy term on a second replay batch."""
    value, grads = der_loss(net, cur_x, cur_y, rep1_x, rep1_logits, alpha)
    if rep2_x is not None:
        rep_value, rep_cache, _, rep_up = _ce_term(net, rep2_x, rep2_y)
        value += beta * rep_value
        grads.add_scaled(backward(net, rep_cache, rep_up), beta)
    return value, grads


@dataclass
class _States:
    """Mutable per-run regularizer state owned by the training loop."""

    ewc: EwcState | None = None
    si: SiState | None = None


def _draw_replay(buffer, batch_size, task_index, want_logits):
    """Replay batch for one step, or None on the first task / empty buffer."""
    if task_index == 0 or len(buffer) == 0:
        return None
    entries = buffer.sample(batch_size)
    x, y, logits = stack_entries(entries)
    if want_logits and logits is None:
        raise ConfigError("buffer entries lack stored logits; required for logit distillation")
    return x, y, logits


def train_batch(net, cfg, cur_x, cur_y, buffer, states, task_index):
    """One optimizer step on the regularized method loss.

    Returns the loss breakdown. Raises :class:`NumericError` if the loss or
    its gradient goes non-finite (diverging run).
    """
    needs_logits = cfg.method in (Method.DER, Method.DERPP)
    reg_active = cfg.regularizer != RegKind.NONE and cfg.reg_weight > 0.0
    w = cfg.reg_weight

    ce_cur, cache_cur, probs_cur, up_cur = _ce_term(net, cur_x, cur_y)
    method_value = ce_cur
    ce_rep = 0.0
    distill = 0.0

    rep1 = _draw_replay(buffer, cur_x.shape[0], task_index, needs_logits)
    cache_rep, probs_rep, up_rep = None, None, None
    cache_rep2, up_rep2 = None, None
    if rep1 is not None:
        rep_x, rep_y, rep_logits = rep1
        if cfg.method == Method.ER:
            ce_rep, cache_rep, probs_rep, up_rep = _ce_term(net, rep_x, rep_y)
            method_value += ce_rep
        else:
            mse, cache_rep, probs_rep, rep_up_raw = _distill_term(net, rep_x, rep_logits)
            distill = cfg.alpha * mse
            method_value += distill
            up_rep = cfg.alpha * rep_up_raw
        if cfg.method == Method.DERPP:
            rep2_x, rep2_y, _ = _draw_replay(buffer, cur_x.shape[0], task_index, False)
            ce2, cache_rep2, _, up2_raw = _ce_term(net, rep2_x, rep2_y)
            ce_rep = cfg.beta * ce2
            method_value += ce_rep
            up_rep2 = cfg.beta * up2_raw

    reg_value = 0.0
    reg_up_cur = None
    reg_up_rep = None
    reg_param_grad = None
    if reg_active:
        if cfg.regularizer in (RegKind.IM, RegKind.EM):
            loss_fn = im_loss if cfg.regularizer == RegKind.IM else em_loss
            grad_fn = im_grad_wrt_logits if cfg.regularizer == RegKind.IM else em_grad_wrt_logits
            parts = []
            if cfg.reg_target in (RegTarget.CURRENT, RegTarget.BOTH):
                parts.append(("cur", probs_cur))
            if cfg.reg_target in (RegTarget.BUFFER, RegTarget.BOTH) and probs_rep is not None:
                parts.append(("rep", probs_rep))
            if parts:
                target = np.concatenate([p for _, p in parts])
                reg_value = loss_fn(target)
                grad = grad_fn(target)
                offset = 0
                for name, p in parts:
                    piece = grad[offset:offset + p.shape[0]]
                    offset += p.shape[0]
                    if name == "cur":
                        reg_up_cur = piece
                    else:
                        reg_up_rep = piece
        elif cfg.regularizer == RegKind.EWC:
            if states.ewc is None:
                raise ConfigError("EWC selected but no EwcState provided")
            theta = net.to_vector()
            reg_value = ewc_penalty(theta, states.ewc)
            reg_param_grad = ewc_penalty_grad(theta, states.ewc)
        elif cfg.regularizer == RegKind.SI:
            if states.si is None:
                raise ConfigError("SI selected but no SiState provided")
            theta = net.to_vector()
            reg_value = si_penalty(theta, states.si)
            reg_param_grad = si_penalty_grad(theta, states.si)
        total = (1.0 - w) * method_value + w * reg_value
        scale = 1.0 - w
    else:
        total = method_value
        scale = 1.0

    if not math.isfinite(total):
        raise NumericError(f"non-finite loss at task {task_index}; run diverged")

    upstream_cur = scale * up_cur
    if reg_up_cur is not None:
        upstream_cur = upstream_cur + w * reg_up_cur
    grads = backward(net, cache_cur, upstream_cur)
    if cache_rep is not None:
        upstream_rep = scale * up_rep
        if reg_up_rep is not None:
            upstream_rep = upstream_rep + w * reg_up_rep
        grads.add_scaled(backward(net, cache_rep, upstream_rep))
    if cache_rep2 is not None:
        grads.add_scaled(backward(net, cache_rep2, scale * up_rep2))
    if reg_param_grad is not None:
        grads.add_scaled(Gradients.from_vector(w * reg_param_grad, net))
    if not grads.all_finite():
        raise NumericError(f"non-finite gradient at task {task_index}; run diverged")

    if states.si is not None and cfg.regularizer == RegKind.SI:
        prev_theta = net.to_vector()
        sgd_step(net, grads, cfg.lr)
        si_accumulate(states.si, grads.to_vector(), prev_theta, net.to_vector())
    else:
        sgd_step(net, grads, cfg.lr)

    if cfg.insert_at == "batch":
        _offer_batch(buffer, cur_x, cur_y, cache_cur.logits, task_index, needs_logits)

    return LossBreakdown(
        total=total,
        ce_current=scale * ce_cur,
        ce_replay=scale * ce_rep,
        distill=scale * distill,
        reg=w * reg_value if reg_active else 0.0,
    )


def _offer_batch(buffer, x, y, logits, task_index, keep_logits):
    for i in range(x.shape[0]):
        buffer.insert(BufferEntry(
            features=x[i].copy(),
            label=int(y[i]),
            logits=logits[i].copy() if keep_logits else None,
            insert_task=task_index,
        ))


def train_task(net, cfg, task, buffer, states, rng):
    """All epochs for one task, then the task-boundary hooks.

    Hooks fire even for a zero-epoch budget: consolidation snapshots and
    task-end buffer fills do not depend on having trained.
    """
    records = []
    n = task.train_features.shape[0]
    for epoch in range(cfg.epochs_per_task):
        order = rng.permutation(n)
        sums = np.zeros(5)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bd = train_batch(net, cfg, task.train_features[idx], task.train_labels[idx],
                             buffer, states, task.index)
            sums += (bd.total, bd.ce_current, bd.ce_replay, bd.distill, bd.reg)
            batches += 1
        if batches:
            records.append({
                "task": task.index, "epoch": epoch,
                "total": sums[0] / batches, "ce_current": sums[1] / batches,
                "ce_replay": sums[2] / batches, "distill": sums[3] / batches,
                "reg": sums[4] / batches,
            })
    if cfg.insert_at == "task_end":
        cache = forward(net, task.train_features)
        _offer_batch(buffer, task.train_features, task.train_labels, cache.logits,
                     task.index, cfg.method in (Method.DER, Method.DERPP))
    if cfg.regularizer == RegKind.EWC and states.ewc is not None:
        states.ewc = ewc_consolidate(net, task.train_features, task.train_labels, states.ewc)
    if cfg.regularizer == RegKind.SI and states.si is not None:
        si_consolidate(states.si, net.to_vector())
    return records


def evaluate_accuracy(net, features, labels):
    """Fraction of argmax predictions matching the labels. Read-only."""
    cache = forward(net, features)
    preds = cache.logits.argmax(axis=1)
    return float((preds == np.asarray(labels)).mean())


def run_sequence(stream, cfg):
    """Train through a task stream and measure the full accuracy grid.

    Returns (accuracy matrix, trained net, per-epoch loss records). After
    each task j, every task i <= j is evaluated on its own test split.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    net = Mlp.init(stream.input_dim, cfg.hidden_dims, stream.num_classes, rng)
    buffer = ReplayBuffer(cfg.per_class_budget, stream.num_classes, rng)
    states = _States()
    if cfg.regularizer == RegKind.EWC:
        states.ewc = EwcState.fresh(net, cfg.ewc_strength)
    elif cfg.regularizer == RegKind.SI:
        states.si = SiState.fresh(net, cfg.si_strength, cfg.si_damping)
    matrix = AccuracyMatrix(stream.num_tasks)
    logs = []
    for task in stream.tasks:
        logs.extend(train_task(net, cfg, task, buffer, states, rng))
        for earlier in stream.tasks[:task.index + 1]:
            matrix.record(earlier.index, task.index,
                          evaluate_accuracy(net, earlier.test_features, earlier.test_labels))
    return matrix, net, logs
