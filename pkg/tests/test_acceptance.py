"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report. Tolerances are fixed here, not calibrated.
"""

import math
import time

import numpy as np

from replaylab import (BufferEntry, Mlp, RegKind, ReplayBuffer, compute_acc,
                       compute_fr, cross_entropy, der_loss, derpp_loss,
                       em_loss, er_loss, ewc_penalty, ewc_penalty_grad,
                       forward, im_loss, make_synthetic_gaussian, run_sequence,
                       si_penalty, si_penalty_grad, softmax,
                       split_class_incremental, TrainConfig)
from replaylab.harness import config_from_dict, emit_results, run_grid
from replaylab.metrics import AccuracyMatrix
from replaylab.regularizers import (EwcState, SiState, em_grad_wrt_logits,
                                    im_grad_wrt_logits)
from replaylab.net import backward, cross_entropy_grad, softmax_grad_to_logits

import oracles


def report(number, ok, detail):
    print(f"criterion {number:02d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number} failed: {detail}"


def test_criterion_01_analytic_im_values():
    start = time.perf_counter()
    worst_uniform = 0.0
    worst_onehot = 0.0
    for k in (2, 4, 10):
        uniform = np.full((3 * k, k), 1.0 / k)
        worst_uniform = max(worst_uniform, abs(im_loss(uniform)))
        one_hots = np.eye(k)
        worst_onehot = max(worst_onehot, abs(im_loss(one_hots) + math.log(k)))
    elapsed = time.perf_counter() - start
    ok = worst_uniform <= 1e-9 and worst_onehot <= 1e-6 and elapsed < 1.0
    report(1, ok, f"uniform dev {worst_uniform:.2e} (<=1e-9), "
                  f"one-hot dev {worst_onehot:.2e} (<=1e-6), {elapsed:.2f}s")


def test_criterion_02_jensen_bound_fuzz():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(10_000):
        b = int(rng.integers(1, 65))
        k = int(rng.integers(2, 21))
        probs = softmax(rng.uniform(-8, 8, size=(b, k)))
        value = im_loss(probs)
        if value > 1e-9 or value < -math.log(k) - 1e-9:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10.0
    report(2, ok, f"10000 fuzzed batches, {violations} bound violations, {elapsed:.1f}s")


def _gradient_cases(rng):
    """Loss/grad pairs on a random net with <= 200 parameters."""
    dims_pool = [(3, 8, 4), (4, 10, 5), (2, 6, 6, 3), (5, 12, 6)]
    dims = dims_pool[int(rng.integers(len(dims_pool)))]
    net = Mlp.init(dims[0], dims[1:-1], dims[-1], rng)
    assert net.num_params <= 200
    k = net.num_classes
    x = rng.standard_normal((6, net.input_dim))
    y = rng.integers(k, size=6)
    rx = rng.standard_normal((5, net.input_dim))
    ry = rng.integers(k, size=5)
    stored = rng.standard_normal((5, k))
    r2x = rng.standard_normal((5, net.input_dim))
    r2y = rng.integers(k, size=5)
    ewc = EwcState(anchor=rng.standard_normal(net.num_params),
                   fisher=rng.uniform(0, 2, net.num_params), strength=0.8)
    si = SiState(omega=np.zeros(net.num_params),
                 importance=rng.uniform(0, 2, net.num_params),
                 ref=rng.standard_normal(net.num_params),
                 task_start=np.zeros(net.num_params), strength=0.6)

    def ce_grads(m):
        cache = forward(m, x)
        probs = softmax(cache.logits)
        return backward(m, cache, cross_entropy_grad(probs, y)).to_vector()

    def pred_grads(m, grad_fn):
        cache = forward(m, x)
        probs = softmax(cache.logits)
        return backward(m, cache, grad_fn(probs)).to_vector()

    return net, [
        ("ce", lambda m: cross_entropy(softmax(forward(m, x).logits), y), ce_grads),
        ("im", lambda m: im_loss(softmax(forward(m, x).logits)),
         lambda m: pred_grads(m, im_grad_wrt_logits)),
        ("em", lambda m: em_loss(softmax(forward(m, x).logits)),
         lambda m: pred_grads(m, em_grad_wrt_logits)),
        ("ewc", lambda m: ewc_penalty(m.to_vector(), ewc),
         lambda m: ewc_penalty_grad(m.to_vector(), ewc)),
        ("si", lambda m: si_penalty(m.to_vector(), si),
         lambda m: si_penalty_grad(m.to_vector(), si)),
        ("er", lambda m: er_loss(m, x, y, rx, ry)[0],
         lambda m: er_loss(m, x, y, rx, ry)[1].to_vector()),
        ("der", lambda m: der_loss(m, x, y, rx, stored, alpha=0.3)[0],
         lambda m: der_loss(m, x, y, rx, stored, alpha=0.3)[1].to_vector()),
        ("derpp", lambda m: derpp_loss(m, x, y, rx, stored, r2x, r2y, 0.3, 0.5)[0],
         lambda m: derpp_loss(m, x, y, rx, stored, r2x, r2y, 0.3, 0.5)[1].to_vector()),
    ]


def test_criterion_03_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    worst_case = ""
    for _ in range(20):
        net, cases = _gradient_cases(rng)
        coords = rng.choice(net.num_params, size=25, replace=False)
        for name, loss_fn, grad_fn in cases:
            analytic = grad_fn(net)
            fd = oracles.fd_gradient(net, loss_fn, coords)
            for j, want in fd.items():
                err = oracles.relative_error(analytic[j], want)
                if err > worst:
                    worst, worst_case = err, name
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 30.0
    report(3, ok, f"20 nets x 8 losses x 25 coords, worst rel err {worst:.2e} "
                  f"({worst_case}, <1e-4), {elapsed:.1f}s")


def test_criterion_04_oracle_equivalence():
    rng = np.random.default_rng(404)
    worst = 0.0

    for _ in range(100):
        b, k = int(rng.integers(1, 12)), int(rng.integers(2, 9))
        probs = softmax(rng.uniform(-4, 4, size=(b, k)))
        from replaylab import diversity_term, entropy_term
        worst = max(worst, abs(entropy_term(probs) - oracles.entropy_of(probs.tolist())))
        worst = max(worst, abs(diversity_term(probs) - oracles.diversity_of(probs.tolist())))
        worst = max(worst, abs(em_loss(probs) - oracles.entropy_of(probs.tolist())))

    for _ in range(100):
        n = int(rng.integers(1, 40))
        theta = rng.standard_normal(n)
        ewc = EwcState(anchor=rng.standard_normal(n), fisher=rng.uniform(0, 3, n),
                       strength=float(rng.uniform(0.1, 2)))
        worst = max(worst, abs(ewc_penalty(theta, ewc) - oracles.ewc_penalty_of(
            theta, ewc.anchor, ewc.fisher, ewc.strength)))
        si = SiState(omega=np.zeros(n), importance=rng.uniform(0, 3, n),
                     ref=rng.standard_normal(n), task_start=np.zeros(n),
                     strength=float(rng.uniform(0.1, 2)))
        worst = max(worst, abs(si_penalty(theta, si) - oracles.si_penalty_of(
            theta, si.ref, si.importance, si.strength)))

    for _ in range(100):
        t = int(rng.integers(2, 7))
        rows = [[float(rng.uniform(0, 1)) for _ in range(t - i)] for i in range(t)]
        m = AccuracyMatrix(t)
        for i, row in enumerate(rows):
            for offset, v in enumerate(row):
                m.record(i, i + offset, v)
        worst = max(worst, abs(compute_acc(m) - oracles.acc_of(rows)))
        worst = max(worst, abs(compute_fr(m) - oracles.fr_of(rows)))

    ok = worst < 1e-10
    report(4, ok, f"7 functions x 100 random instances, worst abs dev {worst:.2e} (<1e-10)")


def test_criterion_05_metric_hand_examples():
    fr_matrix = AccuracyMatrix(3)
    fr_matrix.record(0, 0, 0.9)
    fr_matrix.record(0, 1, 0.7)
    fr_matrix.record(0, 2, 0.5)
    fr_matrix.record(1, 1, 0.8)
    fr_matrix.record(1, 2, 0.6)
    fr_matrix.record(2, 2, 0.4)
    fr_dev = abs(compute_fr(fr_matrix) - 0.3)

    acc_matrix = AccuracyMatrix(3)
    for i, v in enumerate((0.5, 0.3, 0.7)):
        for j in range(i, 3):
            acc_matrix.record(i, j, v if j == 2 else 0.9)
    acc_dev = abs(compute_acc(acc_matrix) - 0.5)

    ok = fr_dev < 1e-12 and acc_dev < 1e-12
    report(5, ok, f"FR example dev {fr_dev:.2e}, ACC example dev {acc_dev:.2e}")


def test_criterion_06_reduction_identities():
    ds = make_synthetic_gaussian(6, 60, 4, 0.3, seed=606)
    stream = split_class_incremental(ds, 3, seed=1)

    plain = TrainConfig(epochs_per_task=2, batch_size=8, seed=66, regularizer=RegKind.NONE)
    zero_w = TrainConfig(epochs_per_task=2, batch_size=8, seed=66,
                         regularizer=RegKind.IM, reg_weight=0.0)
    _, net_a, _ = run_sequence(stream, plain)
    _, net_b, _ = run_sequence(stream, zero_w)
    bitwise = np.array_equal(net_a.to_vector(), net_b.to_vector())

    # per-batch identities along one full 3-task trajectory
    from replaylab.buffer import stack_entries
    from replaylab.net import sgd_step
    rng = np.random.default_rng(660)
    net = Mlp.init(stream.input_dim, (8,), stream.num_classes, rng)
    buffer = ReplayBuffer(3, stream.num_classes, rng)
    worst_pp = 0.0
    worst_der = 0.0
    checked = 0
    for task in stream.tasks:
        n = task.train_features.shape[0]
        order = rng.permutation(n)
        for start_idx in range(0, n, 8):
            idx = order[start_idx:start_idx + 8]
            x, y = task.train_features[idx], task.train_labels[idx]
            if task.index > 0 and len(buffer) > 0:
                r1x, _, r1logits = stack_entries(buffer.sample(len(x)))
                r2x, r2y, _ = stack_entries(buffer.sample(len(x)))
                v_pp, grads = derpp_loss(net, x, y, r1x, r1logits, r2x, r2y,
                                         alpha=0.3, beta=0.0)
                v_der, _ = der_loss(net, x, y, r1x, r1logits, alpha=0.3)
                v_alpha0, _ = der_loss(net, x, y, r1x, r1logits, alpha=0.0)
                v_ce = cross_entropy(softmax(forward(net, x).logits), y)
                worst_pp = max(worst_pp, abs(v_pp - v_der))
                worst_der = max(worst_der, abs(v_alpha0 - v_ce))
                checked += 1
            else:
                _, grads = derpp_loss(net, x, y, alpha=0.3, beta=0.0)
            sgd_step(net, grads, 0.1)
            cache = forward(net, x)
            for i in range(len(x)):
                buffer.insert(BufferEntry(features=x[i].copy(), label=int(y[i]),
                                          logits=cache.logits[i].copy(),
                                          insert_task=task.index))

    ok = bitwise and worst_pp < 1e-12 and worst_der < 1e-12 and checked > 20
    report(6, ok, f"zero-weight bitwise={bitwise}, DER++(beta=0) vs DER dev "
                  f"{worst_pp:.2e}, DER(alpha=0) vs CE dev {worst_der:.2e} "
                  f"over {checked} batches")


def test_criterion_07_buffer_law():
    rng = np.random.default_rng(707)
    buf = ReplayBuffer(5, 8, rng)
    for _ in range(10_000):
        label = int(rng.integers(8))
        buf.insert(BufferEntry(features=rng.standard_normal(2), label=label,
                               logits=None, insert_task=0))
    counts = buf.per_class_counts()
    caps_ok = all(c <= 5 for c in counts.values()) and len(buf) <= buf.capacity

    n_stream, budget, trials = 1000, 5, 200
    retained = np.zeros(n_stream)
    for t in range(trials):
        trial_buf = ReplayBuffer(budget, 1, np.random.default_rng((1, t)))
        for i in range(n_stream):
            trial_buf.insert(BufferEntry(features=np.array([float(i)]), label=0,
                                         logits=None, insert_task=0))
        for e in trial_buf.entries:
            retained[int(e.features[0])] += 1
    p = budget / n_stream
    sigma = math.sqrt(trials * p * (1 - p))
    max_dev = float(np.max(np.abs(retained - trials * p))) / sigma
    retention_ok = max_dev <= 5.0

    ok = caps_ok and retention_ok
    report(7, ok, f"10000 fuzzed inserts capped={caps_ok}, reservoir max dev "
                  f"{max_dev:.2f} sigma (<=5) over {trials} trials")


TREND_CONFIG = {
    "dataset": {"kind": "synthetic", "classes": 10, "per_class": 200,
                "dim": 16, "spread": 0.3},
    "tasks": 5,
    "methods": ["er"],
    "budgets": [2],
    "epochs_per_task": 5,
    "batch_size": 16,
    "lr": 0.2,
    "hidden_dims": [64],
    "reg_weight": 0.5,
    "seeds": [1, 2, 3, 4, 5],
}


def _mean_scores(records, regularizer):
    accs = [r.acc for r in records if r.regularizer == regularizer]
    frs = [r.fr for r in records if r.regularizer == regularizer]
    return float(np.mean(accs)), float(np.mean(frs))


def test_criterion_08_trend_er_vs_er_im():
    start = time.perf_counter()
    cfg, _ = config_from_dict({**TREND_CONFIG, "regularizers": ["none", "im"],
                               "reg_target": "ct"})
    records = run_grid(cfg)
    acc_er, fr_er = _mean_scores(records, "none")
    acc_im, fr_im = _mean_scores(records, "im")
    elapsed = time.perf_counter() - start
    ok = acc_im > acc_er and fr_im < fr_er and elapsed < 300.0
    report(8, ok, f"mean ACC {acc_er:.4f} -> {acc_im:.4f} (gain {acc_im - acc_er:+.4f}), "
                  f"mean FR {fr_er:.4f} -> {fr_im:.4f} (drop {fr_im - fr_er:+.4f}), "
                  f"5 seeds, {elapsed:.0f}s")


def test_criterion_09_target_ablation_ct_vs_bf():
    start = time.perf_counter()
    cfg_ct, _ = config_from_dict({**TREND_CONFIG, "regularizers": ["im"],
                                  "reg_target": "ct"})
    cfg_bf, _ = config_from_dict({**TREND_CONFIG, "regularizers": ["im"],
                                  "reg_target": "bf"})
    acc_ct, _ = _mean_scores(run_grid(cfg_ct), "im")
    acc_bf, _ = _mean_scores(run_grid(cfg_bf), "im")
    elapsed = time.perf_counter() - start
    ok = acc_ct >= acc_bf and elapsed < 600.0
    report(9, ok, f"mean ACC current-task {acc_ct:.4f} >= buffer {acc_bf:.4f} "
                  f"(margin {acc_ct - acc_bf:+.4f}), 5 seeds, {elapsed:.0f}s")


def test_criterion_10_end_to_end_determinism(tmp_path):
    cfg, _ = config_from_dict({
        "dataset": {"kind": "synthetic", "classes": 4, "per_class": 40,
                    "dim": 4, "spread": 0.3},
        "tasks": 2,
        "methods": ["er", "der"],
        "regularizers": ["none", "im"],
        "budgets": [2, 3],
        "epochs_per_task": 2,
        "batch_size": 8,
        "lr": 0.1,
        "seeds": [1, 2],
    })
    emit_results(run_grid(cfg), tmp_path / "a")
    emit_results(run_grid(cfg), tmp_path / "b")
    bytes_a = (tmp_path / "a" / "results.csv").read_bytes()
    bytes_b = (tmp_path / "b" / "results.csv").read_bytes()
    ok = bytes_a == bytes_b and len(bytes_a) > 0
    report(10, ok, f"results.csv byte-identical across repeated runs "
                   f"({len(bytes_a)} bytes, 16 cells)")
