"""Independent reference implementations used as test oracles.

Everything here is written scalar-first (plain Python loops, math.exp) or as a
deliberately minimal re-implementation, so the oracles share no code path with
the package internals they check.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# Scalar-loop model oracles (documented flat layout: per layer W row-major, b)
# ---------------------------------------------------------------------------


def scalar_unpack(flat, input_dim, num_classes, hidden):
    flat = list(map(float, flat))
    pos = 0

    def take(n):
        nonlocal pos
        chunk = flat[pos : pos + n]
        pos += n
        return chunk

    if hidden == 0:
        w = [take(num_classes) for _ in range(input_dim)]
        b = take(num_classes)
        return w, b
    w1 = [take(hidden) for _ in range(input_dim)]
    b1 = take(hidden)
    w2 = [take(num_classes) for _ in range(hidden)]
    b2 = take(num_classes)
    return w1, b1, w2, b2


def scalar_softmax(logits):
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


def scalar_forward(flat, input_dim, num_classes, hidden, x):
    """Hand-rolled matrix multiply + softmax for one input vector."""
    x = list(map(float, x))
    if hidden == 0:
        w, b = scalar_unpack(flat, input_dim, num_classes, hidden)
        logits = [
            sum(x[d] * w[d][k] for d in range(input_dim)) + b[k] for k in range(num_classes)
        ]
        return scalar_softmax(logits)
    w1, b1, w2, b2 = scalar_unpack(flat, input_dim, num_classes, hidden)
    pre = [sum(x[d] * w1[d][h] for d in range(input_dim)) + b1[h] for h in range(hidden)]
    act = [max(v, 0.0) for v in pre]
    logits = [sum(act[h] * w2[h][k] for h in range(hidden)) + b2[k] for k in range(num_classes)]
    return scalar_softmax(logits)


def scalar_logistic_gradient(flat, input_dim, num_classes, xs, ys):
    """Mean cross-entropy gradient of the logistic model, scalar loops only."""
    n = len(xs)
    gw = [[0.0] * num_classes for _ in range(input_dim)]
    gb = [0.0] * num_classes
    for x, y in zip(xs, ys):
        probs = scalar_forward(flat, input_dim, num_classes, 0, x)
        for k in range(num_classes):
            dz = (probs[k] - (1.0 if k == y else 0.0)) / n
            for d in range(input_dim):
                gw[d][k] += float(x[d]) * dz
            gb[k] += dz
    grad = []
    for d in range(input_dim):
        grad.extend(gw[d])
    grad.extend(gb)
    return grad


def scalar_logistic_train(flat, input_dim, num_classes, xs, ys, lr, epochs):
    """Reference full-batch SGD loop on the logistic model."""
    values = list(map(float, flat))
    for _ in range(epochs):
        grad = scalar_logistic_gradient(values, input_dim, num_classes, xs, ys)
        values = [v - lr * g for v, g in zip(values, grad)]
    return values


def finite_difference_gradient(loss_fn, values, step=1e-5):
    """Central finite differences of a scalar loss over a flat vector."""
    values = np.asarray(values, dtype=np.float64)
    grad = np.empty_like(values)
    for i in range(values.size):
        up = values.copy()
        up[i] += step
        down = values.copy()
        down[i] -= step
        grad[i] = (loss_fn(up) - loss_fn(down)) / (2.0 * step)
    return grad


# ---------------------------------------------------------------------------
# Minimal FedAvg reference
# ---------------------------------------------------------------------------


def fedavg_reference_trajectory(
    shards, model, trainer, master_seed, fraction, rounds, initial_values
):
    """Size-weighted federated averaging, re-implemented from scratch.

    Shares the package's published seed-derivation contract (cohort stream
    tag 1, training stream tag 2) and its ascending-id accumulation order,
    but computes the weights and the blend itself.
    """
    from fedprio.learner import local_train
    from fedprio.learner import Parameters

    ordered = sorted(shards, key=lambda s: s.client_id)
    arrays = [s.train_arrays() for s in ordered]
    sizes = np.array([s.n_train for s in ordered], dtype=np.float64)
    values = np.asarray(initial_values, dtype=np.float64).copy()
    trajectory = []
    n = len(ordered)
    for round_index in range(1, rounds + 1):
        rng = np.random.default_rng(np.random.SeedSequence([master_seed, 1, round_index]))
        size = max(1, int(fraction * n + 1e-9))
        cohort = np.sort(rng.choice(n, size=size, replace=False))
        shares = sizes[cohort] / sizes[cohort].sum()
        weights = shares / shares.sum()
        blended = np.zeros_like(values)
        for w, i in zip(weights, cohort):
            i = int(i)
            x, y = arrays[i]
            seed = np.random.SeedSequence([master_seed, 2, round_index, i])
            theta = local_train(Parameters(values), model, x, y, trainer, seed)
            blended += w * theta.values
        values = blended
        trajectory.append(values.copy())
    return trajectory


# ---------------------------------------------------------------------------
# Metric oracles
# ---------------------------------------------------------------------------


def brute_force_rounds_to_target(device_accuracy_by_round, target, fraction):
    """Exhaustive scan over a [(round_index, accuracies)] trace."""
    for round_index, accs in device_accuracy_by_round:
        hit = sum(1 for a in accs if a >= target)
        needed = math.ceil(fraction * len(accs) - 1e-9)
        if hit >= needed:
            return round_index
    return None


def nearest_centroid_accuracy(samples):
    """Fit class centroids and report training accuracy of the nearest-centroid rule."""
    by_label = {}
    for s in samples:
        by_label.setdefault(s.label, []).append(s.features)
    centroids = {k: np.mean(v, axis=0) for k, v in by_label.items()}
    labels = sorted(centroids)
    correct = 0
    for s in samples:
        dists = [np.linalg.norm(s.features - centroids[k]) for k in labels]
        if labels[int(np.argmin(dists))] == s.label:
            correct += 1
    return correct / len(samples)
