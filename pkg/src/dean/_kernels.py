"""Numeric kernels for dense-network training and scoring.

Networks are handled in a packed form: one flat float64 parameter vector
``theta`` plus integer metadata arrays describing the layer stack.  Per
layer, ``theta`` holds the weight block as an (n_in, n_out) row-major
matrix followed by the bias vector when the layer has one.  The flat
layout makes snapshots, Adam state and finite differences trivial.

Every function here must stay inside the numba-supported numpy subset:
the same source runs jitted or as plain numpy depending on DEAN_NUMBA
(see dean._backend).
"""

import numpy as np

from ._backend import jit

ACT_RELU = 0
ACT_SELU = 1
ACT_IDENTITY = 2

LOSS_SQUARED = 0
LOSS_ABSOLUTE = 1

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


def layout(sizes, has_bias):
    """Offsets of each layer's weight and bias block in the flat vector.

    Returns (w_off, b_off, n_params); b_off is -1 for bias-free layers.
    """
    n_layers = len(sizes) - 1
    w_off = np.empty(n_layers, dtype=np.int64)
    b_off = np.empty(n_layers, dtype=np.int64)
    pos = 0
    for l in range(n_layers):
        w_off[l] = pos
        pos += int(sizes[l]) * int(sizes[l + 1])
        if has_bias[l]:
            b_off[l] = pos
            pos += int(sizes[l + 1])
        else:
            b_off[l] = -1
    return w_off, b_off, pos


@jit
def forward_batch(theta, sizes, acts, has_bias, w_off, b_off, X):
    """Activations of the final layer for a row batch X (n, sizes[0])."""
    n_layers = sizes.shape[0] - 1
    A = X
    for l in range(n_layers):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        W = theta[w_off[l]:w_off[l] + n_in * n_out].reshape(n_in, n_out)
        Z = np.dot(A, W)
        if has_bias[l] == 1:
            Z = Z + theta[b_off[l]:b_off[l] + n_out]
        if acts[l] == ACT_RELU:
            A = np.maximum(Z, 0.0)
        elif acts[l] == ACT_SELU:
            # exp argument clamped to <= 0: the positive branch never reads it
            A = np.where(
                Z > 0.0,
                SELU_LAMBDA * Z,
                SELU_LAMBDA * SELU_ALPHA * (np.exp(np.minimum(Z, 0.0)) - 1.0),
            )
        else:
            A = Z
    return A


@jit
def _fairness_penalty(y, groups, fair_theta):
    """Penalty fair_theta * |L1-L0| / (|L1|+|L0|) on batch group output means.

    Returns (penalty, dpen_dL0, dpen_dL1, n0, n1).  Zero contribution when a
    group is absent from the batch or both means are zero.
    """
    n = y.shape[0]
    s0 = 0.0
    s1 = 0.0
    n0 = 0
    n1 = 0
    for i in range(n):
        if groups[i] == 1:
            s1 += y[i]
            n1 += 1
        else:
            s0 += y[i]
            n0 += 1
    if n0 == 0 or n1 == 0:
        return 0.0, 0.0, 0.0, n0, n1
    L0 = s0 / n0
    L1 = s1 / n1
    num = abs(L1 - L0)
    den = abs(L1) + abs(L0)
    if den == 0.0:
        return 0.0, 0.0, 0.0, n0, n1
    sd = np.sign(L1 - L0)
    d1 = fair_theta * (sd * den - num * np.sign(L1)) / (den * den)
    d0 = fair_theta * (-sd * den - num * np.sign(L0)) / (den * den)
    return fair_theta * num / den, d0, d1, n0, n1


@jit
def loss_value(theta, sizes, acts, has_bias, w_off, b_off, X, target, groups,
               fair_theta, loss_kind):
    """Training loss on a batch: mean deviation from target (+ group penalty)."""
    y = forward_batch(theta, sizes, acts, has_bias, w_off, b_off, X)[:, 0]
    r = y - target
    if loss_kind == LOSS_SQUARED:
        loss = np.mean(r * r)
    else:
        loss = np.mean(np.abs(r))
    if fair_theta > 0.0:
        pen, _, _, _, _ = _fairness_penalty(y, groups, fair_theta)
        loss += pen
    return loss


@jit
def loss_grad(theta, sizes, acts, has_bias, w_off, b_off, X, target, groups,
              fair_theta, loss_kind):
    """Loss and its gradient w.r.t. theta, by reverse accumulation.

    The final layer must have width 1.  Returns (loss, grad) with grad laid
    out exactly like theta.
    """
    n = X.shape[0]
    n_layers = sizes.shape[0] - 1

    # forward, storing pre-activations per layer in one flat buffer
    z_off = np.empty(n_layers + 1, dtype=np.int64)
    z_off[0] = 0
    for l in range(n_layers):
        z_off[l + 1] = z_off[l] + n * sizes[l + 1]
    z_buf = np.empty(z_off[n_layers], dtype=np.float64)

    A = X
    for l in range(n_layers):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        W = theta[w_off[l]:w_off[l] + n_in * n_out].reshape(n_in, n_out)
        Z = np.dot(A, W)
        if has_bias[l] == 1:
            Z = Z + theta[b_off[l]:b_off[l] + n_out]
        z_buf[z_off[l]:z_off[l + 1]] = Z.ravel()
        if acts[l] == ACT_RELU:
            A = np.maximum(Z, 0.0)
        elif acts[l] == ACT_SELU:
            A = np.where(
                Z > 0.0,
                SELU_LAMBDA * Z,
                SELU_LAMBDA * SELU_ALPHA * (np.exp(np.minimum(Z, 0.0)) - 1.0),
            )
        else:
            A = Z

    y = A[:, 0]
    r = y - target
    if loss_kind == LOSS_SQUARED:
        loss = np.mean(r * r)
        dy = 2.0 * r / n
    else:
        loss = np.mean(np.abs(r))
        dy = np.sign(r) / n

    if fair_theta > 0.0:
        pen, d0, d1, n0, n1 = _fairness_penalty(y, groups, fair_theta)
        if n0 > 0 and n1 > 0:
            loss += pen
            for i in range(n):
                if groups[i] == 1:
                    dy[i] += d1 / n1
                else:
                    dy[i] += d0 / n0

    grad = np.zeros(theta.shape[0], dtype=np.float64)
    delta = dy.reshape(n, 1)
    for l in range(n_layers - 1, -1, -1):
        n_in = sizes[l]
        n_out = sizes[l + 1]
        Z = z_buf[z_off[l]:z_off[l + 1]].reshape(n, n_out)
        if acts[l] == ACT_RELU:
            delta = delta * np.where(Z > 0.0, 1.0, 0.0)
        elif acts[l] == ACT_SELU:
            delta = delta * np.where(
                Z > 0.0,
                SELU_LAMBDA * np.ones_like(Z),
                SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(Z, 0.0)),
            )
        if l == 0:
            A_prev = X
        else:
            Zp = z_buf[z_off[l - 1]:z_off[l]].reshape(n, sizes[l])
            if acts[l - 1] == ACT_RELU:
                A_prev = np.maximum(Zp, 0.0)
            elif acts[l - 1] == ACT_SELU:
                A_prev = np.where(
                    Zp > 0.0,
                    SELU_LAMBDA * Zp,
                    SELU_LAMBDA * SELU_ALPHA * (np.exp(np.minimum(Zp, 0.0)) - 1.0),
                )
            else:
                A_prev = Zp
        grad[w_off[l]:w_off[l] + n_in * n_out] = np.dot(A_prev.T, delta).ravel()
        if has_bias[l] == 1:
            grad[b_off[l]:b_off[l] + n_out] = delta.sum(axis=0)
        if l > 0:
            W = theta[w_off[l]:w_off[l] + n_in * n_out].reshape(n_in, n_out)
            delta = np.dot(delta, W.T)
    return loss, grad


@jit
def adam_update(theta, grad, m, v, t, lr):
    """One Adam step with bias-corrected moments, in place. t is the step count."""
    m[:] = _ADAM_BETA1 * m + (1.0 - _ADAM_BETA1) * grad
    v[:] = _ADAM_BETA2 * v + (1.0 - _ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - _ADAM_BETA1 ** t)
    v_hat = v / (1.0 - _ADAM_BETA2 ** t)
    theta[:] = theta - lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)


@jit
def run_epoch(theta, m, v, step, sizes, acts, has_bias, w_off, b_off, X,
              target, groups, fair_theta, perm, batch_size, lr, loss_kind):
    """All minibatch steps of one epoch, visiting rows in perm order.

    Mutates theta / m / v; returns the updated step count.
    """
    n = X.shape[0]
    n_batches = (n + batch_size - 1) // batch_size
    for b in range(n_batches):
        lo = b * batch_size
        hi = min(n, lo + batch_size)
        idx = perm[lo:hi]
        Xb = X[idx]
        tb = target[idx]
        gb = groups[idx]
        step += 1
        _, grad = loss_grad(theta, sizes, acts, has_bias, w_off, b_off, Xb,
                            tb, gb, fair_theta, loss_kind)
        adam_update(theta, grad, m, v, step, lr)
    return step
