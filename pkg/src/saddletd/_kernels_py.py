"""Pure-numpy inner-loop kernels (fallback when the compiled extension is absent).

Both backends implement the same contract: run one solver round of primal-dual
updates over a precomputed slice of the sample stream, mutate the state arrays
in place to the end-of-round state, and snapshot running averages and current
iterates at the requested iterate counts. The compiled twin in `_kernels.pyx`
mirrors this file operation for operation.
"""

from __future__ import annotations

import numpy as np


def _project_rows(M: np.ndarray, radius: float, out: np.ndarray) -> None:
    """Row-wise Euclidean ball projection of M into out."""
    nrm = np.sqrt((M * M).sum(axis=1))
    scale = np.ones_like(nrm)
    over = nrm > radius
    scale[over] = radius / nrm[over]
    np.multiply(M, scale[:, None], out=out)


def dist_round(W, phi, gamma, eta, rx, ry, s_idx, snext_idx, rewards,
               x_lazy, x_proj, y_lazy, y_proj, check_counts, want_logs):
    """One distributed primal-dual round.

    Iterates t = 1..T-1 with T = len(s_idx) + 1: the primal lazy update mixes
    the neighbors' lazy iterates through W and takes a gradient step, the dual
    lazy update is local; both are followed by ball projections. Running sums
    start at the round's initial iterates, so averages divide by the iterate
    count. check_counts must be strictly increasing values in [1, T] ending
    at T.
    """
    N, d = x_lazy.shape
    n_upd = len(s_idx)
    T = n_upd + 1
    nc = len(check_counts)
    Wt = np.ascontiguousarray(W.T)
    x_avg = np.empty((nc, N, d))
    y_avg = np.empty((nc, N, d))
    x_cur = np.empty((nc, N, d))
    x_acc = x_proj.copy()
    y_acc = y_proj.copy()
    if want_logs:
        x_log = np.empty((T, N, d))
        xl_log = np.empty((T, N, d))
        y_log = np.empty((T, N, d))
        x_log[0], xl_log[0], y_log[0] = x_proj, x_lazy, y_proj
    ci = 0
    count = 1
    if ci < nc and check_counts[ci] == count:
        x_avg[ci], y_avg[ci], x_cur[ci] = x_acc / count, y_acc / count, x_proj
        ci += 1
    for t in range(n_upd):
        ps = phi[s_idx[t]]
        dphi = ps - gamma * phi[snext_idx[t]]
        u = y_proj @ ps
        v = x_proj @ dphi
        x_lazy[:] = Wt @ x_lazy - np.outer(eta * u, dphi)
        _project_rows(x_lazy, rx, out=x_proj)
        y_lazy += np.outer(eta * (v - rewards[t] - u), ps)
        _project_rows(y_lazy, ry, out=y_proj)
        x_acc += x_proj
        y_acc += y_proj
        count += 1
        if want_logs:
            x_log[count - 1], xl_log[count - 1], y_log[count - 1] = x_proj, x_lazy, y_proj
        if ci < nc and check_counts[ci] == count:
            x_avg[ci], y_avg[ci], x_cur[ci] = x_acc / count, y_acc / count, x_proj
            ci += 1
    x_hat = x_acc / T
    y_hat = y_acc / T
    logs = (x_log, xl_log, y_log) if want_logs else None
    return x_avg, y_avg, x_cur, x_hat, y_hat, logs


def central_round(phi, gamma, eta, rx, ry, s_idx, snext_idx, rewards,
                  x_lazy, x_proj, y_lazy, y_proj, check_counts, want_logs):
    """One centralized primal-dual round: a single primal, N stacked duals.

    Gradients are those of the (1/N)-averaged payoff, so the primal step uses
    the mean of the per-agent bilinear terms and each dual step carries a 1/N
    factor. State arrays: x_* of shape (d,), y_* of shape (N, d).
    """
    N, d = y_lazy.shape
    n_upd = len(s_idx)
    T = n_upd + 1
    nc = len(check_counts)
    x_avg = np.empty((nc, d))
    y_avg = np.empty((nc, N, d))
    x_cur = np.empty((nc, d))
    x_acc = x_proj.copy()
    y_acc = y_proj.copy()
    if want_logs:
        x_log = np.empty((T, d))
        xl_log = np.empty((T, d))
        y_log = np.empty((T, N, d))
        x_log[0], xl_log[0], y_log[0] = x_proj, x_lazy, y_proj
    ci = 0
    count = 1
    if ci < nc and check_counts[ci] == count:
        x_avg[ci], y_avg[ci], x_cur[ci] = x_acc / count, y_acc / count, x_proj
        ci += 1
    inv_n = 1.0 / N
    for t in range(n_upd):
        ps = phi[s_idx[t]]
        dphi = ps - gamma * phi[snext_idx[t]]
        u = y_proj @ ps
        v = float(x_proj @ dphi)
        x_lazy -= (eta * inv_n * u.sum()) * dphi
        nrm = float(np.sqrt((x_lazy * x_lazy).sum()))
        if nrm > rx:
            np.multiply(x_lazy, rx / nrm, out=x_proj)
        else:
            x_proj[:] = x_lazy
        y_lazy += np.outer(eta * inv_n * (v - rewards[t] - u), ps)
        _project_rows(y_lazy, ry, out=y_proj)
        x_acc += x_proj
        y_acc += y_proj
        count += 1
        if want_logs:
            x_log[count - 1], xl_log[count - 1], y_log[count - 1] = x_proj, x_lazy, y_proj
        if ci < nc and check_counts[ci] == count:
            x_avg[ci], y_avg[ci], x_cur[ci] = x_acc / count, y_acc / count, x_proj
            ci += 1
    x_hat = x_acc / T
    y_hat = y_acc / T
    logs = (x_log, xl_log, y_log) if want_logs else None
    return x_avg, y_avg, x_cur, x_hat, y_hat, logs
