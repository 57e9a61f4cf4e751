# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner-loop kernels; the contract matches `_kernels_py` exactly.

The hot loops run without the GIL so independent runs can proceed in
parallel threads.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def dist_round(double[:, ::1] W, double[:, ::1] phi, double gamma, double eta,
               double rx, double ry,
               cnp.int64_t[::1] s_idx, cnp.int64_t[::1] snext_idx,
               double[:, ::1] rewards,
               double[:, ::1] x_lazy, double[:, ::1] x_proj,
               double[:, ::1] y_lazy, double[:, ::1] y_proj,
               cnp.int64_t[::1] check_counts, bint want_logs):
    cdef Py_ssize_t N = W.shape[0]
    cdef Py_ssize_t d = phi.shape[1]
    cdef Py_ssize_t n_upd = s_idx.shape[0]
    cdef Py_ssize_t T = n_upd + 1
    cdef Py_ssize_t nc = check_counts.shape[0]

    x_avg_np = np.empty((nc, N, d))
    y_avg_np = np.empty((nc, N, d))
    x_cur_np = np.empty((nc, N, d))
    x_hat_np = np.empty((N, d))
    y_hat_np = np.empty((N, d))
    cdef Py_ssize_t log_len = T if want_logs else 1
    x_log_np = np.empty((log_len, N, d))
    xl_log_np = np.empty((log_len, N, d))
    y_log_np = np.empty((log_len, N, d))

    cdef double[:, :, ::1] x_avg = x_avg_np
    cdef double[:, :, ::1] y_avg = y_avg_np
    cdef double[:, :, ::1] x_cur = x_cur_np
    cdef double[:, ::1] x_hat = x_hat_np
    cdef double[:, ::1] y_hat = y_hat_np
    cdef double[:, :, ::1] x_log = x_log_np
    cdef double[:, :, ::1] xl_log = xl_log_np
    cdef double[:, :, ::1] y_log = y_log_np

    x_acc_np = np.empty((N, d))
    y_acc_np = np.empty((N, d))
    mix_np = np.empty((N, d))
    u_np = np.empty(N)
    v_np = np.empty(N)
    dphi_np = np.empty(d)
    cdef double[:, ::1] x_acc = x_acc_np
    cdef double[:, ::1] y_acc = y_acc_np
    cdef double[:, ::1] mix = mix_np
    cdef double[::1] u = u_np
    cdef double[::1] v = v_np
    cdef double[::1] dphi = dphi_np

    cdef Py_ssize_t t, i, j, dd, srow, nrow, ci = 0, count = 1
    cdef double acc, nrm, scale, gx, gy, cd

    with nogil:
        for j in range(N):
            for dd in range(d):
                x_acc[j, dd] = x_proj[j, dd]
                y_acc[j, dd] = y_proj[j, dd]
        if want_logs:
            for j in range(N):
                for dd in range(d):
                    x_log[0, j, dd] = x_proj[j, dd]
                    xl_log[0, j, dd] = x_lazy[j, dd]
                    y_log[0, j, dd] = y_proj[j, dd]
        if ci < nc and check_counts[ci] == count:
            cd = <double> count
            for j in range(N):
                for dd in range(d):
                    x_avg[ci, j, dd] = x_acc[j, dd] / cd
                    y_avg[ci, j, dd] = y_acc[j, dd] / cd
                    x_cur[ci, j, dd] = x_proj[j, dd]
            ci += 1
        for t in range(n_upd):
            srow = s_idx[t]
            nrow = snext_idx[t]
            for dd in range(d):
                dphi[dd] = phi[srow, dd] - gamma * phi[nrow, dd]
            for j in range(N):
                acc = 0.0
                for dd in range(d):
                    acc += phi[srow, dd] * y_proj[j, dd]
                u[j] = acc
                acc = 0.0
                for dd in range(d):
                    acc += dphi[dd] * x_proj[j, dd]
                v[j] = acc
            for j in range(N):
                for dd in range(d):
                    acc = 0.0
                    for i in range(N):
                        acc += W[i, j] * x_lazy[i, dd]
                    mix[j, dd] = acc
            for j in range(N):
                gx = eta * u[j]
                nrm = 0.0
                for dd in range(d):
                    x_lazy[j, dd] = mix[j, dd] - gx * dphi[dd]
                    nrm += x_lazy[j, dd] * x_lazy[j, dd]
                nrm = sqrt(nrm)
                scale = rx / nrm if nrm > rx else 1.0
                for dd in range(d):
                    x_proj[j, dd] = x_lazy[j, dd] * scale
                    x_acc[j, dd] += x_proj[j, dd]
                gy = eta * (v[j] - rewards[t, j] - u[j])
                nrm = 0.0
                for dd in range(d):
                    y_lazy[j, dd] += gy * phi[srow, dd]
                    nrm += y_lazy[j, dd] * y_lazy[j, dd]
                nrm = sqrt(nrm)
                scale = ry / nrm if nrm > ry else 1.0
                for dd in range(d):
                    y_proj[j, dd] = y_lazy[j, dd] * scale
                    y_acc[j, dd] += y_proj[j, dd]
            count += 1
            if want_logs:
                for j in range(N):
                    for dd in range(d):
                        x_log[count - 1, j, dd] = x_proj[j, dd]
                        xl_log[count - 1, j, dd] = x_lazy[j, dd]
                        y_log[count - 1, j, dd] = y_proj[j, dd]
            if ci < nc and check_counts[ci] == count:
                cd = <double> count
                for j in range(N):
                    for dd in range(d):
                        x_avg[ci, j, dd] = x_acc[j, dd] / cd
                        y_avg[ci, j, dd] = y_acc[j, dd] / cd
                        x_cur[ci, j, dd] = x_proj[j, dd]
                ci += 1
        cd = <double> T
        for j in range(N):
            for dd in range(d):
                x_hat[j, dd] = x_acc[j, dd] / cd
                y_hat[j, dd] = y_acc[j, dd] / cd

    logs = (x_log_np, xl_log_np, y_log_np) if want_logs else None
    return x_avg_np, y_avg_np, x_cur_np, x_hat_np, y_hat_np, logs


def central_round(double[:, ::1] phi, double gamma, double eta,
                  double rx, double ry,
                  cnp.int64_t[::1] s_idx, cnp.int64_t[::1] snext_idx,
                  double[:, ::1] rewards,
                  double[::1] x_lazy, double[::1] x_proj,
                  double[:, ::1] y_lazy, double[:, ::1] y_proj,
                  cnp.int64_t[::1] check_counts, bint want_logs):
    cdef Py_ssize_t N = y_lazy.shape[0]
    cdef Py_ssize_t d = phi.shape[1]
    cdef Py_ssize_t n_upd = s_idx.shape[0]
    cdef Py_ssize_t T = n_upd + 1
    cdef Py_ssize_t nc = check_counts.shape[0]

    x_avg_np = np.empty((nc, d))
    y_avg_np = np.empty((nc, N, d))
    x_cur_np = np.empty((nc, d))
    x_hat_np = np.empty(d)
    y_hat_np = np.empty((N, d))
    cdef Py_ssize_t log_len = T if want_logs else 1
    x_log_np = np.empty((log_len, d))
    xl_log_np = np.empty((log_len, d))
    y_log_np = np.empty((log_len, N, d))

    cdef double[:, ::1] x_avg = x_avg_np
    cdef double[:, :, ::1] y_avg = y_avg_np
    cdef double[:, ::1] x_cur = x_cur_np
    cdef double[::1] x_hat = x_hat_np
    cdef double[:, ::1] y_hat = y_hat_np
    cdef double[:, ::1] x_log = x_log_np
    cdef double[:, ::1] xl_log = xl_log_np
    cdef double[:, :, ::1] y_log = y_log_np

    x_acc_np = np.empty(d)
    y_acc_np = np.empty((N, d))
    u_np = np.empty(N)
    dphi_np = np.empty(d)
    cdef double[::1] x_acc = x_acc_np
    cdef double[:, ::1] y_acc = y_acc_np
    cdef double[::1] u = u_np
    cdef double[::1] dphi = dphi_np

    cdef Py_ssize_t t, j, dd, srow, nrow, ci = 0, count = 1
    cdef double acc, nrm, scale, gx, gy, cd, v, usum
    cdef double inv_n = 1.0 / <double> N

    with nogil:
        for dd in range(d):
            x_acc[dd] = x_proj[dd]
        for j in range(N):
            for dd in range(d):
                y_acc[j, dd] = y_proj[j, dd]
        if want_logs:
            for dd in range(d):
                x_log[0, dd] = x_proj[dd]
                xl_log[0, dd] = x_lazy[dd]
            for j in range(N):
                for dd in range(d):
                    y_log[0, j, dd] = y_proj[j, dd]
        if ci < nc and check_counts[ci] == count:
            cd = <double> count
            for dd in range(d):
                x_avg[ci, dd] = x_acc[dd] / cd
                x_cur[ci, dd] = x_proj[dd]
            for j in range(N):
                for dd in range(d):
                    y_avg[ci, j, dd] = y_acc[j, dd] / cd
            ci += 1
        for t in range(n_upd):
            srow = s_idx[t]
            nrow = snext_idx[t]
            for dd in range(d):
                dphi[dd] = phi[srow, dd] - gamma * phi[nrow, dd]
            usum = 0.0
            for j in range(N):
                acc = 0.0
                for dd in range(d):
                    acc += phi[srow, dd] * y_proj[j, dd]
                u[j] = acc
                usum += acc
            v = 0.0
            for dd in range(d):
                v += dphi[dd] * x_proj[dd]
            gx = (eta * inv_n) * usum
            nrm = 0.0
            for dd in range(d):
                x_lazy[dd] = x_lazy[dd] - gx * dphi[dd]
                nrm += x_lazy[dd] * x_lazy[dd]
            nrm = sqrt(nrm)
            scale = rx / nrm if nrm > rx else 1.0
            for dd in range(d):
                x_proj[dd] = x_lazy[dd] * scale
                x_acc[dd] += x_proj[dd]
            for j in range(N):
                gy = (eta * inv_n) * (v - rewards[t, j] - u[j])
                nrm = 0.0
                for dd in range(d):
                    y_lazy[j, dd] += gy * phi[srow, dd]
                    nrm += y_lazy[j, dd] * y_lazy[j, dd]
                nrm = sqrt(nrm)
                scale = ry / nrm if nrm > ry else 1.0
                for dd in range(d):
                    y_proj[j, dd] = y_lazy[j, dd] * scale
                    y_acc[j, dd] += y_proj[j, dd]
            count += 1
            if want_logs:
                for dd in range(d):
                    x_log[count - 1, dd] = x_proj[dd]
                    xl_log[count - 1, dd] = x_lazy[dd]
                for j in range(N):
                    for dd in range(d):
                        y_log[count - 1, j, dd] = y_proj[j, dd]
            if ci < nc and check_counts[ci] == count:
                cd = <double> count
                for dd in range(d):
                    x_avg[ci, dd] = x_acc[dd] / cd
                    x_cur[ci, dd] = x_proj[dd]
                for j in range(N):
                    for dd in range(d):
                        y_avg[ci, j, dd] = y_acc[j, dd] / cd
                ci += 1
        cd = <double> T
        for dd in range(d):
            x_hat[dd] = x_acc[dd] / cd
        for j in range(N):
            for dd in range(d):
                y_hat[j, dd] = y_acc[j, dd] / cd

    logs = (x_log_np, xl_log_np, y_log_np) if want_logs else None
    return x_avg_np, y_avg_np, x_cur_np, x_hat_np, y_hat_np, logs
