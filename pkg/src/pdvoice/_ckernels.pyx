# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: Relief-F, the SMO solver, the LSTM cell backward
pass and the Adam update.

Each function mirrors :mod:`pdvoice._pykernels` operation for operation;
the pure-Python module is the reference. The LSTM forward activations are
left to numpy, whose vectorised tanh outruns a scalar libm loop.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

cnp.import_array()

cdef double TAU = 1e-12


def relief_weights(double[:, ::1] Z, long[::1] codes, long[::1] samples, int k,
                   double[::1] priors):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1], m = samples.shape[0]
    cdef Py_ssize_t n_cls = priors.shape[0]
    cdef Py_ssize_t s, i, j, f, c, p, q
    cdef double dist, diff, scale, own_p
    cdef double[::1] W = np.zeros(d)
    cdef double[:, ::1] best_d = np.empty((n_cls, k))
    cdef long[:, ::1] best_i = np.empty((n_cls, k), dtype=np.int64)
    cdef long[::1] filled = np.empty(n_cls, dtype=np.int64)
    cdef double[::1] acc = np.empty(d)
    cdef double mk = <double>m * <double>k

    for s in range(m):
        i = samples[s]
        for c in range(n_cls):
            filled[c] = 0
        for j in range(n):
            if j == i:
                continue
            dist = 0.0
            for f in range(d):
                diff = Z[i, f] - Z[j, f]
                dist += diff * diff
            c = codes[j]
            # insertion into the per-class top-k; strict < keeps lower index on ties
            if filled[c] < k:
                p = filled[c]
                filled[c] += 1
            elif dist < best_d[c, k - 1]:
                p = k - 1
            else:
                continue
            while p > 0 and dist < best_d[c, p - 1]:
                best_d[c, p] = best_d[c, p - 1]
                best_i[c, p] = best_i[c, p - 1]
                p -= 1
            best_d[c, p] = dist
            best_i[c, p] = j
        own_p = priors[codes[i]]
        for c in range(n_cls):
            for f in range(d):
                acc[f] = 0.0
            for q in range(filled[c]):
                j = best_i[c, q]
                for f in range(d):
                    acc[f] += fabs(Z[i, f] - Z[j, f])
            if c == codes[i]:
                scale = -1.0 / mk
            else:
                scale = priors[c] / (1.0 - own_p) / mk
            for f in range(d):
                W[f] += scale * acc[f]
    return np.asarray(W)


def smo_solve(double[:, ::1] K, double[::1] y, double C, double eps, double tol,
              long max_iter, long patience, bint record):
    cdef Py_ssize_t n = K.shape[0], l = 2 * n
    cdef double[::1] a = np.zeros(l)
    cdef double[::1] G = np.empty(l)
    cdef double[::1] z = np.empty(l)
    cdef Py_ssize_t t, i, j, ii, jj, it = 0
    cdef long stale = 0
    cdef double gmax, gmin, v, zi, zj, Qii, Qjj, Qij, quad, delta, dsum
    cdef double old_i, old_j, dAi, dAj, dobj, obj = 0.0, s_t
    cdef int status = 1
    history = []

    for t in range(n):
        z[t] = 1.0
        z[t + n] = -1.0
        G[t] = eps - y[t]
        G[t + n] = eps + y[t]

    while it < max_iter:
        gmax = -INFINITY
        gmin = INFINITY
        i = -1
        j = -1
        for t in range(l):
            v = -z[t] * G[t]
            if (z[t] > 0 and a[t] < C) or (z[t] < 0 and a[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (z[t] > 0 and a[t] > 0) or (z[t] < 0 and a[t] < C):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin <= tol:
            status = 0
            break
        it += 1
        ii = i % n
        jj = j % n
        zi = z[i]
        zj = z[j]
        Qii = K[ii, ii]
        Qjj = K[jj, jj]
        Qij = zi * zj * K[ii, jj]
        old_i = a[i]
        old_j = a[j]
        if zi != zj:
            quad = Qii + Qjj + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            dsum = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if dsum > 0:
                if a[j] < 0:
                    a[j] = 0
                    a[i] = dsum
            else:
                if a[i] < 0:
                    a[i] = 0
                    a[j] = -dsum
            if dsum > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - dsum
            else:
                if a[j] > C:
                    a[j] = C
                    a[i] = C + dsum
        else:
            quad = Qii + Qjj - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            dsum = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if dsum > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = dsum - C
            else:
                if a[j] < 0:
                    a[j] = 0
                    a[i] = dsum
            if dsum > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = dsum - C
            else:
                if a[i] < 0:
                    a[i] = 0
                    a[j] = dsum
        dAi = a[i] - old_i
        dAj = a[j] - old_j
        dobj = G[i] * dAi + G[j] * dAj + 0.5 * (Qii * dAi * dAi + Qjj * dAj * dAj) + Qij * dAi * dAj
        obj += dobj
        if record:
            history.append(-obj)
        for t in range(n):
            s_t = zi * dAi * K[t, ii] + zj * dAj * K[t, jj]
            G[t] += s_t
            G[t + n] -= s_t
        if dobj < 0:
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                status = 2
                break
    return np.asarray(a), np.asarray(G), int(it), int(status), history


def lstm_cell_backward(double[:, ::1] dh, double[:, ::1] dc, double[:, ::1] gates,
                       double[:, ::1] c_prev, double[:, ::1] dA):
    """Fill ``dA`` (B, 4H) and overwrite ``dc`` with the carry to step t-1."""
    cdef Py_ssize_t B = dh.shape[0], H = dh.shape[1], r, u
    cdef double i, f, g, o, tc, dct
    with nogil:
        for r in range(B):
            for u in range(H):
                i = gates[r, u]
                f = gates[r, H + u]
                g = gates[r, 2 * H + u]
                o = gates[r, 3 * H + u]
                tc = gates[r, 4 * H + u]
                dct = dc[r, u] + dh[r, u] * o * (1.0 - tc * tc)
                dA[r, u] = dct * g * i * (1.0 - i)
                dA[r, H + u] = dct * c_prev[r, u] * f * (1.0 - f)
                dA[r, 2 * H + u] = dct * i * (1.0 - g * g)
                dA[r, 3 * H + u] = dh[r, u] * tc * o * (1.0 - o)
                dc[r, u] = dct * f


def adam_inplace(double[::1] theta, double[::1] grad, double[::1] m, double[::1] v,
                 long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t k, n = theta.shape[0]
    cdef double c1 = 1.0 - beta1 ** t, c2 = 1.0 - beta2 ** t, gk
    with nogil:
        for k in range(n):
            gk = grad[k]
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk
            theta[k] -= lr * (m[k] / c1) / (sqrt(v[k] / c2) + eps)
