"""Pure-Python/numpy versions of the hot loops in :mod:`pdvoice._ckernels`."""
import numpy as np

TAU = 1e-12


def relief_weights(Z, codes, samples, k, priors):
    """Relief-F weight vector for range-normalised data ``Z``.

    ``codes`` are class indices into ``priors``; every sampled row
    contributes its ``k`` nearest hits (negatively) and ``k`` nearest misses
    from each other class (weighted by that class's prior).
    """
    n, d = Z.shape
    m = len(samples)
    n_cls = len(priors)
    members = [np.flatnonzero(codes == c) for c in range(n_cls)]
    W = np.zeros(d)
    mk = float(m) * float(k)
    for i in samples:
        diff = Z - Z[i]
        dist = np.einsum("ij,ij->i", diff, diff)
        dist[i] = np.inf
        own = codes[i]
        own_p = priors[own]
        for c in range(n_cls):
            idx = members[c]
            if c == own:
                idx = idx[idx != i]
            nearest = idx[np.argsort(dist[idx], kind="stable")[:k]]
            acc = np.abs(Z[nearest] - Z[i]).sum(axis=0)
            scale = -1.0 / mk if c == own else priors[c] / (1.0 - own_p) / mk
            W += scale * acc
    return W


def _column(K, idx):
    return K[:, idx] if isinstance(K, np.ndarray) else K(idx)


def smo_solve(K, y, C, eps, tol, max_iter, patience, record):
    """Epsilon-SVR dual via SMO with maximal-violating-pair selection.

    ``K`` is the full kernel matrix or a callable returning column ``i``.
    Returns ``(a, G, iterations, status, history)`` where ``a`` stacks
    (alpha, alpha*) and ``status`` is 0 converged, 1 iteration cap,
    2 no progress.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([eps - y, eps + y])
    pos = z > 0
    history = []
    obj = 0.0
    stale = 0
    status = 1
    it = 0
    while it < max_iter:
        v = -z * G
        up = np.where(pos, a < C, a > 0)
        low = np.where(pos, a > 0, a < C)
        if not up.any() or not low.any():
            status = 0
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if v[i] - v[j] <= tol:
            status = 0
            break
        it += 1
        ii, jj = i % n, j % n
        zi, zj = z[i], z[j]
        col_i, col_j = _column(K, ii), _column(K, jj)
        Qii, Qjj = col_i[ii], col_j[jj]
        Qij = zi * zj * col_i[jj]
        old_i, old_j = a[i], a[j]
        ai, aj = a[i], a[j]
        if zi != zj:
            quad = Qii + Qjj + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            dsum = ai - aj
            ai += delta
            aj += delta
            if dsum > 0:
                if aj < 0:
                    aj, ai = 0.0, dsum
            elif ai < 0:
                ai, aj = 0.0, -dsum
            if dsum > 0:
                if ai > C:
                    ai, aj = C, C - dsum
            elif aj > C:
                aj, ai = C, C + dsum
        else:
            quad = Qii + Qjj - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            dsum = ai + aj
            ai -= delta
            aj += delta
            if dsum > C:
                if ai > C:
                    ai, aj = C, dsum - C
            elif aj < 0:
                aj, ai = 0.0, dsum
            if dsum > C:
                if aj > C:
                    aj, ai = C, dsum - C
            elif ai < 0:
                ai, aj = 0.0, dsum
        a[i], a[j] = ai, aj
        dAi, dAj = ai - old_i, aj - old_j
        dobj = G[i] * dAi + G[j] * dAj + 0.5 * (Qii * dAi * dAi + Qjj * dAj * dAj) + Qij * dAi * dAj
        obj += dobj
        if record:
            history.append(-obj)
        s = zi * dAi * col_i + zj * dAj * col_j
        G[:n] += s
        G[n:] -= s
        if dobj < 0:
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                status = 2
                break
    return a, G, it, status, history


def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_cell_forward(A, c_prev, gates, c_out, h_out):
    """Gate activations for pre-activations ``A`` (B, 4H), written into the buffers."""
    H = c_prev.shape[1]
    i = _sig(A[:, :H])
    f = _sig(A[:, H:2 * H])
    g = np.tanh(A[:, 2 * H:3 * H])
    o = _sig(A[:, 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H] = i, f, g
    gates[:, 3 * H:4 * H], gates[:, 4 * H:] = o, tc
    c_out[...] = c
    h_out[...] = o * tc


def lstm_cell_backward(dh, dc, gates, c_prev, dA):
    """Fill ``dA`` (B, 4H) and overwrite ``dc`` with the carry to step t-1."""
    H = dh.shape[1]
    i, f, g = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:3 * H]
    o, tc = gates[:, 3 * H:4 * H], gates[:, 4 * H:]
    dct = dc + dh * o * (1.0 - tc * tc)
    dA[:, :H] = dct * g * i * (1.0 - i)
    dA[:, H:2 * H] = dct * c_prev * f * (1.0 - f)
    dA[:, 2 * H:3 * H] = dct * i * (1.0 - g * g)
    dA[:, 3 * H:] = dh * tc * o * (1.0 - o)
    dc[...] = dct * f


def adam_inplace(theta, grad, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    theta -= lr * (m / (1.0 - beta1 ** t)) / (np.sqrt(v / (1.0 - beta2 ** t)) + eps)
