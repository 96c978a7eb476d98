"""Hot inner loops, each with a numba path and a numpy path.

The public functions at the bottom dispatch on :data:`saferoute._accel.USE_NUMBA`.
Both paths are importable directly (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them in one process.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

EARTH_RADIUS_KM = 6371.0


# --------------------------------------------------------------------------
# incident counting
# --------------------------------------------------------------------------

@njit
def _count_within_radius_loop(st_lat, st_lon, inc_lat, inc_lon, inc_bucket, n_buckets, radius_km):
    n_st = st_lat.shape[0]
    n_inc = inc_lat.shape[0]
    counts = np.zeros((n_st, n_buckets), dtype=np.int64)
    deg = math.pi / 180.0
    for i in range(n_st):
        lat1 = st_lat[i] * deg
        lon1 = st_lon[i] * deg
        cos1 = math.cos(lat1)
        for k in range(n_inc):
            b = inc_bucket[k]
            if b < 0 or b >= n_buckets:
                continue
            lat2 = inc_lat[k] * deg
            dlat = lat2 - lat1
            dlon = inc_lon[k] * deg - lon1
            a = math.sin(dlat / 2.0) ** 2 + cos1 * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
            d = 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, a)))
            if d <= radius_km:
                counts[i, b] += 1
    return counts


def count_within_radius_numpy(st_lat, st_lon, inc_lat, inc_lon, inc_bucket, n_buckets, radius_km):
    counts = np.zeros((len(st_lat), n_buckets), dtype=np.int64)
    inc_bucket = np.asarray(inc_bucket, dtype=np.int64)
    keep = (inc_bucket >= 0) & (inc_bucket < n_buckets)
    lat2 = np.radians(np.asarray(inc_lat, dtype=float)[keep])
    lon2 = np.radians(np.asarray(inc_lon, dtype=float)[keep])
    buckets = inc_bucket[keep]
    cos2 = np.cos(lat2)
    for i, (la, lo) in enumerate(zip(np.radians(st_lat), np.radians(st_lon))):
        a = np.sin((lat2 - la) / 2.0) ** 2 + math.cos(la) * cos2 * np.sin((lon2 - lo) / 2.0) ** 2
        d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(1.0, a)))
        counts[i] = np.bincount(buckets[d <= radius_km], minlength=n_buckets)
    return counts


def count_within_radius_numba(*args):
    return _count_within_radius_loop(*args)


# --------------------------------------------------------------------------
# Bellman-Ford relaxation
# --------------------------------------------------------------------------
# Labels are (dist, hops) compared lexicographically, so zero-weight cycles
# never look like improvements and every engine converges to the same labels.

@njit
def _bellman_ford_loop(n, src, dst, w, source):
    dist = np.full(n, np.inf)
    hops = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    hops[source] = 0
    m = src.shape[0]
    rounds = 0
    for _ in range(n - 1):
        rounds += 1
        changed = False
        for e in range(m):
            u = src[e]
            if dist[u] == np.inf:
                continue
            v = dst[e]
            cand = dist[u] + w[e]
            if cand < dist[v] or (cand == dist[v] and hops[u] + 1 < hops[v]):
                dist[v] = cand
                hops[v] = hops[u] + 1
                changed = True
        if not changed:
            return dist, hops, False, rounds
    for e in range(m):
        u = src[e]
        if dist[u] != np.inf and dist[u] + w[e] < dist[dst[e]]:
            return dist, hops, True, rounds
    return dist, hops, False, rounds


def bellman_ford_numpy(n, src, dst, w, source):
    """Synchronous (Jacobi) rounds; same fixed point as the sequential loop."""
    dist = np.full(n, np.inf)
    hops = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    hops[source] = 0
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = np.asarray(w, dtype=float)
    rounds = 0
    for _ in range(n - 1):
        rounds += 1
        live = np.isfinite(dist[src])
        if not live.any():
            break
        cd = dist[src[live]] + w[live]
        ch = hops[src[live]] + 1
        cv = dst[live]
        # best candidate per destination: sort by (v, dist, hops), keep first of each v
        order = np.lexsort((ch, cd, cv))
        cv, cd, ch = cv[order], cd[order], ch[order]
        first = np.ones(len(cv), dtype=bool)
        first[1:] = cv[1:] != cv[:-1]
        cv, cd, ch = cv[first], cd[first], ch[first]
        better = (cd < dist[cv]) | ((cd == dist[cv]) & (ch < hops[cv]))
        if not better.any():
            return dist, hops, False, rounds
        dist[cv[better]] = cd[better]
        hops[cv[better]] = ch[better]
    live = np.isfinite(dist[src])
    neg = bool(np.any(dist[src[live]] + w[live] < dist[dst[live]]))
    return dist, hops, neg, rounds


def bellman_ford_numba(n, src, dst, w, source):
    return _bellman_ford_loop(
        n,
        np.ascontiguousarray(src, dtype=np.int64),
        np.ascontiguousarray(dst, dtype=np.int64),
        np.ascontiguousarray(w, dtype=np.float64),
        source,
    )


# --------------------------------------------------------------------------
# Q-learning episode
# --------------------------------------------------------------------------

@njit
def _q_episode(Q, visits, indptr, indices, connected, step_reward, goal, start,
               epsilon, alpha, gamma, uniforms, allow_invalid, dead_end_value):
    """Run one epsilon-greedy episode in place; returns (steps, reached_goal).

    ``uniforms`` holds two U(0,1) draws per step: exploration coin, action pick.
    """
    n = Q.shape[0]
    s = start
    max_steps = uniforms.shape[0]
    for step in range(max_steps):
        lo = indptr[s]
        hi = indptr[s + 1]
        if allow_invalid:
            if uniforms[step, 0] < epsilon:
                a = min(int(uniforms[step, 1] * n), n - 1)
            else:
                a = 0
                for j in range(1, n):
                    if Q[s, j] > Q[s, a]:
                        a = j
            nxt = a if connected[s, a] else s
        else:
            if hi == lo:
                return step, False
            if uniforms[step, 0] < epsilon:
                a = indices[lo + min(int(uniforms[step, 1] * (hi - lo)), hi - lo - 1)]
            else:
                a = indices[lo]
                for k in range(lo + 1, hi):
                    if Q[s, indices[k]] > Q[s, a]:
                        a = indices[k]
            nxt = a
        r = step_reward[s, a]
        visits[s, a] += 1
        if nxt == goal:
            Q[s, a] += alpha * (r - Q[s, a])
            return step + 1, True
        nlo = indptr[nxt]
        nhi = indptr[nxt + 1]
        if allow_invalid:
            best = Q[nxt, 0]
            for j in range(1, n):
                if Q[nxt, j] > best:
                    best = Q[nxt, j]
        elif nhi == nlo:
            Q[s, a] += alpha * (r + gamma * dead_end_value - Q[s, a])
            return step + 1, False
        else:
            best = Q[nxt, indices[nlo]]
            for k in range(nlo + 1, nhi):
                if Q[nxt, indices[k]] > best:
                    best = Q[nxt, indices[k]]
        Q[s, a] += alpha * (r + gamma * best - Q[s, a])
        s = nxt
    return max_steps, False


q_episode_numba = _q_episode
q_episode_numpy = _q_episode.py_func


# --------------------------------------------------------------------------
# recurrent training
# --------------------------------------------------------------------------
# Parameters travel as one flat vector in dataclass field order:
#   LSTM: W_f W_i W_c W_o (H x Z each), b_f b_i b_c b_o (H), W_out (H), b_out (1)
#   GRU:  W_r W_z W_h (H x Z each), b_r b_z b_h (H), W_out (H), b_out (1)
# with Z = H + 1 (scalar input per step).

@njit
def _sig(v):
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


@njit
def lstm_loss_grad(theta, H, x, y):
    """Summed per-window MSE and its gradient for scalar-input LSTM windows."""
    Z = H + 1
    G = H * Z
    W = theta[:4 * G].reshape((4, H, Z))
    b = theta[4 * G:4 * G + 4 * H].reshape((4, H))
    w_out = theta[4 * G + 4 * H:4 * G + 5 * H]
    b_out = theta[4 * G + 5 * H]
    grad = np.zeros_like(theta)
    gW = grad[:4 * G].reshape((4, H, Z))
    gb = grad[4 * G:4 * G + 4 * H].reshape((4, H))
    gw_out = grad[4 * G + 4 * H:4 * G + 5 * H]
    B, T = x.shape
    zs = np.zeros((T, Z))
    acts = np.zeros((T, 4, H))   # f, i, c_hat, o
    Cs = np.zeros((T + 1, H))
    tC = np.zeros((T, H))
    hs = np.zeros((T + 1, H))
    dz = np.zeros(Z)
    dh = np.zeros(H)
    dC = np.zeros(H)
    da = np.zeros((4, H))
    loss = 0.0
    for bi in range(B):
        for t in range(T):
            for j in range(H):
                zs[t, j] = hs[t, j]
            zs[t, H] = x[bi, t]
            for k in range(H):
                for g in range(4):
                    s = b[g, k]
                    for j in range(Z):
                        s += W[g, k, j] * zs[t, j]
                    acts[t, g, k] = math.tanh(s) if g == 2 else _sig(s)
                Cs[t + 1, k] = acts[t, 0, k] * Cs[t, k] + acts[t, 1, k] * acts[t, 2, k]
                tC[t, k] = math.tanh(Cs[t + 1, k])
                hs[t + 1, k] = acts[t, 3, k] * tC[t, k]
        dh[:] = 0.0
        dC[:] = 0.0
        for t in range(T - 1, -1, -1):
            out = b_out
            for k in range(H):
                out += w_out[k] * hs[t + 1, k]
            err = out - y[bi, t]
            loss += err * err / T
            dy = 2.0 * err / T
            grad[4 * G + 5 * H] += dy
            for k in range(H):
                gw_out[k] += dy * hs[t + 1, k]
                dhk = dh[k] + dy * w_out[k]
                f = acts[t, 0, k]
                i = acts[t, 1, k]
                c = acts[t, 2, k]
                o = acts[t, 3, k]
                dck = dhk * o * (1.0 - tC[t, k] ** 2) + dC[k]
                da[0, k] = dck * Cs[t, k] * f * (1.0 - f)
                da[1, k] = dck * c * i * (1.0 - i)
                da[2, k] = dck * i * (1.0 - c * c)
                da[3, k] = dhk * tC[t, k] * o * (1.0 - o)
                dC[k] = dck * f
            dz[:] = 0.0
            for g in range(4):
                for k in range(H):
                    d = da[g, k]
                    gb[g, k] += d
                    for j in range(Z):
                        gW[g, k, j] += d * zs[t, j]
                        dz[j] += d * W[g, k, j]
            for j in range(H):
                dh[j] = dz[j]
    return loss, grad


@njit
def gru_loss_grad(theta, H, x, y):
    """Summed per-window MSE and its gradient for scalar-input GRU windows."""
    Z = H + 1
    G = H * Z
    W = theta[:3 * G].reshape((3, H, Z))      # r, z, h
    b = theta[3 * G:3 * G + 3 * H].reshape((3, H))
    w_out = theta[3 * G + 3 * H:3 * G + 4 * H]
    b_out = theta[3 * G + 4 * H]
    grad = np.zeros_like(theta)
    gW = grad[:3 * G].reshape((3, H, Z))
    gb = grad[3 * G:3 * G + 3 * H].reshape((3, H))
    gw_out = grad[3 * G + 3 * H:3 * G + 4 * H]
    B, T = x.shape
    zin = np.zeros((T, Z))
    zr = np.zeros((T, Z))
    r = np.zeros((T, H))
    u = np.zeros((T, H))
    hh = np.zeros((T, H))
    hs = np.zeros((T + 1, H))
    dh = np.zeros(H)
    dnext = np.zeros(H)
    dzr = np.zeros(Z)
    dah = np.zeros(H)
    dau = np.zeros(H)
    dar = np.zeros(H)
    loss = 0.0
    for bi in range(B):
        for t in range(T):
            for j in range(H):
                zin[t, j] = hs[t, j]
            zin[t, H] = x[bi, t]
            for k in range(H):
                sr = b[0, k]
                su = b[1, k]
                for j in range(Z):
                    sr += W[0, k, j] * zin[t, j]
                    su += W[1, k, j] * zin[t, j]
                r[t, k] = _sig(sr)
                u[t, k] = _sig(su)
            for j in range(H):
                zr[t, j] = r[t, j] * hs[t, j]
            zr[t, H] = x[bi, t]
            for k in range(H):
                s = b[2, k]
                for j in range(Z):
                    s += W[2, k, j] * zr[t, j]
                hh[t, k] = math.tanh(s)
                hs[t + 1, k] = (1.0 - u[t, k]) * hs[t, k] + u[t, k] * hh[t, k]
        dnext[:] = 0.0
        for t in range(T - 1, -1, -1):
            out = b_out
            for k in range(H):
                out += w_out[k] * hs[t + 1, k]
            err = out - y[bi, t]
            loss += err * err / T
            dy = 2.0 * err / T
            grad[3 * G + 4 * H] += dy
            for k in range(H):
                gw_out[k] += dy * hs[t + 1, k]
                dh[k] = dnext[k] + dy * w_out[k]
                dah[k] = dh[k] * u[t, k] * (1.0 - hh[t, k] ** 2)
                dau[k] = dh[k] * (hh[t, k] - hs[t, k]) * u[t, k] * (1.0 - u[t, k])
            dzr[:] = 0.0
            for k in range(H):
                gb[2, k] += dah[k]
                gb[1, k] += dau[k]
                for j in range(Z):
                    gW[2, k, j] += dah[k] * zr[t, j]
                    gW[1, k, j] += dau[k] * zin[t, j]
                    dzr[j] += dah[k] * W[2, k, j]
            for k in range(H):
                dar[k] = dzr[k] * hs[t, k] * r[t, k] * (1.0 - r[t, k])
                gb[0, k] += dar[k]
                for j in range(Z):
                    gW[0, k, j] += dar[k] * zin[t, j]
            for j in range(H):
                acc = dh[j] * (1.0 - u[t, j]) + dzr[j] * r[t, j]
                for k in range(H):
                    acc += dau[k] * W[1, k, j] + dar[k] * W[0, k, j]
                dnext[j] = acc
    return loss, grad


@njit
def _descend_kernel(lstm, theta0, mask, H, x, y, lr, epochs, clip):
    """Full-batch gradient descent; returns (best theta, best loss, history, ok)."""
    B = x.shape[0]
    theta = theta0.copy()
    best = theta0.copy()
    best_loss = np.inf
    history = np.empty(epochs + 1)
    for epoch in range(epochs + 1):
        if lstm:
            loss, grad = lstm_loss_grad(theta, H, x, y)
        else:
            loss, grad = gru_loss_grad(theta, H, x, y)
        loss /= B
        if not math.isfinite(loss):
            return best, best_loss, history[:epoch], False
        history[epoch] = loss
        if loss < best_loss:
            best_loss = loss
            best[:] = theta
        if epoch == epochs:
            break
        norm = 0.0
        for k in range(grad.shape[0]):
            grad[k] *= mask[k] / B
            norm += grad[k] * grad[k]
        norm = math.sqrt(norm)
        scale = clip / norm if norm > clip else 1.0
        for k in range(theta.shape[0]):
            theta[k] -= lr * scale * grad[k]
    return best, best_loss, history, True


def descend_numba(lstm, theta0, mask, H, x, y, lr, epochs, clip):
    return _descend_kernel(lstm, np.ascontiguousarray(theta0, dtype=np.float64),
                           np.ascontiguousarray(mask, dtype=np.float64), H,
                           np.ascontiguousarray(x, dtype=np.float64),
                           np.ascontiguousarray(y, dtype=np.float64), lr, epochs, clip)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

if USE_NUMBA:
    count_within_radius = count_within_radius_numba
    bellman_ford_relax = bellman_ford_numba
    q_episode = q_episode_numba
else:
    count_within_radius = count_within_radius_numpy
    bellman_ford_relax = bellman_ford_numpy
    q_episode = q_episode_numpy
