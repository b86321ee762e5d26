"""Compiled inner loops for Dyck-weighted and all-pair path sums.

Time points are indexed by position 0..N with 0 the latest. A configuration
x_0..x_N of pair indices carries the chain weight
I0[x_0] F_0[x_0, x_1] I0[x_1] ... F_{N-1}[x_{N-1}, x_N] I0[x_N].
The Dyck weight of a configuration is a sum over Dyck paths of products of
I / I-1 factors, evaluated with a height dynamic program over path positions
m = 0..2N (pair (a, b) sits at midpoint m = a + b with lag l = b - a).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _advance(m, N, hmax, x, Itab, up, dn, phi_a, phi_p):
    """Move the height DP from path position m to m + 1."""
    H = up.shape[1]
    top = min(m, 2 * N - m, hmax)
    if m % 2 == 0:
        phi_a[0] = 1.0
        phi_p[0] = 0.0
    prod = 1.0 + 0.0j
    h = 2 - (m % 2)
    while h <= top:
        A = Itab[h, x[(m - h) // 2], x[(m + h) // 2]]
        phi_p[h] = prod * (A - 1.0)
        prod = prod * A
        phi_a[h] = prod
        h += 2
    for k in range(H):
        up[m + 1, k] = 0.0
        dn[m + 1, k] = 0.0
    cap_up = min(hmax, 2 * N - m - 1)
    h = m % 2
    while h <= top:
        su = up[m, h]
        sd = dn[m, h]
        if su != 0.0 or sd != 0.0:
            if h + 1 <= cap_up:
                up[m + 1, h + 1] += (su + sd) * phi_a[h]
            if h >= 1:
                dn[m + 1, h - 1] += su * phi_p[h] + sd * phi_a[h]
        h += 2


@njit(cache=True)
def _pair_factor(b, N, x, Itab, outer):
    """Product of I_{b-a}[x_a, x_b] over a < b; the (0, N) pair uses ``outer``.

    outer: 0 -> I_N, 1 -> I_N - 1, 2 -> omitted.
    """
    prod = 1.0 + 0.0j
    for a in range(b):
        v = Itab[b - a, x[a], x[b]]
        if a == 0 and b == N:
            if outer == 1:
                v = v - 1.0
            elif outer == 2:
                v = 1.0
        prod *= v
    return prod


@njit(cache=True)
def dyck_sums(F_links, I0, Itab, hmax, out_dyck, out_denom, want_denom):
    """Accumulate chain-weighted Dyck sums into out_dyck[x_0, x_N].

    Paths are restricted to heights <= hmax (hmax = N - 1 drops the crest).
    When want_denom is set, also accumulate the all-pair product without the
    (0, N) pair into out_denom.
    """
    N = F_links.shape[0]
    D = I0.shape[0]
    H = N + 2
    x = np.zeros(N + 1, np.int64)
    chain = np.zeros(N + 1, np.complex128)
    pairs = np.ones(N + 1, np.complex128)
    up = np.zeros((2 * N + 1, H), np.complex128)
    dn = np.zeros((2 * N + 1, H), np.complex128)
    phi_a = np.zeros(H, np.complex128)
    phi_p = np.zeros(H, np.complex128)
    b = 0
    x[0] = -1
    while b >= 0:
        x[b] += 1
        if x[b] == D:
            b -= 1
            continue
        if b == 0:
            chain[0] = I0[x[0]]
            for k in range(H):
                up[1, k] = 0.0
                dn[1, k] = 0.0
            if hmax >= 1:
                up[1, 1] = 1.0
            pairs[0] = 1.0
        else:
            chain[b] = chain[b - 1] * F_links[b - 1, x[b - 1], x[b]] * I0[x[b]]
            if chain[b] == 0.0:
                continue
            _advance(b, N, hmax, x, Itab, up, dn, phi_a, phi_p)
            if want_denom:
                pairs[b] = pairs[b - 1] * _pair_factor(b, N, x, Itab, 2)
        if b == N:
            if N == 0:
                out_dyck[x[0], x[0]] += chain[0]
                if want_denom:
                    out_denom[x[0], x[0]] += chain[0]
                continue
            for m in range(N + 1, 2 * N):
                _advance(m, N, hmax, x, Itab, up, dn, phi_a, phi_p)
            out_dyck[x[0], x[N]] += chain[N] * dn[2 * N, 0]
            if want_denom:
                out_denom[x[0], x[N]] += chain[N] * pairs[N]
        else:
            b += 1
            x[b] = -1


@njit(cache=True)
def dyck_weights(I0, Itab, N, hmax, out):
    """Dyck weight times the I0 factors for every configuration.

    ``out`` is flat of length D**(N+1), with x_0 the most significant digit.
    """
    D = I0.shape[0]
    H = N + 2
    x = np.zeros(N + 1, np.int64)
    chain = np.zeros(N + 1, np.complex128)
    up = np.zeros((2 * N + 1, H), np.complex128)
    dn = np.zeros((2 * N + 1, H), np.complex128)
    phi_a = np.zeros(H, np.complex128)
    phi_p = np.zeros(H, np.complex128)
    b = 0
    x[0] = -1
    while b >= 0:
        x[b] += 1
        if x[b] == D:
            b -= 1
            continue
        if b == 0:
            chain[0] = I0[x[0]]
            for k in range(H):
                up[1, k] = 0.0
                dn[1, k] = 0.0
            if hmax >= 1:
                up[1, 1] = 1.0
        else:
            chain[b] = chain[b - 1] * I0[x[b]]
            _advance(b, N, hmax, x, Itab, up, dn, phi_a, phi_p)
        if b == N:
            idx = 0
            for a in range(N + 1):
                idx = idx * D + x[a]
            if N == 0:
                out[idx] = chain[0]
                continue
            for m in range(N + 1, 2 * N):
                _advance(m, N, hmax, x, Itab, up, dn, phi_a, phi_p)
            out[idx] = chain[N] * dn[2 * N, 0]
        else:
            b += 1
            x[b] = -1


@njit(cache=True)
def all_pair_weights(I0, Itab, N, outer, out):
    """I0 factors times the product over all pairs, for every configuration."""
    D = I0.shape[0]
    x = np.zeros(N + 1, np.int64)
    acc = np.zeros(N + 1, np.complex128)
    b = 0
    x[0] = -1
    while b >= 0:
        x[b] += 1
        if x[b] == D:
            b -= 1
            continue
        if b == 0:
            acc[0] = I0[x[0]]
        else:
            acc[b] = acc[b - 1] * I0[x[b]] * _pair_factor(b, N, x, Itab, outer)
        if b == N:
            idx = 0
            for a in range(N + 1):
                idx = idx * D + x[a]
            out[idx] = acc[N]
        else:
            b += 1
            x[b] = -1


@njit(cache=True)
def history_sums(links, I0, Itab, n_points, skip_outer, out):
    """Exact auxiliary propagators by depth-first enumeration, earliest point first.

    links[k] propagates bath point k to k + 1 (matrix indexed (later, earlier)).
    out[n - 1, y_n, y_1] accumulates the n-point sum of chain weight times all
    pair factors, for n = 1..n_points. With skip_outer set, the pair joining
    the first and last point of the n_points sum is left out.

    P[t, u, c] caches the product of pair factors between the fixed points
    y_0..y_t and a future point u holding value c, so a leaf costs O(1).
    """
    D = I0.shape[0]
    n = n_points
    y = np.zeros(n, np.int64)
    acc = np.zeros(n, np.complex128)
    P = np.ones((n, n, D), np.complex128)
    t = 0
    y[0] = -1
    while t >= 0:
        y[t] += 1
        if y[t] == D:
            t -= 1
            continue
        c = y[t]
        if t == 0:
            v = I0[c] + 0.0j
        else:
            v = acc[t - 1] * links[t - 1, c, y[t - 1]] * I0[c] * P[t - 1, t, c]
            if v == 0.0:
                continue
        acc[t] = v
        out[t, c, y[0]] += v
        if t == n - 2:
            # leaves inline: pair factors of the last point u = t + 1
            y0 = y[0]
            for e in range(D):
                if t == 0:
                    f = 1.0 + 0.0j if skip_outer else Itab[1, e, c]
                else:
                    f = P[t - 1, t + 1, e] * Itab[1, e, c]
                out[t + 1, e, y0] += v * links[t, e, c] * I0[e] * f
            continue
        if t < n - 1:
            for u in range(t + 1, n):
                lag = u - t
                if t == 0:
                    if skip_outer and u == n - 1:
                        for e in range(D):
                            P[0, u, e] = 1.0
                    else:
                        for e in range(D):
                            P[0, u, e] = Itab[lag, e, c]
                else:
                    for e in range(D):
                        P[t, u, e] = P[t - 1, u, e] * Itab[lag, e, c]
            t += 1
            y[t] = -1
