"""Independent reference implementations used as test oracles.

Nothing here imports the package's kernels; each update is recoded from the
recursion itself.
"""

import numpy as np


def step_oracle(x, eps, dv, dc, nu, L):
    """Scalar-loop transcription of the coupled BEC recursion."""
    w = len(nu)
    n = L + w - 1

    def read(z):
        return x[z - 1] if 1 <= z <= n else 0.0

    out = [0.0] * n
    for z in range(1, L + 1):
        outer = 0.0
        for i in range(w):
            inner = 0.0
            for j in range(w):
                inner += nu[j] * read(z + i - j)
            outer += nu[i] * (1.0 - inner) ** (dc - 1)
        out[z - 1] = eps * (1.0 - outer) ** (dv - 1)
    return np.array(out)


def uniform_oracle(x, eps, dv, dc, w, L):
    """Classical uniform-coupling update, written with a moving average."""
    pad = np.concatenate([np.zeros(w - 1), x, np.zeros(w - 1)])
    cn = np.convolve(pad, np.ones(w) / w, mode="valid")
    cn = np.concatenate([cn, np.zeros(w)])
    out = np.zeros_like(x)
    for z in range(1, L + 1):
        s = np.mean((1.0 - cn[z - 1 : z - 1 + w]) ** (dc - 1))
        out[z - 1] = eps * (1.0 - s) ** (dv - 1)
    return out


def numpy_step(x, eps, dv, dc, nu, L):
    """Vectorised single-type update on a length ``L + w - 1`` profile."""
    w = len(nu)
    pad = np.concatenate([np.zeros(w - 1), x, np.zeros(w - 1)])
    cn = sum(nu[j] * pad[w - 1 - j : w - 1 - j + len(x) + w - 1] for j in range(w))
    s = sum(nu[i] * (1.0 - cn[i : i + L]) ** (dc - 1) for i in range(w))
    out = np.zeros_like(x)
    out[:L] = eps * (1.0 - s) ** (dv - 1)
    return out


def proto_numpy_step(x, eps, dv, b1, b2):
    """Vectorised multi-edge update; ``x`` has shape (L, 4) in order v1->c(z), v2->c(z), v1->c(z+1), v2->c(z+1)."""
    m = np.array([b1, b2, dv - b1, dv - b2])
    L = x.shape[0]
    one = np.ones(L)

    def f(k, e):
        return (1.0 - x[:, k]) ** e if m[k] > 0 else one

    def shift(a):  # value of segment z-1 seen at check node z
        return np.concatenate([[1.0], a[:-1]])

    full = [f(k, m[k]) for k in range(4)]
    left_known = full[0] * full[1]  # bundles into c(z) from segment z
    right_known = full[2] * full[3]  # bundles into c(z+1) from segment z
    y = np.zeros_like(x)
    if m[0]:
        y[:, 0] = 1.0 - f(0, m[0] - 1) * full[1] * shift(right_known)
    if m[1]:
        y[:, 1] = 1.0 - f(1, m[1] - 1) * full[0] * shift(right_known)
    nxt = np.concatenate([left_known[1:], [1.0]])
    if m[2]:
        y[:, 2] = 1.0 - f(2, m[2] - 1) * full[3] * nxt
    if m[3]:
        y[:, 3] = 1.0 - f(3, m[3] - 1) * full[2] * nxt
    out = np.zeros_like(x)
    for k in range(4):
        if m[k]:
            o = (k + 2) % 4
            out[:, k] = eps * y[:, k] ** (m[k] - 1) * (y[:, o] ** m[o] if m[o] else 1.0)
    return out, m


def frontier_speed(step, x0, weights, eps, skip=8, span=10, max_iters=50_000):
    """Advance per iteration of the left ``eps / 2`` crossing between distances ``skip`` and ``skip + span``.

    ``step`` maps a state to the next one; ``weights`` reduces a state to a
    per-position profile.
    """
    x = x0
    level = eps / 2
    times = {}
    for t in range(1, max_iters):
        x = step(x)
        p = weights(x)
        half = p[: len(p) // 2]
        above = np.nonzero(half >= level)[0]
        if not above.size:
            break
        k = above[0]
        prev = half[k - 1] if k > 0 else 0.0
        pos = k - 0.5 + (level - prev) / (half[k] - prev)
        for target in (skip, skip + span):
            if target not in times and pos >= target:
                times[target] = t
        if len(times) == 2:
            return span / (times[skip + span] - times[skip])
    raise AssertionError("no travelling front found")


def single_frontier_speed(dv, alpha, eps, L=100):
    nu = (alpha, 1 - alpha)
    x0 = np.zeros(L + 1)
    x0[:L] = eps
    return frontier_speed(lambda x: numpy_step(x, eps, dv, 2 * dv, nu, L), x0, lambda x: x[:L], eps)


def proto_frontier_speed(dv, b1, b2, eps, L=100):
    m = np.array([b1, b2, dv - b1, dv - b2])
    x0 = np.where(m > 0, eps, 0.0) * np.ones((L, 4))
    return frontier_speed(lambda x: proto_numpy_step(x, eps, dv, b1, b2)[0], x0, lambda x: x @ m / (2 * dv), eps)
