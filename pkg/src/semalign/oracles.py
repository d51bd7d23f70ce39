"""Scalar-loop reference implementations.

Written with plain Python floats and ``math`` only, sharing no code with the
vectorized losses, so they can serve as independent checks.
"""

import math


def _rows(m):
    return [[float(x) for x in row] for row in m]


def sq_dist(x, y):
    return sum((a - b) ** 2 for a, b in zip(x, y))


def cosine(x, y, floor=1e-12):
    nx = max(math.sqrt(sum(a * a for a in x)), floor)
    ny = max(math.sqrt(sum(b * b for b in y)), floor)
    return sum(a * b for a, b in zip(x, y)) / (nx * ny)


def variance(t):
    t = _rows(t)
    n, k = len(t), len(t[0])
    mean = [sum(row[j] for row in t) / n for j in range(k)]
    return sum(sq_dist(row, mean) for row in t) / (n - 1)


def kde(x, t, b=1.0, relative=True, sigma_floor=1e-8):
    t = _rows(t)
    n = len(t)
    sigma = max(variance(t), sigma_floor) if relative else 1.0
    total = 0.0
    for ti in t:
        total += math.exp(-sq_dist(x, ti) / (b * b * sigma))
    return total / (2.0 * n * b * b * math.pi)


def gamma(t, r, b=1.0, relative=True, divergence="kl", prob_floor=1e-30):
    t, r = _rows(t), _rows(r)
    kt = [kde(x, t, b, relative) for x in t]
    kr = [kde(x, r, b, relative) for x in t]
    st, sr = sum(kt), sum(kr)
    out = 0.0
    for a, c in zip(kt, kr):
        p, q = a / st, c / sr
        if divergence == "kl":
            out += p * math.log(p / max(q, prob_floor))
        else:
            out += (p - q) ** 2
    return out


def sdd(u, v, **kw):
    return 0.5 * (gamma(u, v, **kw) + gamma(v, u, **kw))


def gaussian(x, y, gamma_sq):
    return math.exp(-sq_dist(x, y) / (2.0 * gamma_sq))


def polynomial(x, y, coef0, degree):
    return (sum(a * b for a, b in zip(x, y)) + coef0) ** degree


def mkmmd(u, v, kernel_fns, betas):
    """Expanded double sum of the biased estimator for ``sum_i beta_i k_i``."""
    u, v = _rows(u), _rows(v)
    n = len(u)

    def k(x, y):
        return sum(b * f(x, y) for b, f in zip(betas, kernel_fns))

    uu = sum(k(a, c) for a in u for c in u)
    vv = sum(k(a, c) for a in v for c in v)
    uv = sum(k(a, c) for a in u for c in v)
    return (uu + vv - 2.0 * uv) / (n * n)


def clip_loss(u, v, tau):
    u, v = _rows(u), _rows(v)
    n = len(u)
    total = 0.0
    for i in range(n):
        num = math.exp(cosine(u[i], v[i]) / tau)
        den = sum(math.exp(cosine(u[i], v[j]) / tau) for j in range(n))
        total += math.log(num / den)
        num = math.exp(cosine(v[i], u[i]) / tau)
        den = sum(math.exp(cosine(v[i], u[j]) / tau) for j in range(n))
        total += math.log(num / den)
    return -total / (2.0 * n)


def ssl_loss(z, z_pos, tau):
    z, z_pos = _rows(z), _rows(z_pos)
    n = len(z)
    total = 0.0
    for i in range(n):
        num = math.exp(cosine(z[i], z_pos[i]) / tau)
        den = sum(math.exp(cosine(z[i], z[j]) / tau) for j in range(n))
        total += math.log(num / den)
    return -total / n


def parzen(x, t, sigma_floor=1e-8):
    t = _rows(t)
    sigma = max(variance(t), sigma_floor)
    return sum(math.exp(-sq_dist(x, ti) / sigma) for ti in t) / (len(t) * math.pi)


def gap(t, r):
    t, r = _rows(t), _rows(r)
    n = len(t)
    a = sum((parzen(x, t) - parzen(x, r)) ** 2 for x in t) / n
    c = sum((parzen(x, r) - parzen(x, t)) ** 2 for x in r) / n
    return a + c
