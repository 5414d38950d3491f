"""Slow, definition-level reference implementations used to check the library.

Everything here is plain Python (lists, math.fsum), written straight from
the textbook formulas without sharing code with the package.
"""

import math
import statistics


def mean(xs):
    return math.fsum(xs) / len(xs)


def pearson(x, y):
    mx, my = mean(x), mean(y)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def average_ranks(x):
    """1-based ranks; tied values share the mean of the positions they occupy."""
    ranks = []
    for v in x:
        below = sum(1 for w in x if w < v)
        equal = sum(1 for w in x if w == v)
        ranks.append(below + (equal + 1) / 2)
    return ranks


def spearman(x, y):
    return pearson(average_ranks(x), average_ranks(y))


def kendall_counts(x, y):
    n = len(x)
    conc = disc = tie_x = tie_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tie_x += 1
            elif dy == 0:
                tie_y += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    return conc, disc, tie_x, tie_y


def kendall_tau_b(x, y):
    c, d, tx, ty = kendall_counts(x, y)
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def percentile_linear(values, q):
    """Linear interpolation between closest ranks (h = (n - 1) q / 100)."""
    s = sorted(values)
    h = (len(s) - 1) * q / 100
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def moving_z(values, window):
    out = []
    for k in range(window, len(values)):
        w = values[k - window:k]
        m = statistics.fmean(w)
        sd = statistics.stdev(w)
        out.append((values[k] - m) / sd)
    return out


def ols(x, y):
    """Normal equations for y = a x + b."""
    n = len(x)
    sx, sy = math.fsum(x), math.fsum(y)
    sxx = math.fsum(a * a for a in x)
    sxy = math.fsum(a * b for a, b in zip(x, y))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    return slope, (sy - slope * sx) / n


def huber(pred, target, delta=1.0):
    total = []
    for p, t in zip(pred, target):
        e = abs(p - t)
        total.append(0.5 * e * e if e <= delta else delta * (e - 0.5 * delta))
    return math.fsum(total) / len(total)


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def lstm_scalar(Wx, Wh, b, Wy, by, inputs):
    """Loop-by-loop LSTM (gate blocks i, f, o, g) over nested lists."""
    H = len(Wh)
    h = [0.0] * H
    c = [0.0] * H
    for x in inputs:
        a = [b[g] + sum(x[k] * Wx[k][g] for k in range(len(x))) + sum(h[k] * Wh[k][g] for k in range(H))
             for g in range(4 * H)]
        i = [_sig(a[j]) for j in range(H)]
        f = [_sig(a[H + j]) for j in range(H)]
        o = [_sig(a[2 * H + j]) for j in range(H)]
        g = [math.tanh(a[3 * H + j]) for j in range(H)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(H)]
        h = [o[j] * math.tanh(c[j]) for j in range(H)]
    return [by[m] + sum(h[j] * Wy[j][m] for j in range(H)) for m in range(len(by))]


def core_hours_per_job(job):
    return job.cores_requested * (job.end_time - job.start_time) / 3600.0
