"""Slow, obviously-correct reference implementations used as test oracles.

None of these share code with the package; they are written as plain loops.
"""

from __future__ import annotations

import math
import statistics
from functools import lru_cache


def naive_conv_features(window, h, b, apply_sigmoid=True):
    """y[j][n] = sum_k sum_l x[k][n-l] h[k][j][l] + b[j] for n in [L-1, M-1]."""
    K = len(window)
    M = len(window[0])
    p = len(h[0])
    L = len(h[0][0])
    feats = []
    for j in range(p):
        for n in range(L - 1, M):
            acc = b[j]
            for k in range(K):
                for l in range(L):
                    acc += window[k][n - l] * h[k][j][l]
            feats.append(1.0 / (1.0 + math.exp(-acc)) if apply_sigmoid else acc)
    return feats


def naive_forward(window, h, b, hidden_w, hidden_b, out_w, out_b):
    feats = naive_conv_features(window, h, b)
    sig = lambda z: 1.0 / (1.0 + math.exp(-z))  # noqa: E731
    if len(hidden_w):
        feats = [sig(sum(w * f for w, f in zip(row, feats)) + hb) for row, hb in zip(hidden_w, hidden_b)]
    return sig(sum(w * f for w, f in zip(out_w, feats)) + out_b)


def rle(track):
    out = []
    for v in track:
        v = int(v)
        if out and out[-1][0] == v:
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return out


def unrle(runs):
    return [v for v, n in runs for _ in range(n)]


def oracle_fill_gaps(track, min_gap):
    runs = rle(track)
    for i in range(1, len(runs) - 1):
        if runs[i][0] == 0 and runs[i][1] < min_gap:
            runs[i][0] = 1
    return unrle(runs)


def oracle_drop_pulses(track, min_pulse):
    return unrle([[0 if v == 1 and n < min_pulse else v, n] for v, n in rle(track)])


def oracle_midpoints(track):
    beats, pos = [], 0
    for v, n in rle(track):
        if v == 1:
            beats.append((pos + pos + n - 1) // 2)
        pos += n
    return beats


def oracle_pulse_track(beats, length, half=37):
    covered = set()
    for b in beats:
        for i in range(b - half, b + half + 1):
            if 0 <= i < length:
                covered.add(i)
    return [1 if i in covered else 0 for i in range(length)]


def oracle_max_matching(ref, est, tol):
    """Maximum one-to-one matching size by exhaustive search with memoisation."""
    ref, est = list(ref), list(est)

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(ref):
            return 0
        result = best(i + 1, used)  # leave ref[i] unmatched
        for j, e in enumerate(est):
            if not used >> j & 1 and abs(e - ref[i]) <= tol:
                result = max(result, 1 + best(i + 1, used | 1 << j))
        return result

    return best(0, 0)


def oracle_median_filter(x, width):
    left = width // 2
    n = len(x)
    out = []
    for i in range(n):
        vals = [x[min(max(j, 0), n - 1)] for j in range(i - left, i - left + width)]
        out.append(statistics.median(vals))
    return out


def oracle_decode_212(data, n):
    out = []
    for g in range(0, len(data) - 2, 3):
        b0, b1, b2 = data[g], data[g + 1], data[g + 2]
        a = b0 | (b1 & 0x0F) << 8
        c = b2 | (b1 >> 4) << 8
        out += [a - 4096 if a > 2047 else a, c - 4096 if c > 2047 else c]
    return out[:n]
