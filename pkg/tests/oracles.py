"""Brute-force reference implementations used as test oracles.

Nothing here imports from spikegest; each function is written from the
behavioural description alone, as plainly as possible.
"""

import itertools
import math


def tc_encode(signal, threshold):
    """Scalar temporal-contrast recurrence, one timestep at a time."""
    out = [0]
    u = 0.0
    for k in range(1, len(signal)):
        du = (signal[k] - signal[k - 1]) + u
        if abs(du) >= threshold:
            out.append(1 if du > 0 else -1)
            u = 0.0
        else:
            out.append(0)
            u = du
    return out


def conv_features(raster, assignment, w0, tau_r, stride, threshold):
    """Naive triple loop over kernels, convolution steps and kernel cells.

    ``raster`` is a list of channel rows, ``assignment`` the cluster of every
    channel and ``w0`` a 3x3 nested list.
    """
    n_clusters = max(assignment) + 1
    n_t = len(raster[0])
    features = []
    for c in range(n_clusters):
        members = [ch for ch in range(len(assignment)) if assignment[ch] == c]
        for start in range(len(members) - 2):
            chans = members[start:start + 3]
            w = [[w0[i][j] for j in range(3)] for i in range(3)]
            v = 0.0
            t = 0
            while t + 3 <= n_t:
                patch = [[raster[chans[i]][t + j] for j in range(3)] for i in range(3)]
                total = 0.0
                for i in range(3):
                    for j in range(3):
                        total = total + w[i][j] * patch[i][j]
                v = v + total
                out = 0
                if v >= threshold:
                    out = 1
                elif v <= -threshold:
                    out = -1
                if out != 0:
                    v = 0.0
                    for i in range(3):
                        for j in range(3):
                            tau_minus_t = -(2 - j)
                            if patch[i][j] == 1:
                                dw = math.exp(tau_minus_t - tau_r)
                            elif patch[i][j] == -1:
                                dw = math.exp(-((tau_minus_t - tau_r) ** 2))
                            else:
                                continue
                            w[i][j] = w[i][j] + out * dw
                t += stride
            for i in range(3):
                for j in range(3):
                    features.append(w[i][j])
    return features


def kmeans_optimum(points, k):
    """Minimum WCSS over every labelling that uses all k clusters."""
    n = len(points)
    best = math.inf
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) < k:
            continue
        total = 0.0
        for c in range(k):
            group = [points[i] for i in range(n) if labels[i] == c]
            centre = [sum(p[d] for p in group) / len(group) for d in range(len(points[0]))]
            total += sum(sum((p[d] - centre[d]) ** 2 for d in range(len(centre))) for p in group)
        best = min(best, total)
    return best


def knn_vote(train, labels, query, k):
    """Sort by (distance, index), vote, break vote ties by summed distance then label."""
    dist = [math.sqrt(sum((a - b) ** 2 for a, b in zip(x, query))) for x in train]
    order = sorted(range(len(train)), key=lambda i: (dist[i], i))[:k]
    tally = {}
    for i in order:
        count, total = tally.get(labels[i], (0, 0.0))
        tally[labels[i]] = (count + 1, total + dist[i])
    return sorted(tally, key=lambda c: (-tally[c][0], tally[c][1], c))[0]
