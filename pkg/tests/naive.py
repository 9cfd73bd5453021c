"""Plain-Python loop reimplementations used as independent test oracles.

Nothing here imports from the package under test.
"""

import bisect
import functools
import math


def entropy_of_counts(counts):
    total = sum(counts.values())
    h = 0.0
    for c in counts.values():
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def histogram(img):
    counts = {}
    for row in img:
        for v in row:
            counts[int(v)] = counts.get(int(v), 0) + 1
    return counts


def shannon(img):
    return entropy_of_counts(histogram(img))


def glcm_counts(img, levels=256, offset=(1, 0), symmetric=True):
    dx, dy = offset
    h, w = len(img), len(img[0])
    counts = {}
    for y in range(h):
        for x in range(w):
            x2, y2 = x + dx, y + dy
            if not (0 <= x2 < w and 0 <= y2 < h):
                continue
            i = int(img[y][x]) * levels // 256
            j = int(img[y2][x2]) * levels // 256
            counts[(i, j)] = counts.get((i, j), 0) + 1
            if symmetric:
                counts[(j, i)] = counts.get((j, i), 0) + 1
    return counts


def glcm_entropy(img, levels=256, offset=(1, 0), symmetric=True):
    return entropy_of_counts(glcm_counts(img, levels, offset, symmetric))


def gradients(img):
    """Central differences; at borders a one-sided difference halved."""
    h, w = len(img), len(img[0])
    fx = [[0.0] * w for _ in range(h)]
    fy = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            left = img[y][x - 1] if x > 0 else img[y][x]
            right = img[y][x + 1] if x < w - 1 else img[y][x]
            up = img[y - 1][x] if y > 0 else img[y][x]
            down = img[y + 1][x] if y < h - 1 else img[y][x]
            fx[y][x] = (float(right) - float(left)) / 2
            fy[y][x] = (float(down) - float(up)) / 2
    return fx, fy


@functools.lru_cache(maxsize=None)
def _edges(bins, limit):
    width = 2 * limit / bins
    return [-limit + i * width for i in range(bins)]


def bin_of(v, bins, limit):
    """Index of the last left bin edge <= v, clamped to the edge bins."""
    idx = bisect.bisect_right(_edges(bins, limit), v) - 1
    return min(max(idx, 0), bins - 1)


def deldensity_counts(img, bins=255, limit=127.5):
    fx, fy = gradients(img)
    counts = {}
    for row_x, row_y in zip(fx, fy):
        for gx, gy in zip(row_x, row_y):
            key = (bin_of(gx, bins, limit), bin_of(gy, bins, limit))
            counts[key] = counts.get(key, 0) + 1
    return counts


def delentropy(img, bins=255, half=True):
    h = entropy_of_counts(deldensity_counts(img, bins))
    return h / 2 if half else h


def knn(points, k):
    """All-pairs Euclidean neighbours; ties go to the lower index."""
    out_d, out_i = [], []
    for i, p in enumerate(points):
        cands = []
        for j, q in enumerate(points):
            if j == i:
                continue
            s = 0.0
            for a, b in zip(p, q):
                s += (a - b) * (a - b)
            cands.append((math.sqrt(s), j))
        cands.sort()
        out_d.append([d for d, _ in cands[:k]])
        out_i.append([j for _, j in cands[:k]])
    return out_d, out_i


def mean_std(xs):
    n = len(xs)
    m = sum(xs) / n
    return m, math.sqrt(sum((x - m) ** 2 for x in xs) / (n - 1))
