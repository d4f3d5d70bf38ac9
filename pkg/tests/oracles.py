"""Independent reference implementations used as test oracles.

Each one is written in the plainest possible form (scalar loops, textbook
formulas, exhaustive search) and shares no code with the package.
"""

import itertools
import math

import numpy as np


# ---- finite differences ---------------------------------------------------

def central_difference(f, x, eps=1e-6):
    """Gradient of scalar f at array x by central differences, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x)
        flat[i] = keep - eps
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


# ---- losses ----------------------------------------------------------------

def bce_reference(logits, labels):
    """Class-balanced BCE in scalar Python."""
    n_pos = sum(1 for y in labels if y == 1)
    n_neg = len(labels) - n_pos
    w = n_neg / n_pos if n_pos and n_neg else 1.0
    total = 0.0
    for z, y in zip(logits, labels):
        p = 1.0 / (1.0 + math.exp(-z))
        total += -(w * y * math.log(p) + (1 - y) * math.log(1 - p))
    return total / len(labels)


def mse_two_pass(preds, targets):
    """First pass collects squared errors, second pass averages them."""
    sq = [(p - t) ** 2 for p, t in zip(preds, targets)]
    return math.fsum(sq) / len(sq)


def adam_reference(p0, grad_fn, steps, lr=3e-4, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-loop Adam; grad_fn(t, params) -> gradient list. Returns the trajectory."""
    p = list(p0)
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    traj = []
    for t in range(1, steps + 1):
        g = grad_fn(t, p)
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            p[i] = p[i] - lr * mh / (math.sqrt(vh) + eps)
        traj.append(list(p))
    return traj


# ---- alignment -------------------------------------------------------------

def dtw_paths(n, m, window):
    """Every monotone warping path from (0,0) to (n-1,m-1) inside the band |i - j| <= window."""
    def extend(path):
        i, j = path[-1]
        if (i, j) == (n - 1, m - 1):
            yield path
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m and abs(a - b) <= window:
                yield from extend(path + [(a, b)])
    if abs(n - 1 - (m - 1)) > window:
        return
    yield from extend([(0, 0)])


def dtw_exhaustive(a, b, window):
    """Minimum path cost by enumerating every warping path (small inputs only)."""
    best = math.inf
    for path in dtw_paths(len(a), len(b), window):
        best = min(best, sum(a[i] != b[j] for i, j in path))
    return best


def dtw_graph(a, b, window):
    """Minimum path cost as a shortest path in the band lattice (networkx Dijkstra)."""
    import networkx as nx

    g = nx.DiGraph()
    n, m = len(a), len(b)
    g.add_node("src")
    for i, j in itertools.product(range(n), range(m)):
        if abs(i - j) > window:
            continue
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            x, y = i + di, j + dj
            if x < n and y < m and abs(x - y) <= window:
                g.add_edge((i, j), (x, y), weight=int(a[x] != b[y]))
    g.add_edge("src", (0, 0), weight=int(a[0] != b[0]))
    if (n - 1, m - 1) not in g:
        return math.inf
    return nx.dijkstra_path_length(g, "src", (n - 1, m - 1))
