"""Small builders shared by the test modules."""

import numpy as np

from crowdmap.geometry import Observation, Point2
from crowdmap.relatedness import RelatednessMatrix


def obs(rid, k, label, x, y, note="", ts=0.0):
    return Observation(rid, k, label, Point2(x, y), note=note or label, timestamp=ts)


def random_problem_data(rng, n_rec_range=(2, 5), per_rec=(3, 10)):
    """Observations across 2-5 recordings and a random dense relatedness matrix."""
    n_rec = int(rng.integers(n_rec_range[0], n_rec_range[1] + 1))
    observations = []
    for r in range(n_rec):
        for k in range(int(rng.integers(per_rec[0], per_rec[1] + 1))):
            x, y = rng.uniform(-5, 5, 2)
            observations.append(obs(f"R{r}", k, f"L{k}", x, y))
    n = len(observations)
    s = rng.uniform(0, 1, (n, n))
    s = (s + s.T) / 2
    np.fill_diagonal(s, 0.0)
    return observations, RelatednessMatrix(s)


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def union_find_components(S, threshold):
    n = len(S)
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if S[i][j] >= threshold:
                uf.union(i, j)
    groups = {}
    for k in range(n):
        groups.setdefault(uf.find(k), []).append(k)
    return sorted(tuple(g) for g in groups.values())


def sort_median(values):
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def random_sparse(rng, n, density):
    S = np.where(rng.uniform(size=(n, n)) < density, rng.uniform(size=(n, n)), 0.0)
    S = np.triu(S, 1)
    return S + S.T
