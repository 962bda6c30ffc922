"""Finite networked causal models solved by exhaustive enumeration.

A :class:`DiscreteNscm` lives on a small graph with binary ``S``, ``A``,
``U`` and ``X``.  The aggregate of node ``i`` is a lookup on the
``S``-labelled depth-``k`` computation tree of ``i`` (so it is a function of
the ``S`` values within ``k`` hops and nothing else) and the feature is
``X_i = f_int[A_i, U_i]``.  The feature distribution refers to a node drawn
uniformly at random.

Two routes compute the interventional law of ``X`` under ``do(S = s)`` for
every node: brute-force propagation over every exogenous outcome, and the
identification formula over WL colours

    P(x | do(s)) = sum_c P(c) sum_a P(x | a) 1[g(all-s, c) = a]

which uses only observational quantities.  They agree when the noise is
independent of colour; :func:`random_instance` can also build models that
break that condition so the disagreement can be exhibited.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, build_graph, computation_tree, wl_colors

TOL = 1e-9


class OracleMismatch(AssertionError):
    pass


def _assignment(mask, n):
    return tuple((mask >> i) & 1 for i in range(n))


@dataclass
class DiscreteNscm:
    """Explicit tables for a binary networked SCM.

    ``p_assign[mask]`` is the joint probability of the ``S`` vector whose bit
    ``i`` is ``S_i``.  ``mechanism`` maps a labelled computation-tree
    signature to the binary aggregate.  ``f_int[a, u]`` is the feature.
    ``noise_p1[i]`` is ``P(U_i = 1)``; noise is independent across nodes.
    ``p_x_given_a[a, x]`` is the declared feature law given the aggregate;
    by default it is the observational conditional.
    """

    graph: Graph
    hops: int
    p_assign: np.ndarray
    mechanism: dict = field(repr=False)
    f_int: np.ndarray
    noise_p1: np.ndarray
    p_x_given_a: np.ndarray = None

    def __post_init__(self):
        n = self.graph.n
        self.p_assign = np.asarray(self.p_assign, dtype=np.float64)
        self.f_int = np.asarray(self.f_int, dtype=np.int64)
        self.noise_p1 = np.asarray(self.noise_p1, dtype=np.float64)
        if self.p_assign.shape != (2**n,):
            raise ValueError(f"p_assign needs {2**n} entries, got {self.p_assign.shape}")
        if (self.p_assign < 0).any() or abs(self.p_assign.sum() - 1.0) > 1e-12:
            raise ValueError("p_assign must be a probability vector")
        if self.f_int.shape != (2, 2) or not np.isin(self.f_int, (0, 1)).all():
            raise ValueError("f_int must be a binary 2x2 table indexed by (a, u)")
        if self.noise_p1.shape != (n,) or ((self.noise_p1 < 0) | (self.noise_p1 > 1)).any():
            raise ValueError("noise_p1 must hold one probability per node")
        self.colors = wl_colors(self.graph, self.hops).colors
        for mask in range(2**n):
            for i in range(n):
                if self.signature(i, _assignment(mask, n)) not in self.mechanism:
                    raise ValueError(f"mechanism is not total: node {i}, assignment mask {mask}")
        if self.p_x_given_a is None:
            self.p_x_given_a = observational_conditional(self)
        self.p_x_given_a = np.asarray(self.p_x_given_a, dtype=np.float64)
        if self.p_x_given_a.shape != (2, 2) or np.abs(self.p_x_given_a.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("p_x_given_a rows must sum to 1")

    @property
    def n(self):
        return self.graph.n

    def signature(self, node, s_vector):
        return computation_tree(self.graph, node, self.hops, labels=s_vector)

    def aggregate(self, node, s_vector):
        return self.mechanism[self.signature(node, s_vector)]

    def color_law(self):
        """``P(c)`` for a uniformly drawn node."""
        ids, counts = np.unique(self.colors, return_counts=True)
        return dict(zip(ids.tolist(), (counts / self.n).tolist()))

    def noise_outcomes(self):
        """Every joint noise vector with its probability."""
        for u in itertools.product((0, 1), repeat=self.n):
            u = np.array(u)
            yield u, float(np.prod(np.where(u == 1, self.noise_p1, 1.0 - self.noise_p1)))


# ---------------------------------------------------------------- enumeration

def _joint_xa(m, assignments):
    """``P(A = a, X = x)`` for a uniform node, summed over the given
    ``(probability, s_vector)`` pairs and every noise outcome."""
    joint = np.zeros((2, 2))
    outcomes = list(m.noise_outcomes())
    for p_s, s_vec in assignments:
        if p_s == 0.0:
            continue
        a = [m.aggregate(i, s_vec) for i in range(m.n)]
        for u, p_u in outcomes:
            for i in range(m.n):
                joint[a[i], m.f_int[a[i], u[i]]] += p_s * p_u / m.n
    return joint


def _observational_pairs(m):
    return [(float(m.p_assign[mask]), _assignment(mask, m.n)) for mask in range(2**m.n)]


def observational_conditional(m):
    joint = _joint_xa(m, _observational_pairs(m))
    marg = joint.sum(axis=1, keepdims=True)
    if (marg == 0).any():
        raise ValueError("some aggregate value never occurs observationally; P(x|a) undefined")
    return joint / marg


def observational_distribution(m):
    return _joint_xa(m, _observational_pairs(m)).sum(axis=0)


def enumerate_intervention(m, s_value):
    """Route (i): force every ``S`` to ``s_value`` and propagate."""
    return _joint_xa(m, [(1.0, (s_value,) * m.n)]).sum(axis=0)


def identification_formula(m, s_value):
    """Route (ii): the colour-sum formula with observational ``P(x|a)``."""
    forced = (s_value,) * m.n
    out = np.zeros(2)
    for c, p_c in m.color_law().items():
        members = np.flatnonzero(m.colors == c)
        values = {m.aggregate(int(i), forced) for i in members}
        if len(values) != 1:
            raise OracleMismatch(f"colour {c} nodes disagree on the forced aggregate: {sorted(values)}")
        out += p_c * m.p_x_given_a[values.pop()]
    return out


def oracle_interventional_distribution(m, s_value, tol=TOL):
    """Interventional ``[P(x=0), P(x=1)]`` by enumeration, cross-checked
    against the identification formula; raises :class:`OracleMismatch`."""
    direct = enumerate_intervention(m, s_value)
    formula = identification_formula(m, s_value)
    gap = float(np.abs(direct - formula).max())
    if gap > tol:
        raise OracleMismatch(f"do(S={s_value}): enumeration {direct} vs formula {formula} (gap {gap:.3g})")
    return direct


def observational_decomposition_check(m):
    """``max_x |P(x) - sum_{s,c} P(s,c) sum_a P(x|a) 1[g(s,c) = a]|``.

    ``P(x)`` comes from propagating the mechanisms; the sum uses the
    declared ``p_x_given_a``.
    """
    p_x = observational_distribution(m)
    weights = {}
    for p_s, s_vec in _observational_pairs(m):
        for i in range(m.n):
            key = (m.signature(i, s_vec), int(m.colors[i]))
            weights[key] = weights.get(key, 0.0) + p_s / m.n
    decomposed = np.zeros(2)
    for (sig, _), w in weights.items():
        decomposed += w * m.p_x_given_a[m.mechanism[sig]]
    return float(np.abs(p_x - decomposed).max())


# ------------------------------------------------------------------ builders

def all_signatures(graph, hops):
    sigs = set()
    for mask in range(2**graph.n):
        s_vec = _assignment(mask, graph.n)
        sigs.update(computation_tree(graph, i, hops, labels=s_vec) for i in range(graph.n))
    return sigs


def random_mechanism(graph, hops, rng):
    # sorted for a seed-stable assignment of random bits
    sigs = sorted(all_signatures(graph, hops), key=repr)
    bits = rng.integers(0, 2, size=len(sigs))
    # make sure both aggregate values are reachable
    if len(sigs) > 1 and bits.min() == bits.max():
        bits[0] = 1 - bits[0]
    return dict(zip(sigs, bits.tolist()))


def random_graph(n, rng, p=0.5):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return build_graph(n, edges)


def random_instance(rng, n_max=6, hops=None, graph_independent=True):
    """A random model with full-support ``S`` law.

    With ``graph_independent=False`` the noise probability depends on the
    node's colour, which breaks the identification formula in general.
    """
    while True:
        n = int(rng.integers(3, n_max + 1))
        k = int(rng.integers(1, 3)) if hops is None else hops
        graph = random_graph(n, rng)
        mechanism = random_mechanism(graph, k, rng)
        p_assign = rng.dirichlet(np.ones(2**n))
        f_int = np.array([[0, 1], [1, 1]]) if rng.random() < 0.5 else np.array([[0, 1], [1, 0]])
        if graph_independent:
            noise = np.full(n, rng.uniform(0.1, 0.9))
        else:
            colors = wl_colors(graph, k).colors
            if colors.max() == 0:
                continue  # a single colour cannot carry colour-dependent noise
            per_color = rng.uniform(0.05, 0.95, size=colors.max() + 1)
            noise = per_color[colors]
        try:
            return DiscreteNscm(graph, k, p_assign, mechanism, f_int, noise)
        except ValueError:
            continue  # an aggregate value with zero observational mass; redraw
