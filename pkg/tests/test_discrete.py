import numpy as np
import pytest

from netfair import discrete
from netfair.discrete import (DiscreteNscm, OracleMismatch, enumerate_intervention, identification_formula,
                              observational_decomposition_check, oracle_interventional_distribution)
from netfair.graph import build_graph


def path3(noise=0.3, f_int=((0, 1), (1, 1)), seed=0):
    g = build_graph(3, [(0, 1), (1, 2)])
    rng = np.random.default_rng(seed)
    mech = discrete.random_mechanism(g, 1, rng)
    return DiscreteNscm(g, 1, rng.dirichlet(np.ones(8)), mech, np.array(f_int), np.full(3, noise))


def hand_enumeration(m, s_value):
    """Independent brute force: loop over nodes, then over the node's own noise."""
    out = np.zeros(2)
    forced = (s_value,) * m.n
    for i in range(m.n):
        a = m.aggregate(i, forced)
        for u, pu in ((0, 1 - m.noise_p1[i]), (1, m.noise_p1[i])):
            out[m.f_int[a, u]] += pu / m.n
    return out


def test_three_node_path_routes_agree():
    m = path3()
    for s in (0, 1):
        direct = oracle_interventional_distribution(m, s)
        np.testing.assert_allclose(direct, hand_enumeration(m, s), atol=1e-12)
        np.testing.assert_allclose(direct, identification_formula(m, s), atol=1e-12)
        assert direct.sum() == pytest.approx(1.0)


def test_random_instances_satisfy_both_identities():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m = discrete.random_instance(rng)
        for s in (0, 1):
            oracle_interventional_distribution(m, s)
        assert observational_decomposition_check(m) <= 1e-9


def test_feature_law_free_of_aggregate_gives_marginal():
    m = path3(f_int=((0, 1), (0, 1)))  # x = u whatever a is
    p_x = discrete.observational_distribution(m)
    for s in (0, 1):
        np.testing.assert_allclose(oracle_interventional_distribution(m, s), p_x, atol=1e-12)


def test_colour_dependent_noise_is_detected():
    g = build_graph(3, [(0, 1), (1, 2)])  # middle node has its own colour
    rng = np.random.default_rng(1)
    mech = {sig: 0 for sig in discrete.all_signatures(g, 1)}
    for sig in mech:
        mech[sig] = int(sig[0] == 1)  # aggregate copies the node's own label
    m = DiscreteNscm(g, 1, rng.dirichlet(np.ones(8)), mech, np.array([[0, 1], [1, 1]]),
                     np.array([0.1, 0.9, 0.1]))
    gap = np.abs(enumerate_intervention(m, 0) - identification_formula(m, 0)).max()
    assert gap > 1e-3
    with pytest.raises(OracleMismatch):
        oracle_interventional_distribution(m, 0)


def test_tampered_conditional_breaks_decomposition():
    m = path3()
    tampered = m.p_x_given_a.copy()
    tampered[0] += [0.1, -0.1]
    bad = DiscreteNscm(m.graph, m.hops, m.p_assign, m.mechanism, m.f_int, m.noise_p1, tampered)
    assert observational_decomposition_check(bad) > 1e-3


def test_deterministic_model_residual_vanishes():
    m = path3(noise=0.0)
    assert observational_decomposition_check(m) <= 1e-15


def test_validation():
    m = path3()
    with pytest.raises(ValueError, match="p_assign"):
        DiscreteNscm(m.graph, 1, np.ones(8), m.mechanism, m.f_int, m.noise_p1)
    with pytest.raises(ValueError, match="not total"):
        DiscreteNscm(m.graph, 1, m.p_assign, {}, m.f_int, m.noise_p1)
    with pytest.raises(ValueError, match="rows"):
        DiscreteNscm(m.graph, 1, m.p_assign, m.mechanism, m.f_int, m.noise_p1, np.ones((2, 2)))
