import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalwalk.scm import (
    DiscreteScm,
    conditional_L_given_G,
    confounded_scm,
    format_scm,
    frontdoor_estimate,
    interventional,
    load_scm,
    observational,
    parse_scm,
    random_scm,
    save_scm,
    verify,
)


def brute_joint(scm):
    """Full joint over (U, G, R, L) by nested enumeration."""
    nu, ng, nr, nl = scm.cardinalities
    J = np.zeros((nu, ng, nr, nl))
    for u, g, r, l in itertools.product(range(nu), range(ng), range(nr), range(nl)):
        J[u, g, r, l] = scm.P_U[u] * scm.P_G_given_U[u, g] * scm.P_R_given_G[g, r] * scm.P_L_given_RU[r, u, l]
    return J


def brute_do(scm, g):
    """Mutilated model: G clamped to g, U keeps its prior."""
    nu, _, nr, nl = scm.cardinalities
    out = np.zeros(nl)
    for u, r in itertools.product(range(nu), range(nr)):
        out += scm.P_U[u] * scm.P_R_given_G[g, r] * scm.P_L_given_RU[r, u]
    return out


def one_hot_rows(idx, cols):
    return np.eye(cols)[idx]


def inert_scm(rng, cards=(3, 3, 4, 2)):
    s = random_scm(rng, cards)
    nu = cards[0]
    s.P_L_given_RU = np.repeat(s.P_L_given_RU[:, :1, :], nu, axis=1)
    return s


def test_observational_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = random_scm(rng)
        np.testing.assert_allclose(observational(s), brute_joint(s).sum(axis=0), atol=1e-15)
        assert abs(observational(s).sum() - 1) < 1e-12


def test_deterministic_chain_joint_is_one_hot():
    s = DiscreteScm(
        P_U=[1.0, 0.0],
        P_G_given_U=one_hot_rows([1, 0], 2),
        P_R_given_G=one_hot_rows([0, 1], 2),
        P_L_given_RU=one_hot_rows([[1, 1], [0, 0]], 2),
    )
    J = observational(s)
    assert J.sum() == 1.0 and np.count_nonzero(J) == 1 and J[1, 1, 0] == 1.0


def test_inert_confounder_all_estimates_coincide():
    s = inert_scm(np.random.default_rng(1))
    for g in range(3):
        P = s.P_R_given_G[g] @ s.P_L_given_RU[:, 0, :]
        np.testing.assert_allclose(conditional_L_given_G(s, g), P, atol=1e-12)
        np.testing.assert_allclose(interventional(s, g), P, atol=1e-12)
        np.testing.assert_allclose(frontdoor_estimate(s, g), P, atol=1e-12)


def test_interventional_matches_mutilated_model():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = random_scm(rng)
        for g in range(s.cardinalities[1]):
            np.testing.assert_allclose(interventional(s, g), brute_do(s, g), atol=1e-15)
            assert abs(interventional(s, g).sum() - 1) < 1e-12


def test_confounded_copy_makes_do_flat_but_conditional_vary():
    s = confounded_scm(0.9)
    do = [interventional(s, g) for g in range(2)]
    cond = [conditional_L_given_G(s, g) for g in range(2)]
    np.testing.assert_allclose(do[0], do[1], atol=1e-15)
    assert np.abs(cond[0] - cond[1]).max() > 0.5
    assert max(np.abs(c - d).max() for c, d in zip(cond, do)) > 0.1


def test_deterministic_mediator_and_label():
    s = DiscreteScm(
        P_U=[0.3, 0.7],
        P_G_given_U=[[0.6, 0.4], [0.1, 0.9]],
        P_R_given_G=one_hot_rows([1, 0], 2),
        P_L_given_RU=one_hot_rows([[0, 0], [1, 1]], 2),
    )
    np.testing.assert_array_equal(frontdoor_estimate(s, 0), [0.0, 1.0])
    np.testing.assert_array_equal(frontdoor_estimate(s, 1), [1.0, 0.0])


def test_frontdoor_identity_over_random_scms():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        s = random_scm(rng)
        for g in range(s.cardinalities[1]):
            worst = max(worst, np.abs(frontdoor_estimate(s, g) - brute_do(s, g)).max())
    assert worst < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.tuples(*[st.integers(2, 8)] * 4), st.integers(0, 2**32 - 1))
def test_frontdoor_identity_property(cards, seed):
    s = random_scm(np.random.default_rng(seed), cards)
    for g in range(cards[1]):
        assert np.abs(frontdoor_estimate(s, g) - interventional(s, g)).max() < 1e-12


def test_verify_report():
    rep = verify(200, seed=0)
    assert rep["max_frontdoor_deviation"] < 1e-12 and rep["confounded_gap"] > 0.1


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(P_U=[0.5, 0.6]),
        dict(P_U=[1.0]),
        dict(P_U=[-0.5, 1.5]),
        dict(P_G_given_U=[[0.5, 0.5, 0.0]]),
    ],
)
def test_invalid_tables(kwargs):
    base = dict(
        P_U=[0.5, 0.5],
        P_G_given_U=np.full((2, 2), 0.5),
        P_R_given_G=np.full((2, 2), 0.5),
        P_L_given_RU=np.full((2, 2, 2), 0.5),
    )
    base.update(kwargs)
    with pytest.raises(ValueError):
        DiscreteScm(**base)


def test_cardinality_cap():
    with pytest.raises(ValueError):
        random_scm(np.random.default_rng(0), (9, 2, 2, 2))


def test_text_round_trip(tmp_path):
    s = random_scm(np.random.default_rng(4), (2, 3, 4, 5))
    path = tmp_path / "m.scm"
    save_scm(s, path)
    t = load_scm(path)
    for name in ("P_U", "P_G_given_U", "P_R_given_G", "P_L_given_RU"):
        np.testing.assert_array_equal(getattr(s, name), getattr(t, name))


def test_parse_comments_and_errors():
    text = format_scm(confounded_scm()).replace("table P_U", "# prior\ntable P_U  # over U")
    assert parse_scm(text).cardinalities == (2, 2, 2, 2)
    with pytest.raises(ValueError, match="scm v1"):
        parse_scm("card U 2")
    with pytest.raises(ValueError, match="missing"):
        parse_scm("scm v1\ncard U 2\n")
    with pytest.raises(ValueError):
        parse_scm(format_scm(confounded_scm()).replace("card R 2", "card R 3"))
