import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amrnet.ensemble import SoftVotingEnsemble, classify, ensemble_proba
from amrnet.errors import ConfigurationError, InputError

probs = arrays(np.float64, 7, elements=st.floats(0, 1))


def test_plain_mean():
    np.testing.assert_array_equal(ensemble_proba([[0.2, 0.9], [0.6, 0.3]]), [0.4, 0.6])


@given(probs, probs)
@settings(max_examples=200, deadline=None)
def test_mean_lies_between_members(a, b):
    p = ensemble_proba([a, b])
    assert np.all(p >= np.minimum(a, b)) and np.all(p <= np.maximum(a, b))


@given(probs, probs, st.floats(0.01, 100), st.floats(0.01, 100))
@settings(max_examples=200, deadline=None)
def test_weighted_mean_lies_between_members(a, b, wa, wb):
    p = ensemble_proba([a, b], [wa, wb])
    assert np.all(p >= np.minimum(a, b)) and np.all(p <= np.maximum(a, b))


def test_weights_are_normalized():
    np.testing.assert_allclose(ensemble_proba([[0.0], [1.0]], [1, 3]), [0.75])
    np.testing.assert_allclose(ensemble_proba([[0.0], [1.0]], [10, 30]), [0.75])


def test_identical_members_are_a_fixed_point():
    p = np.array([0.1, 0.5, 0.77])
    np.testing.assert_array_equal(ensemble_proba([p, p, p]), p)


@pytest.mark.parametrize("bad", [[[0.5, 0.5], [0.5]], [[1.2], [0.5]], [[np.nan], [0.5]], []])
def test_invalid_members(bad):
    with pytest.raises(InputError):
        ensemble_proba(bad)


@pytest.mark.parametrize("w", [[1.0], [1.0, 0.0], [1.0, -2.0], [1.0, np.inf]])
def test_invalid_weights(w):
    with pytest.raises(InputError):
        ensemble_proba([[0.5], [0.5]], w)


def test_threshold_is_inclusive():
    np.testing.assert_array_equal(classify([0.49999, 0.5, 0.8]), [0, 1, 1])
    assert classify(0.5) == 1 and isinstance(classify(0.5), int)
    np.testing.assert_array_equal(classify([0.3, 0.7], threshold=0.3), [1, 1])


class _Const:
    def __init__(self, p):
        self.p = np.asarray(p, dtype=float)

    def predict_proba(self, X):
        return self.p[: len(X)]


def test_soft_voting_model():
    ens = SoftVotingEnsemble([_Const([0.2, 0.9, 0.5]), _Const([0.7, 0.2, 0.5])])
    X = np.zeros((3, 1))
    np.testing.assert_allclose(ens.predict_proba(X), [0.45, 0.55, 0.5])
    np.testing.assert_array_equal(ens.predict(X), [0, 1, 1])


def test_soft_voting_needs_two_members():
    with pytest.raises(ConfigurationError):
        SoftVotingEnsemble([_Const([0.5])])
    with pytest.raises(ConfigurationError):
        SoftVotingEnsemble([_Const([0.5]), _Const([0.5])], weights=[1.0])
    with pytest.raises(ConfigurationError):
        SoftVotingEnsemble([_Const([0.5]), _Const([0.5])], threshold=1.5)
