import numpy as np
import pytest
from helpers import RING_THETA
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ctmn.estimators import LEARNERS, CTBNEstimator, CTMNEstimator, MNDwellEstimator
from ctmn.evaluation import expected_transition_time_unit
from ctmn.exceptions import ModelValidationError, TrajectoryError
from ctmn.model import example_4_1, stationary_exact
from ctmn.simulate import InitialDistribution, Trajectory, sample_trajectories


@pytest.fixture(scope="module")
def setup():
    truth = example_4_1(RING_THETA)
    unit = expected_transition_time_unit(truth)
    X = sample_trajectories(truth, InitialDistribution.stationary(), 25 * unit, 20, seed=13)
    return truth, X


@pytest.mark.parametrize("cls", [CTMNEstimator, MNDwellEstimator, CTBNEstimator])
class TestCommon:
    def test_params_roundtrip(self, cls, setup):
        truth, _ = setup
        est = cls(template=truth)
        params = est.get_params()
        assert params["template"] is truth
        c = clone(est)
        assert c.get_params().keys() == params.keys()

    def test_fit_returns_self(self, cls, setup):
        truth, X = setup
        est = cls(template=truth)
        assert est.fit(X) is est
        p = est.stationary_distribution_
        assert p.shape == (16,) and p.sum() == pytest.approx(1.0)
        assert 0 <= est.kl_from(stationary_exact(truth)) < 0.1

    def test_not_fitted(self, cls, setup):
        with pytest.raises(NotFittedError):
            cls(template=setup[0]).kl_from(np.full(16, 1 / 16))

    def test_bad_input(self, cls, setup):
        truth, _ = setup
        with pytest.raises(TrajectoryError):
            cls(template=truth).fit([Trajectory([(0, 0, 0, 3)], [], 1.0)])
        with pytest.raises(TypeError):
            cls(template=None).fit([Trajectory([(0, 0, 0, 0)], [], 1.0)])

    def test_invalid_template(self, cls, setup):
        truth, X = setup
        bad = truth.with_parameters(rates=[np.array([[0, 1.0], [3.0, 0]])] * 4)
        with pytest.raises(ModelValidationError):
            cls(template=bad).fit(X)


class TestCtmnEstimator:
    @pytest.mark.filterwarnings("ignore::ctmn.exceptions.ConvergenceWarning")
    def test_attributes_and_score(self, setup):
        truth, X = setup
        est = CTMNEstimator(template=truth, tol=1e-7).fit(X)
        assert est.converged_ and est.n_iter_ == len(est.history_) - 1
        assert len(est.proposal_rates_) == 4 and est.weights_.shape == (8,)
        assert est.score(X) >= CTMNEstimator(template=truth, max_iter=1).fit(X).score(X) - 1e-9

    def test_set_params(self, setup):
        est = CTMNEstimator(template=setup[0]).set_params(tol=1e-3, init="template")
        assert est.tol == 1e-3 and est.init == "template"


def test_learner_registry():
    assert set(LEARNERS) == {"ctmn", "ctbn", "mn_dwell"}
