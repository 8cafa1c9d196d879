"""scikit-learn style wrappers around the three equilibrium learners.

Each estimator takes a template :class:`~ctmn.model.CtmnModel` (variables,
features and acceptance kind; its parameters serve only as fallbacks or as
an optional starting point), is fitted on a list of trajectories and
exposes ``stationary_distribution_`` afterwards.

>>> from ctmn import example_4_1, sample_trajectories, InitialDistribution
>>> model = example_4_1()
>>> X = sample_trajectories(model, InitialDistribution.stationary(), 10.0, 5, seed=0)
>>> est = CTMNEstimator(template=model).fit(X)
>>> est.stationary_distribution_.shape
(16,)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import ctbn_stationary, fit_ctbn_mle, fit_mn_dwell
from .evaluation import kl_divergence
from .exceptions import StateSpaceTooLargeError
from .learn import EmConfig, em_fit, observed_loglik
from .model import stationary_exact
from .optimize import OptimizerConfig
from .stats import collect_stats
from .validation import check_model, check_trajectories


class _EquilibriumEstimator(BaseEstimator):
    def kl_from(self, p_true):
        """``KL(p_true || fitted stationary distribution)``."""
        check_is_fitted(self, "stationary_distribution_")
        return kl_divergence(p_true, self.stationary_distribution_)


class CTMNEstimator(_EquilibriumEstimator):
    """EM estimate of feature weights and proposal rates.

    Parameters
    ----------
    template : CtmnModel
        Structure to fit. With ``init="template"`` its parameters are the
        starting point; otherwise EM starts from zero weights.
    tol, max_iter : EM stopping rule (relative parameter change, iterations).
    grad_tol, max_inner_iter : stopping rule of the inner weight optimizer.
    init : {"default", "template"}
    """

    def __init__(self, template=None, tol=1e-6, max_iter=500, grad_tol=1e-8, max_inner_iter=10000,
                 init="default"):
        self.template = template
        self.tol = tol
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.max_inner_iter = max_inner_iter
        self.init = init

    def _config(self):
        return EmConfig(tol=self.tol, max_iter=self.max_iter, init=self.init,
                        optimizer=OptimizerConfig(tol=self.grad_tol, max_iter=self.max_inner_iter))

    def fit(self, X, y=None):
        template = check_model(self.template)
        X = check_trajectories(X, template)
        res = em_fit(X, template, self._config())
        self.model_ = res.model
        self.weights_ = np.asarray(res.model.weights)
        self.proposal_rates_ = res.model.rates
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.history_ = res.history
        try:
            self.stationary_distribution_ = stationary_exact(res.model)
        except StateSpaceTooLargeError:
            self.stationary_distribution_ = None
        return self

    def score(self, X, y=None):
        """Observed-data log-likelihood of ``X`` (initial states excluded)."""
        check_is_fitted(self, "model_")
        X = check_trajectories(X, self.model_)
        return observed_loglik(collect_stats(X, self.model_.graph), self.model_)


class MNDwellEstimator(_EquilibriumEstimator):
    """Log-linear fit to the time-weighted visited states (needs enumeration)."""

    def __init__(self, template=None, grad_tol=1e-8, max_iter=10000):
        self.template = template
        self.grad_tol = grad_tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        template = check_model(self.template)
        X = check_trajectories(X, template)
        weights, result = fit_mn_dwell(X, template.with_parameters(weights=np.zeros(len(template.features))),
                                       OptimizerConfig(tol=self.grad_tol, max_iter=self.max_iter))
        self.weights_ = weights
        self.model_ = template.with_parameters(weights=weights)
        self.stationary_distribution_ = result.stationary
        self.n_iter_ = result.diagnostics["iterations"]
        self.converged_ = result.diagnostics["converged"]
        return self


class CTBNEstimator(_EquilibriumEstimator):
    """Count / time conditional-rate estimate on the template's blanket graph."""

    def __init__(self, template=None):
        self.template = template

    def fit(self, X, y=None):
        template = check_model(self.template)
        X = check_trajectories(X, template)
        self.conditional_rates_ = fit_ctbn_mle(X, template.graph)
        self.stationary_distribution_ = ctbn_stationary(self.conditional_rates_)
        return self


LEARNERS = {
    "ctmn": CTMNEstimator,
    "ctbn": CTBNEstimator,
    "mn_dwell": MNDwellEstimator,
}
