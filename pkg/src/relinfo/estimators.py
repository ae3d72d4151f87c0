"""Estimator-style front ends for the two built-in models.

Thin wrappers with the fit/predict, get_params/set_params conventions:
constructor arguments are stored verbatim and all derived state lands on
trailing-underscore attributes during fit.  The measure functions and
scenario helpers stay importable on their own; these classes just bundle
chain running, merging, and null-draw fallback behind one object.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bernstein import (
    BernsteinModel,
    BernsteinPrior,
    RegressionData,
    _predictions,
    monotone_odds,
    ri_design,
)
from .mcmc import ChainConfig, merge_drawsets, null_draws_with_fallback, run_chains
from .sir import (
    SirData,
    SirModel,
    SirPriors,
    covariate_vector,
    posterior_null_probability,
    ri_scenario_infection_times,
    ri_scenario_new_households,
)


class _ChainMixin:
    def _chain_config(self):
        return ChainConfig(
            n_iterations=self.n_iterations,
            burn_in=self.burn_in,
            thinning=self.thinning,
            seed=self.seed,
        )

    def _check_fitted(self):
        if not hasattr(self, "draws_"):
            raise NotFittedError(
                f"{type(self).__name__} is not fitted yet; call fit first"
            )

    def _null_draws(self, n_null_min, n_null_max):
        nulls = null_draws_with_fallback(
            self.model_, self.data_, self.draws_, n_min=n_null_min
        )
        return nulls.subsample(n_null_max)


class SirPosterior(_ChainMixin, BaseEstimator):
    """Posterior sampler for the household epidemic model.

    ``fit`` accepts a SirData, a list of household records, or a path to a
    household JSON file.  Afterwards ``draws_`` holds the merged chains,
    ``drawsets_`` the per-chain results, and the ``ri_*`` methods compute
    the relative-information comparison for the two collection scenarios.
    """

    def __init__(
        self,
        beta0_rate=1.0,
        gamma0_rate=1.0,
        beta1_mean=0.0,
        beta1_sd=1.0,
        is_tol=0.15,
        is_initial_samples=512,
        is_max_samples=100000,
        n_iterations=12000,
        burn_in=3000,
        thinning=6,
        seed=0,
        n_chains=1,
    ):
        self.beta0_rate = beta0_rate
        self.gamma0_rate = gamma0_rate
        self.beta1_mean = beta1_mean
        self.beta1_sd = beta1_sd
        self.is_tol = is_tol
        self.is_initial_samples = is_initial_samples
        self.is_max_samples = is_max_samples
        self.n_iterations = n_iterations
        self.burn_in = burn_in
        self.thinning = thinning
        self.seed = seed
        self.n_chains = n_chains

    def fit(self, X, y=None):
        if isinstance(X, SirData):
            data = X
        elif isinstance(X, (str, bytes)) or hasattr(X, "read_text"):
            data = SirData.from_json(X)
        else:
            data = SirData(list(X))
        model = SirModel(
            priors=SirPriors(
                beta0_rate=self.beta0_rate,
                gamma0_rate=self.gamma0_rate,
                beta1_mean=self.beta1_mean,
                beta1_sd=self.beta1_sd,
            ),
            is_tol=self.is_tol,
            is_initial=self.is_initial_samples,
            is_max=self.is_max_samples,
        )
        drawsets = run_chains(model, data, self._chain_config(), self.n_chains)
        self.model_ = model
        self.data_ = data
        self.drawsets_ = drawsets
        self.draws_ = merge_drawsets(drawsets)
        return self

    def posterior_null_probability(self):
        self._check_fitted()
        return posterior_null_probability(self.draws_)

    def ri_infection_times(self, n_null_min=50, n_null_max=250, **ri_kwargs):
        self._check_fitted()
        nulls = self._null_draws(n_null_min, n_null_max)
        return ri_scenario_infection_times(self.draws_, nulls, self.data_, **ri_kwargs)

    def ri_new_households(
        self,
        n_new,
        template_z=None,
        seed=None,
        n_is_samples=512,
        n_null_min=50,
        n_null_max=250,
        **ri_kwargs,
    ):
        self._check_fitted()
        if template_z is None:
            if not self.data_.households:
                raise ValueError("template_z is required when the fit had no households")
            template_z = covariate_vector(self.data_.households[0].size, "balanced")
        nulls = self._null_draws(n_null_min, n_null_max)
        return ri_scenario_new_households(
            self.draws_,
            nulls,
            n_new=n_new,
            template_z=template_z,
            sim_seed=self.seed if seed is None else seed,
            n_is_samples=n_is_samples,
            **ri_kwargs,
        )


class BernsteinMonotoneRegression(_ChainMixin, BaseEstimator):
    """Posterior sampler for the random-polynomial regression model.

    ``fit(X, y)`` takes design points in [0, 1] and responses (or a single
    RegressionData as X).  ``predict`` returns the posterior mean regression
    function at new points; ``monotone_odds`` summarizes the hypothesis
    test, and ``ri_design`` scores candidate extra design points.
    """

    def __init__(
        self,
        prior_mean=5.0,
        n_max=20,
        tau1=-2.0,
        tau2=2.0,
        sigma=0.4,
        sigma_prior_rate=None,
        n_iterations=20000,
        burn_in=5000,
        thinning=10,
        seed=0,
        n_chains=1,
    ):
        self.prior_mean = prior_mean
        self.n_max = n_max
        self.tau1 = tau1
        self.tau2 = tau2
        self.sigma = sigma
        self.sigma_prior_rate = sigma_prior_rate
        self.n_iterations = n_iterations
        self.burn_in = burn_in
        self.thinning = thinning
        self.seed = seed
        self.n_chains = n_chains

    def fit(self, X, y=None):
        if isinstance(X, RegressionData):
            data = X
        elif X is None:
            data = None  # prior-only chain
        else:
            data = RegressionData(np.asarray(X, dtype=float).ravel(), y)
        model = BernsteinModel(
            prior=BernsteinPrior.poisson(
                self.prior_mean, n_max=self.n_max, tau1=self.tau1, tau2=self.tau2
            ),
            sigma=self.sigma,
            sigma_prior_rate=self.sigma_prior_rate,
        )
        drawsets = run_chains(model, data, self._chain_config(), self.n_chains)
        self.model_ = model
        self.data_ = data
        self.drawsets_ = drawsets
        self.draws_ = merge_drawsets(drawsets)
        return self

    def predict(self, X):
        self._check_fitted()
        x = np.asarray(X, dtype=float).ravel()
        preds = _predictions([d.theta for d in self.draws_.draws], x)
        return preds.mean(axis=0)

    def monotone_odds(self):
        self._check_fitted()
        return monotone_odds(self.draws_, self.model_.prior)

    def ri_design(
        self, new_points, seed=None, n_null_min=50, n_null_max=250, **ri_kwargs
    ):
        self._check_fitted()
        nulls = self._null_draws(n_null_min, n_null_max)
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed if seed is None else seed, 0xD51])
        )
        return ri_design(self.draws_, nulls, new_points, self.sigma, rng, **ri_kwargs)
