"""scikit-learn style wrapper around the hybrid sampler for 1-d Normal mixtures."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError, DomainError
from .model import LogBetaPrior, NormalLikelihood, StablePrior, log_joint
from .sampler import DirectSlice, HybridSampler, MhStable, SliceAux, SweepSettings, default_mh_lambda
from .stable_math import NGG, LogBetaParams, NormalizedStable, PitmanYor, SigmaStableParams


class PKMixture(ClusterMixin, BaseEstimator):
    """Poisson-Kingman mixture of univariate Normals fitted by the hybrid sampler.

    Parameters
    ----------
    prior : {'pitman_yor', 'normalized_stable', 'ngg', 'logbeta'}
    sigma, theta, tau : stable-class parameters (``theta`` for Pitman-Yor,
        ``tau`` for NGG).
    a, b : -logBeta parameters.
    variant : {'slice_aux', 'mh', 'direct'} or None for the prior's default.
    lam : MH tilting parameter; None picks 50 at sigma=1/2 and 0 otherwise.
    n_iter, burn_in : sweeps in total and discarded at the start.
    n_pool : size ``M`` of the ReUse parameter pool.
    sigma1_sq : shared component variance.
    mu0, sigma0_sq : base-distribution mean and variance; None uses the
        sample mean and variance of the training data.
    random_state : seed, ``Generator`` or ``RandomState``.

    Attributes
    ----------
    labels_ : cluster labels of the highest log-joint post-burn-in sample.
    n_clusters_ : number of clusters in that sample.
    cluster_means_, cluster_weights_ : its component means and size-biased weights.
    surplus_ : its surplus mass.
    k_trace_ : number of clusters after every post-burn-in sweep.
    """

    def __init__(self, prior="pitman_yor", sigma=0.5, theta=10.0, tau=1.0, a=1.0, b=2.0,
                 variant=None, lam=None, n_iter=2000, burn_in=500, n_pool=3, sigma1_sq=0.5,
                 mu0=None, sigma0_sq=None, random_state=None):
        self.prior = prior
        self.sigma = sigma
        self.theta = theta
        self.tau = tau
        self.a = a
        self.b = b
        self.variant = variant
        self.lam = lam
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.n_pool = n_pool
        self.sigma1_sq = sigma1_sq
        self.mu0 = mu0
        self.sigma0_sq = sigma0_sq
        self.random_state = random_state

    def _build(self, x):
        if not (isinstance(self.n_iter, (int, np.integer)) and self.n_iter >= 1):
            raise ValueError("n_iter must be a positive integer")
        if not (isinstance(self.burn_in, (int, np.integer)) and 0 <= self.burn_in < self.n_iter):
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
        try:
            if self.prior == "logbeta":
                prior = LogBetaPrior(LogBetaParams(self.a, self.b))
            elif self.prior in ("pitman_yor", "normalized_stable", "ngg"):
                tilt = {"pitman_yor": lambda: PitmanYor(self.theta),
                        "normalized_stable": NormalizedStable,
                        "ngg": lambda: NGG(self.tau)}[self.prior]()
                prior = StablePrior(SigmaStableParams(self.sigma), tilt)
            else:
                raise ValueError(f"unknown prior {self.prior!r}")
            base = NormalLikelihood.from_data(x, self.sigma1_sq)
            lik = NormalLikelihood(base.mu0 if self.mu0 is None else self.mu0,
                                   base.sigma0_sq if self.sigma0_sq is None else self.sigma0_sq,
                                   self.sigma1_sq)
            if self.variant is None:
                variant = None
            elif self.variant == "mh":
                if not isinstance(prior, StablePrior):
                    raise ValueError("variant 'mh' requires a sigma-stable prior")
                variant = MhStable(default_mh_lambda(prior.sigma) if self.lam is None else self.lam)
            elif self.variant in ("slice_aux", "direct"):
                variant = SliceAux() if self.variant == "slice_aux" else DirectSlice()
            else:
                raise ValueError(f"unknown variant {self.variant!r}")
            return HybridSampler(prior, lik, variant, SweepSettings(n_pool=self.n_pool))
        except (DomainError, ConfigurationError) as exc:
            raise ValueError(str(exc)) from exc

    def fit(self, X, y=None):
        x = check_array(X, ensure_2d=False, dtype=float).reshape(len(X), -1)
        if x.shape[1] != 1:
            raise ValueError(f"PKMixture models univariate data; got {x.shape[1]} features")
        x = x[:, 0]
        sampler = self._build(x)
        rs = check_random_state(self.random_state)
        rng = np.random.default_rng(rs.randint(0, 2**31 - 1))

        best, best_lj, ks = None, -math.inf, []

        def keep(state, rec):
            nonlocal best, best_lj
            if rec.iteration < self.burn_in:
                return
            ks.append(rec.K)
            if rec.log_joint > best_lj:
                best, best_lj = state.copy(), rec.log_joint

        sampler.run(x, self.n_iter, rng, burn_in=self.burn_in, callback=keep)
        self.sampler_ = sampler
        self.labels_ = best.labels.copy()
        self.n_clusters_ = best.n_clusters
        self.cluster_means_ = best.params.copy()
        self.cluster_weights_ = best.weights.copy()
        self.surplus_ = best.surplus
        self.log_joint_ = float(log_joint(best, sampler.prior, sampler.lik))
        self.k_trace_ = np.asarray(ks)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Most probable existing cluster of each point under the retained sample."""
        check_is_fitted(self, "labels_")
        x = check_array(X, ensure_2d=False, dtype=float).reshape(len(X), -1)
        if x.shape[1] != 1:
            raise ValueError(f"expected 1 feature, got {x.shape[1]}")
        d = x[:, :1] - self.cluster_means_[None, :]
        score = np.log(self.cluster_weights_)[None, :] - 0.5 * d * d / self.sigma1_sq
        return np.argmax(score, axis=1)
