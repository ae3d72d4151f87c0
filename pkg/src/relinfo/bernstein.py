"""Bayesian monotonicity testing with random Bernstein polynomials.

A regression function on [0, 1] is modelled as a Bernstein polynomial whose
order and coefficient vector are random: a pmf over the order and iid uniform
coefficients on a box.  Monotonicity is, by default, the event that the
coefficient vector is sorted (which implies a nondecreasing function; the
converse only holds approximately and a derivative-grid mode is available).
A reversible-jump kernel samples the posterior over (order, coefficients),
and :func:`ri_design` scores how much information responses at candidate new
design points would carry about that hypothesis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .exceptions import InsufficientNullDrawsError
from .measures import ConditionalRatioSamples, ObservedLodSamples, ri_compute
from .mcmc import KernelBlock, ModelContract, RandomWalkBlock, reflect_interval
from .validation import as_float_vector, check_positive, check_unit_interval

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_DERIVATIVE_GRID = np.linspace(0.0, 1.0, 1001)


# ---------------------------------------------------------------------------
# basis and polynomial evaluation
# ---------------------------------------------------------------------------


def basis_matrix(n, t):
    """All order-n basis functions at the points t, as a (len(t), n+1) array.

    Uses log-space binomial coefficients, so any order up to a few hundred
    evaluates without overflow; the t = 0 and t = 1 columns are set directly
    because the log expression is indeterminate there.
    """
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    check_unit_interval(t, "t")
    j = np.arange(n + 1)
    logc = np.array(
        [math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) for k in j]
    )
    out = np.zeros((t.size, n + 1))
    interior = (t > 0.0) & (t < 1.0)
    ti = t[interior, None]
    out[interior] = np.exp(logc + j * np.log(ti) + (n - j) * np.log1p(-ti))
    out[t == 0.0, 0] = 1.0
    out[t == 1.0, n] = 1.0
    return out


def bernstein_basis(i, n, t):
    """The single basis function C(n,i) t^i (1-t)^(n-i); t scalar or vector."""
    if not 0 <= i <= n:
        raise ValueError(f"basis index {i} out of range for order {n}")
    column = basis_matrix(n, t)[:, i]
    return float(column[0]) if np.ndim(t) == 0 else column


@dataclass(frozen=True)
class BernsteinState:
    """Polynomial order, coefficient vector (length n + 1), and noise scale."""

    n: int
    b: tuple
    sigma: float = 0.4

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"order must be >= 1, got {self.n}")
        b = tuple(float(v) for v in self.b)
        if len(b) != self.n + 1:
            raise ValueError(f"order {self.n} needs {self.n + 1} coefficients, got {len(b)}")
        if not all(math.isfinite(v) for v in b):
            raise ValueError("coefficients must be finite")
        check_positive(self.sigma, "sigma")
        object.__setattr__(self, "b", b)


def eval_poly(state, t):
    """F(t) = sum_i b_i phi_{i,n}(t); scalar in, scalar out."""
    values = basis_matrix(state.n, t) @ np.asarray(state.b)
    return float(values[0]) if np.ndim(t) == 0 else values


def degree_elevate(b):
    """Coefficients of the same polynomial written one order higher."""
    b = as_float_vector(b, "b", min_length=1)
    n = b.size - 1
    out = np.empty(n + 2)
    out[0] = b[0]
    out[-1] = b[-1]
    if n:
        w = np.arange(1, n + 1) / (n + 1.0)
        out[1:-1] = w * b[:-1] + (1.0 - w) * b[1:]
    return out


def is_monotone_event(state, mode="sorted-coefficients"):
    """Membership in the monotone hypothesis set.

    ``sorted-coefficients`` (the default, and the definition behind the
    analytic prior mass) asks for a nondecreasing coefficient vector;
    ``derivative-grid`` checks F' >= -1e-12 on a 1001-point grid.  Sorted
    coefficients imply the grid criterion but not conversely.
    """
    diffs = np.diff(np.asarray(state.b))
    if mode == "sorted-coefficients":
        return bool(np.all(diffs >= 0.0))
    if mode == "derivative-grid":
        deriv = state.n * (basis_matrix(state.n - 1, _DERIVATIVE_GRID) @ diffs)
        return bool(np.all(deriv >= -1e-12))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------


class BernsteinPrior:
    """pmf over the order times iid Uniform(tau1, tau2) coefficients."""

    def __init__(self, order_weights, tau1=-2.0, tau2=2.0):
        weights = as_float_vector(order_weights, "order_weights", min_length=1)
        if np.any(weights < 0.0) or weights.sum() <= 0.0:
            raise ValueError("order weights must be nonnegative with positive sum")
        self.order_pmf = weights / weights.sum()
        if not tau1 < tau2:
            raise ValueError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
        self.tau1 = float(tau1)
        self.tau2 = float(tau2)

    @classmethod
    def poisson(cls, mean=5.0, n_max=20, tau1=-2.0, tau2=2.0):
        """Poisson(mean) on the order, truncated to {1..n_max} and renormalized."""
        check_positive(mean, "mean")
        if n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {n_max}")
        orders = np.arange(1, n_max + 1)
        log_w = orders * math.log(mean) - mean - np.array(
            [math.lgamma(n + 1) for n in orders]
        )
        return cls(np.exp(log_w - log_w.max()), tau1=tau1, tau2=tau2)

    @property
    def n_max(self):
        return self.order_pmf.size

    def pmf(self, n):
        return float(self.order_pmf[n - 1]) if 1 <= n <= self.n_max else 0.0

    def log_pmf(self, n):
        p = self.pmf(n)
        return math.log(p) if p > 0.0 else -math.inf

    def log_density(self, state):
        """log pi(n, b); -inf off the order support or outside the box."""
        lp = self.log_pmf(state.n)
        if lp == -math.inf:
            return -math.inf
        b = np.asarray(state.b)
        if np.any(b < self.tau1) or np.any(b > self.tau2):
            return -math.inf
        return lp - (state.n + 1) * math.log(self.tau2 - self.tau1)

    def sample(self, rng, monotone=False):
        """Draw (order, coefficients); sorted coefficients when monotone."""
        n = int(rng.choice(np.arange(1, self.n_max + 1), p=self.order_pmf))
        b = rng.uniform(self.tau1, self.tau2, size=n + 1)
        if monotone:
            b = np.sort(b)
        return n, tuple(b)


def prior_prob_monotone(prior):
    """Exact prior mass of the sorted-coefficient event.

    iid continuous coefficients are exchangeable and almost surely distinct,
    so each ordering of the n + 1 values is equally likely.
    """
    return float(
        sum(prior.pmf(n) / math.factorial(n + 1) for n in range(1, prior.n_max + 1))
    )


# ---------------------------------------------------------------------------
# data and likelihood
# ---------------------------------------------------------------------------


class RegressionData:
    """Fixed-design sample (x_k, y_k) with x in [0, 1]; never empty.

    Caches the basis matrix per order, since the sampler revisits the same
    few orders thousands of times.  ``sigma_known`` optionally records the
    noise scale the study treats as fixed.
    """

    def __init__(self, x, y, sigma_known=None):
        self.x = as_float_vector(x, "x", min_length=1)
        check_unit_interval(self.x, "x")
        self.y = as_float_vector(y, "y")
        if self.y.size != self.x.size:
            raise ValueError(f"{self.x.size} x values but {self.y.size} y values")
        self.sigma_known = None if sigma_known is None else check_positive(sigma_known, "sigma_known")
        self._basis = {}

    @property
    def n_obs(self):
        return self.x.size

    def basis(self, n):
        cached = self._basis.get(n)
        if cached is None:
            cached = self._basis[n] = basis_matrix(n, self.x)
        return cached

    @classmethod
    def from_csv(cls, path, sigma_known=None):
        xs, ys = [], []
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if header is None or [c.strip().lower() for c in header] != ["x", "y"]:
                raise ValueError(f"{path}: expected header 'x,y', got {header}")
            for lineno, row in enumerate(rows, start=2):
                if not row:
                    continue
                try:
                    x, y = float(row[0]), float(row[1])
                except (IndexError, ValueError):
                    raise ValueError(f"{path}: line {lineno}: expected two numbers, got {row}") from None
                if not 0.0 <= x <= 1.0:
                    raise ValueError(f"{path}: line {lineno}: x = {x} outside [0, 1]")
                xs.append(x)
                ys.append(y)
        if not xs:
            raise ValueError(f"{path}: no data rows")
        return cls(xs, ys, sigma_known=sigma_known)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for x, y in zip(self.x, self.y):
                writer.writerow([repr(float(x)), repr(float(y))])


def reg_loglik(state, data):
    """Gaussian log likelihood of the data under F_state; 0 for no data."""
    if data is None:
        return 0.0
    resid = data.y - data.basis(state.n) @ np.asarray(state.b)
    return float(
        -(resid @ resid) / (2.0 * state.sigma**2)
        - data.n_obs * (math.log(state.sigma) + _LOG_SQRT_2PI)
    )


# ---------------------------------------------------------------------------
# reversible-jump kernel
# ---------------------------------------------------------------------------


def rj_move(state, prior, data, rng, scale=0.5, monotone=False):
    """One transition of the variable-order sampler.

    Returns (state, accepted, scale_used).  Half the time a random-walk on
    one uniformly chosen coefficient, reflected into the box (this is the
    move the adaptive scale belongs to); otherwise a jump to order n ± 1
    with fresh coefficients from the prior, whose density cancels against
    the proposal so the acceptance ratio is p(n')L(b') / (p(n)L(b)).

    With ``monotone`` the target is the prior conditioned on sortedness:
    within-model proposals that break the ordering are rejected outright,
    jumps draw sorted coefficients, and the acceptance ratio picks up the
    (n+1)!/(n'+1)! proposal-density correction.
    """
    if rng.random() < 0.5:
        idx = int(rng.integers(state.n + 1))
        b = list(state.b)
        b[idx] = reflect_interval(
            b[idx] + scale * rng.standard_normal(), prior.tau1, prior.tau2
        )
        if monotone and not (
            (idx == 0 or b[idx - 1] <= b[idx])
            and (idx == state.n or b[idx] <= b[idx + 1])
        ):
            return state, False, True
        candidate = replace(state, b=tuple(b))
        log_ratio = reg_loglik(candidate, data) - reg_loglik(state, data)
        if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
            return candidate, True, True
        return state, False, True

    n_new = state.n + (1 if rng.random() < 0.5 else -1)
    if not 1 <= n_new <= prior.n_max:
        return state, False, None
    fresh = rng.uniform(prior.tau1, prior.tau2, size=n_new + 1)
    correction = 0.0
    if monotone:
        fresh = np.sort(fresh)
        correction = math.lgamma(state.n + 2) - math.lgamma(n_new + 2)
    candidate = replace(state, n=n_new, b=tuple(fresh))
    log_ratio = (
        prior.log_pmf(n_new)
        - prior.log_pmf(state.n)
        + reg_loglik(candidate, data)
        - reg_loglik(state, data)
        + correction
    )
    if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
        return candidate, True, None
    return state, False, None


class BernsteinModel(ModelContract):
    """Posterior over (order, coefficients[, sigma]) given regression data.

    There is no missing data in this model, so the observed-data log
    likelihood is exact (se 0).  ``y_ob`` is a RegressionData, or None for a
    prior-only chain.  The noise scale is fixed at ``sigma`` unless
    ``sigma_prior_rate`` is given, which puts an Exponential(rate) prior on
    it and adds a log-scale random-walk block.  The null hypothesis is the
    sorted-coefficient event, and the constrained variant samples the
    posterior conditioned on it.
    """

    kind = "bernstein"

    def __init__(self, prior=None, sigma=0.4, sigma_prior_rate=None, monotone=False):
        self.prior = prior if prior is not None else BernsteinPrior.poisson()
        self.sigma = check_positive(sigma, "sigma")
        self.sigma_prior_rate = (
            None if sigma_prior_rate is None else check_positive(sigma_prior_rate, "sigma_prior_rate")
        )
        self.monotone = bool(monotone)

    # log densities are unnormalized in the monotone variant (the
    # conditioning constant is global, so every ratio is unaffected)
    def log_prior(self, theta):
        lp = self.prior.log_density(theta)
        if self.monotone and not is_monotone_event(theta):
            return -math.inf
        if self.sigma_prior_rate is not None:
            lp += math.log(self.sigma_prior_rate) - self.sigma_prior_rate * theta.sigma
        return lp

    def complete_loglik(self, theta, y_ob, y_mis):
        return reg_loglik(theta, y_ob)

    def observed_loglik(self, theta, y_ob, rng):
        return reg_loglik(theta, y_ob), 0.0

    def sample_missing_update(self, theta, y_ob, y_mis, rng):
        return y_mis

    def missing_conditional_logdensity(self, theta, y_ob, y_mis, rng):
        return 0.0, 0.0

    def null_predicate(self, theta):
        return is_monotone_event(theta)

    def parameter_blocks(self):
        blocks = [KernelBlock("rj", self._rj_update, initial_scale=0.5)]
        if self.sigma_prior_rate is not None:
            blocks.append(
                RandomWalkBlock(
                    "sigma",
                    getter=lambda th: th.sigma,
                    setter=lambda th, v: replace(th, sigma=v),
                    transform="log",
                    initial_scale=0.4,
                )
            )
        return blocks

    def _rj_update(self, theta, y_ob, y_mis, scale, rng):
        return rj_move(theta, self.prior, y_ob, rng, scale=scale, monotone=self.monotone)

    def initial_state(self, y_ob, rng):
        n, b = self.prior.sample(rng, monotone=self.monotone)
        sigma = self.sigma
        if self.sigma_prior_rate is not None:
            sigma = float(rng.exponential(1.0 / self.sigma_prior_rate))
        return BernsteinState(n, b, sigma), None

    def null_constrained_variant(self):
        return BernsteinModel(
            prior=self.prior,
            sigma=self.sigma,
            sigma_prior_rate=self.sigma_prior_rate,
            monotone=True,
        )

    # --- persistence -------------------------------------------------------

    def param_names(self, y_ob):
        return ["n", "sigma"] + [f"b{j}" for j in range(self.prior.n_max + 1)]

    def param_values(self, theta, y_ob):
        padding = [None] * (self.prior.n_max - theta.n)
        return [float(theta.n), theta.sigma, *theta.b, *padding]

    def theta_from_values(self, values, y_ob):
        n = int(round(values[0]))
        return BernsteinState(n, tuple(values[2 : n + 3]), float(values[1]))

    def scalar_summaries(self, theta, y_ob):
        return {
            "n": float(theta.n),
            "sigma": theta.sigma,
            "f_half": eval_poly(theta, 0.5),
        }


# ---------------------------------------------------------------------------
# hypothesis summaries and design comparison
# ---------------------------------------------------------------------------


class MonotoneOdds(NamedTuple):
    posterior_prob: object  # float, or (low, high) when no draw hit the event
    prior_prob: float
    ratio: object


def monotone_odds(draws, prior):
    """Posterior vs prior mass of the sorted-coefficient event.

    When no retained draw lands in the event, the posterior probability and
    the ratio are reported as rule-of-three intervals (0, 3/n) instead of a
    hard zero.
    """
    if not len(draws.draws):
        raise ValueError("draws is empty")
    flags = [is_monotone_event(d.theta) for d in draws.draws]
    hits, total = int(np.sum(flags)), len(flags)
    prior_prob = prior_prob_monotone(prior)
    if hits == 0:
        upper = 3.0 / total
        return MonotoneOdds((0.0, upper), prior_prob, (0.0, upper / prior_prob))
    posterior = hits / total
    return MonotoneOdds(posterior, prior_prob, posterior / prior_prob)


def design_points(name, k=9):
    """The four candidate designs for extending a (k+1)-point uniform grid.

    replicate_k repeats the existing grid; partition_k places points at the
    interior breakpoints of a finer split of each half; duplicate_2k lists
    every grid point twice; partition_2k refines each half further still.
    """
    if name == "replicate_k":
        return np.linspace(0.0, 1.0, k + 1)
    if name == "duplicate_2k":
        return np.repeat(np.linspace(0.0, 1.0, k + 1), 2)
    if name == "partition_k":
        if k % 2 == 0:
            raise ValueError("partition_k needs an odd k (an even point count)")
        m = (k + 1) // 2
        left = 0.5 * np.arange(1, m + 1) / (m + 1)
        return np.concatenate([left, 0.5 + left])
    if name == "partition_2k":
        left = 0.5 * np.arange(1, k + 2) / (k + 2)
        return np.concatenate([left, 0.5 + left])
    raise ValueError(f"unknown design {name!r}")


def _predictions(thetas, x):
    # group by order so each basis matrix is built once
    out = np.empty((len(thetas), x.size))
    by_order = {}
    for i, theta in enumerate(thetas):
        by_order.setdefault(theta.n, []).append(i)
    for n, idx in by_order.items():
        basis = basis_matrix(n, x)
        coeffs = np.array([thetas[i].b for i in idx])
        out[idx] = coeffs @ basis.T
    return out


def ri_design(draws, null_draws, new_points, sigma, rng, **ri_kwargs):
    """Relative information of the current data against a candidate design.

    For each posterior draw, responses at the new points are simulated from
    that draw's regression function with the shared noise scale; the log
    ratios against each null draw are exact Gaussian quantities, and the
    per-draw observed-data log likelihoods are taken from the chain (they
    are exact for this model).  An empty design yields BI3 = 1: nothing is
    missing.
    """
    check_positive(sigma, "sigma")
    if not len(draws.draws):
        raise ValueError("draws is empty")
    if not len(null_draws.draws):
        raise InsufficientNullDrawsError("no null draws supplied")
    x = as_float_vector(new_points, "new_points", allow_empty=True)
    check_unit_interval(x, "new_points")

    ell = ObservedLodSamples(np.array([d.ell_ob for d in draws.draws]))
    n_draws = len(draws.draws)
    if x.size == 0:
        ratios = [
            ConditionalRatioSamples(nid, np.zeros(n_draws)) for nid in null_draws.indices
        ]
        return ri_compute(ell, ratios, **ri_kwargs)

    preds = _predictions([d.theta for d in draws.draws], x)
    y_new = preds + sigma * rng.standard_normal(preds.shape)
    null_preds = _predictions([d.theta for d in null_draws.draws], x)

    resid_self = ((y_new - preds) ** 2).sum(axis=1)
    sq_null = (null_preds**2).sum(axis=1)
    sq_y = (y_new**2).sum(axis=1)
    w = (
        sq_y[None, :] - 2.0 * (null_preds @ y_new.T) + sq_null[:, None] - resid_self[None, :]
    ) / (2.0 * sigma**2)
    ratios = [
        ConditionalRatioSamples(nid, w[j]) for j, nid in enumerate(null_draws.indices)
    ]
    return ri_compute(ell, ratios, **ri_kwargs)
