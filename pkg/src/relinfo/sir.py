"""Household S-I-R epidemic model with partially observed infection times.

Within a household of m members, susceptible individual i is infected with
intensity beta0 * exp(beta1 * z_i) * I(t-) (I = number currently infectious)
and each infectious individual is removed with intensity gamma0.  Households
are independent and epidemics are observed to extinction: the data are all
removal times, each member's binary covariate, and the index case's infection
time (0 by convention); the other infection times are latent.

The complete-data log likelihood factorises through seven per-household
sufficient statistics, so it can be evaluated for many parameter values as a
single matrix product.  That carries the chain (augmentation moves update one
household's statistics at a time), the importance-sampling estimate of the
observed-data log likelihood, and both what-to-collect-next comparisons:
treating the latent infection times as the recoverable missing data, or the
removal histories of additional unobserved households.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ToleranceNotMetWarning, ZeroLikelihoodRegionError
from .measures import ConditionalRatioSamples, ObservedLodSamples, ri_compute
from .mcmc import ModelContract, RandomWalkBlock
from .validation import as_rng, check_positive

_NEG_INF = -math.inf


@dataclass(frozen=True)
class SirParams:
    """Infection rate, covariate log-effect, removal rate."""

    beta0: float
    beta1: float
    gamma0: float

    def __post_init__(self):
        check_positive(self.beta0, "beta0")
        check_positive(self.gamma0, "gamma0")
        if not math.isfinite(self.beta1):
            raise ValueError("beta1 must be finite")

    def features(self):
        """Coefficient vector pairing with household sufficient statistics.

        The complete-data log likelihood of a household is the dot product of
        this vector with (n_inf, z_sum, log_i_sum, n_rem, a0, a1, r_sum):
        non-index infection count, their covariate sum, the sum of
        log I(tau-) at those infections, removal count, exposure integrals of
        z=0 and z=1 members, and total infectious person-time.
        """
        return np.array(
            [
                math.log(self.beta0),
                self.beta1,
                1.0,
                math.log(self.gamma0),
                -self.beta0,
                -self.beta0 * math.exp(self.beta1),
                -self.gamma0,
            ]
        )


@dataclass(frozen=True)
class SirPriors:
    """Exponential priors on the two rates, normal prior on the log-effect."""

    beta0_rate: float = 1.0
    gamma0_rate: float = 1.0
    beta1_mean: float = 0.0
    beta1_sd: float = 1.0

    def __post_init__(self):
        check_positive(self.beta0_rate, "beta0_rate")
        check_positive(self.gamma0_rate, "gamma0_rate")
        check_positive(self.beta1_sd, "beta1_sd")

    def log_density(self, params):
        z = (params.beta1 - self.beta1_mean) / self.beta1_sd
        return (
            math.log(self.beta0_rate)
            - self.beta0_rate * params.beta0
            + math.log(self.gamma0_rate)
            - self.gamma0_rate * params.gamma0
            - 0.5 * (math.log(2.0 * math.pi) + z * z)
            - math.log(self.beta1_sd)
        )

    def sample(self, rng):
        rng = as_rng(rng)
        return SirParams(
            beta0=float(rng.exponential(1.0 / self.beta0_rate)),
            beta1=float(rng.normal(self.beta1_mean, self.beta1_sd)),
            gamma0=float(rng.exponential(1.0 / self.gamma0_rate)),
        )

    def null_probability(self):
        """Prior probability that the covariate effect is negative."""
        return 0.5 * (1.0 + math.erf(-self.beta1_mean / (self.beta1_sd * math.sqrt(2.0))))


@dataclass(frozen=True)
class Member:
    id: int | str
    z: int
    infection_time: float | None
    removal_time: float | None

    def __post_init__(self):
        if self.z not in (0, 1):
            raise ValueError(f"member {self.id}: covariate must be 0 or 1, got {self.z}")
        ti, tr = self.infection_time, self.removal_time
        if ti is not None and (not math.isfinite(ti) or ti < 0):
            raise ValueError(f"member {self.id}: infection_time must be finite and >= 0")
        if tr is not None and (not math.isfinite(tr) or tr <= 0):
            raise ValueError(f"member {self.id}: removal_time must be finite and > 0")
        if ti is not None and tr is None:
            # epidemics are observed to extinction, so an infected member
            # always has a removal time; only the reverse (latent infection
            # time) is allowed to be missing
            raise ValueError(f"member {self.id}: infected but no removal time recorded")
        if ti is not None and tr is not None and ti >= tr:
            raise ValueError(f"member {self.id}: infection_time must precede removal_time")


class HouseholdRecord:
    """One household's members; infection times may be latent (None)."""

    def __init__(self, members):
        members = tuple(
            m if isinstance(m, Member) else Member(**m) for m in members
        )
        if not members:
            raise ValueError("household must have at least one member")
        ids = [m.id for m in members]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate member ids: {sorted(ids)}")
        index = [m for m in members if m.infection_time == 0.0]
        if len(index) != 1:
            raise ValueError(
                "household must have exactly one index member with "
                f"infection_time 0, found {len(index)}"
            )
        self.members = members
        self.index_member = index[0].id

    @property
    def size(self):
        return len(self.members)

    def infected_members(self):
        return [m for m in self.members if m.removal_time is not None]

    def latent_members(self):
        return [
            m
            for m in self.members
            if m.removal_time is not None and m.infection_time is None
        ]

    def is_complete(self):
        return not self.latent_members()

    def observed_view(self):
        """Drop all non-index infection times (the latent data)."""
        return HouseholdRecord(
            [
                Member(
                    m.id,
                    m.z,
                    0.0 if m.id == self.index_member else None,
                    m.removal_time,
                )
                for m in self.members
            ]
        )

    def to_obj(self):
        return {
            "members": [
                {
                    "id": m.id,
                    "z": m.z,
                    "infection_time": m.infection_time,
                    "removal_time": m.removal_time,
                }
                for m in self.members
            ]
        }


def households_to_json(households, path):
    with open(path, "w") as fh:
        json.dump([h.to_obj() for h in households], fh, indent=2, sort_keys=True)
        fh.write("\n")


def households_from_json(path):
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, list):
        raise ValueError("household file must contain a JSON array")
    out = []
    for i, entry in enumerate(obj):
        try:
            extra = set(entry) - {"members"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)}")
            members = []
            for j, m in enumerate(entry["members"]):
                extra = set(m) - {"id", "z", "infection_time", "removal_time"}
                if extra:
                    raise ValueError(f"member {j}: unknown keys {sorted(extra)}")
                members.append(Member(m["id"], m["z"], m["infection_time"], m["removal_time"]))
            out.append(HouseholdRecord(members))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"household {i}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def covariate_vector(size, scheme, rng=None):
    """Covariates for a simulated household: 'balanced' alternates 0,1,...;
    'bernoulli' is an independent fair coin per member."""
    if scheme == "balanced":
        return [i % 2 for i in range(size)]
    if scheme == "bernoulli":
        return [int(v) for v in as_rng(rng).integers(0, 2, size)]
    raise ValueError(f"unknown covariate scheme {scheme!r}")


def simulate_household(params, z, rng):
    """Exact event-by-event simulation of one household epidemic.

    Member 1 is the index case, infected at time 0; competing exponential
    clocks drive infections and removals until no one is infectious.
    Returns a complete record (all infection times filled in).
    """
    rng = as_rng(rng)
    z = list(z)
    m = len(z)
    if m < 1:
        raise ValueError("household size must be at least 1")
    infection = [None] * m
    removal = [None] * m
    infection[0] = 0.0
    infectious = [0]
    susceptible = list(range(1, m))
    t = 0.0
    while infectious:
        n_inf = len(infectious)
        inf_hazards = [params.beta0 * math.exp(params.beta1 * z[i]) * n_inf for i in susceptible]
        total = sum(inf_hazards) + params.gamma0 * n_inf
        t += rng.exponential(1.0 / total)
        u = rng.uniform(0.0, total)
        acc = 0.0
        event = None
        for pos, i in enumerate(susceptible):
            acc += inf_hazards[pos]
            if u < acc:
                event = ("infect", i)
                break
        if event is None:
            k = infectious[int(rng.integers(n_inf))]
            event = ("remove", k)
        kind, who = event
        if kind == "infect":
            infection[who] = t
            susceptible.remove(who)
            infectious.append(who)
        else:
            removal[who] = t
            infectious.remove(who)
    return HouseholdRecord(
        [Member(i + 1, z[i], infection[i], removal[i]) for i in range(m)]
    )


def simulate_households(params, n_households, size, scheme, rng):
    rng = as_rng(rng)
    return [
        simulate_household(params, covariate_vector(size, scheme, rng), rng)
        for _ in range(n_households)
    ]


# ---------------------------------------------------------------------------
# likelihood machinery
# ---------------------------------------------------------------------------

N_FEATURES = 7


class _House:
    """Precomputed arrays for one household's likelihood evaluations.

    Arrays are ordered over the infected members (the only ones with event
    times); never-infected members enter only through their covariate counts,
    since their exposure integral equals the household's total infectious
    person-time.
    """

    def __init__(self, record):
        infected = record.infected_members()
        self.record = record
        self.r = np.array([m.removal_time for m in infected])
        self.z_inf = np.array([m.z for m in infected], dtype=int)
        self.member_ids = [m.id for m in infected]
        self.index_pos = next(
            i for i, m in enumerate(infected) if m.id == record.index_member
        )
        self.fixed_tau = np.array(
            [math.nan if m.infection_time is None else m.infection_time for m in infected]
        )
        self.latent_pos = np.nonzero(np.isnan(self.fixed_tau))[0]
        self.latent_r = self.r[self.latent_pos]
        self.latent_ids = [self.member_ids[p] for p in self.latent_pos]
        self.log_r_latent_sum = float(np.sum(np.log(self.latent_r))) if self.latent_pos.size else 0.0
        never = [m for m in record.members if m.removal_time is None]
        self.n_never0 = sum(1 for m in never if m.z == 0)
        self.n_never1 = sum(1 for m in never if m.z == 1)
        k = self.r.size
        self.n_inf = float(k - 1)
        self.z_sum = float(self.z_inf.sum() - self.z_inf[self.index_pos])
        self.n_rem = float(k)

    @property
    def n_latent(self):
        return int(self.latent_pos.size)

    def fill(self, latent_values):
        taus = self.fixed_tau.copy()
        taus[self.latent_pos] = latent_values
        return taus

    def features_single(self, taus):
        """Sufficient statistics for one augmented configuration, or None.

        None signals zero likelihood: an infection time at or past the
        member's removal, or an infection with nobody infectious just before.
        Pure-python loops beat numpy here; k is at most the household size.
        """
        r = self.r
        k = r.size
        idx = self.index_pos
        log_i = 0.0
        for j in range(k):
            tj = taus[j]
            if tj >= r[j]:
                return None
            if j == idx:
                continue
            count = 0
            for a in range(k):
                if taus[a] < tj and r[a] >= tj:
                    count += 1
            if count == 0:
                return None
            log_i += math.log(count)
        a0 = 0.0
        a1 = 0.0
        r_sum = 0.0
        for j in range(k):
            r_sum += r[j] - taus[j]
        for j in range(k):
            tj = taus[j]
            acc = 0.0
            for a in range(k):
                top = r[a] if r[a] < tj else tj
                if top > taus[a]:
                    acc += top - taus[a]
            if self.z_inf[j] == 1:
                a1 += acc
            else:
                a0 += acc
        a0 += self.n_never0 * r_sum
        a1 += self.n_never1 * r_sum
        return np.array([self.n_inf, self.z_sum, log_i, self.n_rem, a0, a1, r_sum])

    def features_many(self, latent_matrix):
        """Vectorised sufficient statistics for many latent configurations.

        Returns (features, valid): an (n, 7) array and a boolean mask; rows
        with valid = False carry no meaning.
        """
        n = latent_matrix.shape[0]
        k = self.r.size
        taus = np.broadcast_to(self.fixed_tau, (n, k)).copy()
        taus[:, self.latent_pos] = latent_matrix
        r = self.r
        valid = np.all(taus < r, axis=1)
        # I(tau_j-): infectors a with tau_a < tau_j <= r_a
        before = taus[:, :, None] < taus[:, None, :]
        still = r[None, :, None] >= taus[:, None, :]
        counts = (before & still).sum(axis=1)
        non_index = np.ones(k, dtype=bool)
        non_index[self.index_pos] = False
        valid &= np.all(counts[:, non_index] >= 1, axis=1)
        log_i = np.log(np.where(counts[:, non_index] >= 1, counts[:, non_index], 1)).sum(axis=1)
        # exposure of member j before its infection: sum_a max(0, min(r_a, tau_j) - tau_a)
        overlap = np.minimum(r[None, :, None], taus[:, None, :]) - taus[:, :, None]
        exposure = np.clip(overlap, 0.0, None).sum(axis=1)
        r_sum = (r - taus).sum(axis=1)
        z1 = self.z_inf == 1
        a0 = exposure[:, ~z1].sum(axis=1) + self.n_never0 * r_sum
        a1 = exposure[:, z1].sum(axis=1) + self.n_never1 * r_sum
        features = np.column_stack(
            [
                np.full(n, self.n_inf),
                np.full(n, self.z_sum),
                log_i,
                np.full(n, self.n_rem),
                a0,
                a1,
                r_sum,
            ]
        )
        return features, valid


class SirData:
    """A set of household records prepared for likelihood work."""

    def __init__(self, households):
        self.households = [
            h if isinstance(h, HouseholdRecord) else HouseholdRecord(h) for h in households
        ]
        self.houses = [_House(h) for h in self.households]
        self.latent_house_idx = [i for i, h in enumerate(self.houses) if h.n_latent]
        fixed = np.zeros(N_FEATURES)
        for i, house in enumerate(self.houses):
            if house.n_latent == 0 and house.r.size:
                f = house.features_single(house.fixed_tau)
                if f is None:
                    raise ValueError(
                        f"household {i}: recorded event times have zero likelihood "
                        "(an infection happens with nobody infectious)"
                    )
                fixed += f
        self.fixed_features = fixed

    def __len__(self):
        return len(self.households)

    @property
    def n_latent(self):
        return sum(h.n_latent for h in self.houses)

    @classmethod
    def from_json(cls, path):
        return cls(households_from_json(path))

    def save(self, path):
        households_to_json(self.households, path)


class SirMissing:
    """Immutable snapshot of the augmented infection times.

    Caches each household's sufficient statistics and their column sums, so
    the complete-data log likelihood of the whole dataset is a 7-element dot
    product against the parameter feature vector.
    """

    __slots__ = ("latents", "features", "total")

    def __init__(self, latents, features, total):
        self.latents = latents  # tuple of per-household tuples
        self.features = features  # (n_households, 7)
        self.total = total  # (7,)

    @classmethod
    def build(cls, data, latents):
        feats = np.zeros((len(data.houses), N_FEATURES))
        for i, house in enumerate(data.houses):
            if house.r.size == 0:
                continue
            f = house.features_single(house.fill(latents[i]))
            if f is None:
                raise ValueError(
                    f"household {i}: augmented infection times have zero likelihood"
                )
            feats[i] = f
        return cls(tuple(tuple(l) for l in latents), feats, feats.sum(axis=0))

    def flat_values(self):
        return [v for house in self.latents for v in house]


def complete_loglik(params, data, y_mis=None):
    """Complete-data log likelihood; -inf on zero-likelihood augmentations.

    ``y_mis`` supplies the latent infection times (a SirMissing or a list of
    per-household value sequences); omit it when every record is complete.
    """
    if y_mis is None:
        total = np.zeros(N_FEATURES)
        for i, house in enumerate(data.houses):
            if house.n_latent:
                raise ValueError(f"household {i} has latent infection times; pass y_mis")
            if house.r.size == 0:
                continue
            f = house.features_single(house.fixed_tau)
            if f is None:
                return _NEG_INF
            total += f
        return float(total @ params.features())
    if not isinstance(y_mis, SirMissing):
        try:
            y_mis = SirMissing.build(data, y_mis)
        except ValueError:
            return _NEG_INF
    return float(y_mis.total @ params.features())


def _pooled_log_mean_exp(log_weights):
    m = float(log_weights.max())
    if m == _NEG_INF:
        return _NEG_INF, math.inf
    u = np.exp(log_weights - m)
    mean = float(u.mean())
    if log_weights.size > 1:
        se = float(u.std(ddof=1) / (math.sqrt(u.size) * mean))
    else:
        se = math.inf
    return m + math.log(mean), se


def observed_loglik_is(params, household, n_samples, rng):
    """Importance-sampling estimate of one household's observed log likelihood.

    Latent infection times are proposed independently Uniform(0, own removal
    time); the estimate is the log of the average importance weight, its
    standard error from the delta method on the weight distribution.
    Households with no latent times are evaluated exactly (se 0).
    """
    house = household if isinstance(household, _House) else _House(household)
    pv = params.features()
    if house.n_latent == 0:
        if house.r.size == 0:
            return 0.0, 0.0
        f = house.features_single(house.fixed_tau)
        if f is None:
            raise ZeroLikelihoodRegionError(
                "recorded event times are impossible under the model"
            )
        return float(f @ pv), 0.0
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rng = as_rng(rng)
    proposals = rng.uniform(0.0, house.latent_r, size=(n_samples, house.n_latent))
    feats, valid = house.features_many(proposals)
    lw = np.where(valid, feats @ pv, _NEG_INF) + house.log_r_latent_sum
    value, se = _pooled_log_mean_exp(lw)
    if value == _NEG_INF:
        raise ZeroLikelihoodRegionError(
            f"all {n_samples} importance draws had zero likelihood; "
            "the observed data may be inconsistent with the model"
        )
    return value, se


def _adaptive_house_estimate(house, pv, rng, tol, initial, cap):
    pooled = []
    total = 0
    n = initial
    while True:
        draw = min(n, max(cap - total, 2))
        proposals = rng.uniform(0.0, house.latent_r, size=(draw, house.n_latent))
        feats, valid = house.features_many(proposals)
        pooled.append(np.where(valid, feats @ pv, _NEG_INF) + house.log_r_latent_sum)
        total += draw
        value, se = _pooled_log_mean_exp(np.concatenate(pooled))
        if value > _NEG_INF and se <= tol:
            return value, se
        if total >= cap:
            if value == _NEG_INF:
                raise ZeroLikelihoodRegionError(
                    f"all {total} importance draws had zero likelihood"
                )
            warnings.warn(
                f"importance-sampling se {se:.3g} above tolerance {tol:.3g} "
                f"after {total} draws",
                ToleranceNotMetWarning,
                stacklevel=2,
            )
            return value, se
        n = total  # double the pool each round


def observed_loglik(params, data, rng, tol=0.1, initial=1000, cap=100000):
    """Observed-data log likelihood of a whole dataset, with standard error.

    Households are independent, so per-household estimates are summed; each
    latent household's sample pool doubles until its se is below
    tol/sqrt(#latent households), keeping the summed se near ``tol``.
    """
    rng = as_rng(rng)
    pv = params.features()
    value = float(data.fixed_features @ pv)
    se2 = 0.0
    latent_houses = [data.houses[i] for i in data.latent_house_idx]
    if not latent_houses:
        return value, 0.0
    tol_h = tol / math.sqrt(len(latent_houses))
    for house in latent_houses:
        v, se = _adaptive_house_estimate(house, pv, rng, tol_h, initial, cap)
        value += v
        se2 += se * se
    return value, math.sqrt(se2)


# ---------------------------------------------------------------------------
# model contract
# ---------------------------------------------------------------------------


class SirModel(ModelContract):
    """Ties the household model to the generic chain engine.

    ``constrained`` restricts the chain to the null region (covariate effect
    below zero) by reflecting beta1 proposals at 0; used as the fallback when
    too few unconstrained draws land in the null.
    """

    kind = "sir"

    def __init__(
        self,
        priors=None,
        is_tol=0.1,
        is_initial=1000,
        is_max=100000,
        constrained=False,
    ):
        self.priors = priors if priors is not None else SirPriors()
        self.is_tol = is_tol
        self.is_initial = is_initial
        self.is_max = is_max
        self.constrained = constrained

    def log_prior(self, theta):
        if self.constrained and theta.beta1 >= 0.0:
            return _NEG_INF
        return self.priors.log_density(theta)

    def complete_loglik(self, theta, y_ob, y_mis):
        return float(y_mis.total @ theta.features())

    def observed_loglik(self, theta, y_ob, rng):
        return observed_loglik(
            theta, y_ob, rng, tol=self.is_tol, initial=self.is_initial, cap=self.is_max
        )

    def sample_missing_update(self, theta, y_ob, y_mis, rng):
        pv = theta.features()
        feats = y_mis.features
        latents = None
        for h in y_ob.latent_house_idx:
            house = y_ob.houses[h]
            slot = int(rng.integers(house.n_latent))
            proposal = float(rng.uniform(0.0, house.latent_r[slot]))
            current = y_mis.latents[h] if latents is None else latents[h]
            candidate = current[:slot] + (proposal,) + current[slot + 1 :]
            new_row = house.features_single(house.fill(candidate))
            if new_row is None:
                continue
            log_ratio = float((new_row - feats[h]) @ pv)
            if log_ratio >= 0 or math.log(rng.random()) < log_ratio:
                if latents is None:
                    latents = list(y_mis.latents)
                    feats = feats.copy()
                latents[h] = candidate
                feats[h] = new_row
        if latents is None:
            return y_mis
        return SirMissing(tuple(latents), feats, feats.sum(axis=0))

    def missing_conditional_logdensity(self, theta, y_ob, y_mis, rng):
        # log p(y_mis | y_ob, theta) = complete - observed; the observed term
        # is re-estimated from the provided stream, so this stays an
        # independent check against the stored per-draw estimates
        value, se = self.observed_loglik(theta, y_ob, rng)
        return self.complete_loglik(theta, y_ob, y_mis) - value, se

    def null_predicate(self, theta):
        return theta.beta1 < 0.0

    def parameter_blocks(self):
        return [
            RandomWalkBlock(
                "beta0",
                getter=lambda th: th.beta0,
                setter=lambda th, v: replace(th, beta0=v),
                transform="log",
                initial_scale=0.5,
            ),
            RandomWalkBlock(
                "beta1",
                getter=lambda th: th.beta1,
                setter=lambda th, v: replace(th, beta1=v),
                transform="identity",
                initial_scale=0.5,
                upper=0.0 if self.constrained else None,
            ),
            RandomWalkBlock(
                "gamma0",
                getter=lambda th: th.gamma0,
                setter=lambda th, v: replace(th, gamma0=v),
                transform="log",
                initial_scale=0.5,
            ),
        ]

    def initial_state(self, y_ob, rng):
        rng = as_rng(rng)
        theta = self.priors.sample(rng)
        if self.constrained and theta.beta1 >= 0.0:
            theta = replace(theta, beta1=-abs(theta.beta1) - 1e-6)
        latents = []
        for house in y_ob.houses:
            if house.n_latent == 0:
                latents.append(())
                continue
            # any configuration inside (0, min(own removal, index removal))
            # has the index infectious at every latent infection, hence
            # positive likelihood
            bound = np.minimum(house.latent_r, house.r[house.index_pos])
            latents.append(tuple(rng.uniform(0.0, bound)))
        return theta, SirMissing.build(y_ob, latents)

    def null_constrained_variant(self):
        return SirModel(
            priors=self.priors,
            is_tol=self.is_tol,
            is_initial=self.is_initial,
            is_max=self.is_max,
            constrained=True,
        )

    def param_names(self, y_ob):
        return ["beta0", "beta1", "gamma0"]

    def param_values(self, theta, y_ob):
        return [theta.beta0, theta.beta1, theta.gamma0]

    def theta_from_values(self, values, y_ob):
        return SirParams(*map(float, values))

    def missing_names(self, y_ob):
        return [
            f"tau_h{h}_{mid}"
            for h in y_ob.latent_house_idx
            for mid in y_ob.houses[h].latent_ids
        ]

    def missing_values(self, y_mis, y_ob):
        return y_mis.flat_values()

    def missing_from_values(self, values, y_ob):
        latents = []
        pos = 0
        for house in y_ob.houses:
            latents.append(tuple(values[pos : pos + house.n_latent]))
            pos += house.n_latent
        return SirMissing.build(y_ob, latents)


def posterior_null_probability(drawset):
    """Fraction of posterior draws with a negative covariate effect."""
    if not len(drawset):
        raise ValueError("drawset is empty")
    return float(np.mean([d.theta.beta1 < 0.0 for d in drawset.draws]))


# ---------------------------------------------------------------------------
# relative-information scenarios
# ---------------------------------------------------------------------------


def _param_matrix(thetas):
    return np.stack([t.features() for t in thetas])


def ri_scenario_infection_times(drawset, null_draws, y_ob, **ri_kwargs):
    """Relative information when the latent infection times are the missing data.

    Uses the identity log p(y_mis | y_ob, theta) = complete - observed: the
    conditional log ratio for null draw theta0 and joint draw (theta_m, s_m)
    needs only the stored sufficient statistics and per-draw observed
    log-likelihood estimates.
    """
    if not len(drawset):
        raise ValueError("drawset is empty")
    ell = ObservedLodSamples(drawset.ell_ob, se=drawset.ell_ob_se)
    stats = np.stack([drawset.y_mis_of(d).total for d in drawset.draws])  # (M, 7)
    p_draws = _param_matrix([d.theta for d in drawset.draws])
    c_self = np.einsum("ij,ij->i", stats, p_draws)
    p_null = _param_matrix([d.theta for d in null_draws.draws])
    c_null = stats @ p_null.T  # (M, J)
    resid_self = c_self - drawset.ell_ob
    resid_null = c_null - np.array([d.ell_ob for d in null_draws.draws])[None, :]
    ratios = [
        ConditionalRatioSamples(int(null_draws.indices[j]), resid_self - resid_null[:, j])
        for j in range(len(null_draws))
    ]
    return ri_compute(ell, ratios, **ri_kwargs)


def ri_scenario_new_households(
    drawset,
    null_draws,
    n_new,
    template_z,
    sim_seed,
    n_is_samples=512,
    **ri_kwargs,
):
    """Relative information when the missing data are new households' removals.

    For each retained draw, ``n_new`` households are simulated forward from
    that draw's parameters (posterior predictive); the conditional log ratio
    against each null draw is the difference of the new households' observed
    log likelihoods, importance-sampled once per household with proposals
    shared across all parameter values.
    """
    if not len(drawset):
        raise ValueError("drawset is empty")
    if n_new < 0:
        raise ValueError("n_new must be nonnegative")
    ell = ObservedLodSamples(drawset.ell_ob, se=drawset.ell_ob_se)
    thetas = [d.theta for d in drawset.draws]
    null_thetas = [d.theta for d in null_draws.draws]
    m_draws, j_null = len(thetas), len(null_thetas)
    w = np.zeros((m_draws, j_null))
    if n_new > 0:
        p_null = _param_matrix(null_thetas)  # (J, 7)
        root = (
            sim_seed
            if isinstance(sim_seed, np.random.SeedSequence)
            else np.random.SeedSequence(sim_seed)
        )
        streams = root.spawn(m_draws)
        for m, theta in enumerate(thetas):
            rng = np.random.default_rng(streams[m])
            p_eval = np.vstack([theta.features(), p_null])  # (1+J, 7)
            for _ in range(n_new):
                record = simulate_household(theta, template_z, rng)
                house = _House(record.observed_view())
                vals = _new_household_loglik(house, p_eval, rng, n_is_samples)
                w[m] += vals[0] - vals[1:]
    ratios = [
        ConditionalRatioSamples(int(null_draws.indices[j]), w[:, j])
        for j in range(j_null)
    ]
    return ri_compute(ell, ratios, **ri_kwargs)


def _new_household_loglik(house, p_eval, rng, n_samples):
    """Observed log likelihood of one household at many parameter values.

    One proposal set serves every parameter value (common random numbers), so
    differences between values are far less noisy than the values themselves.
    """
    if house.n_latent == 0:
        f = house.features_single(house.fixed_tau)
        if f is None:
            raise ZeroLikelihoodRegionError("simulated household is inconsistent")
        return p_eval @ f
    n = n_samples
    for attempt in range(2):
        proposals = rng.uniform(0.0, house.latent_r, size=(n, house.n_latent))
        feats, valid = house.features_many(proposals)
        if valid.any():
            lw = feats @ p_eval.T  # (n, 1+J)
            lw[~valid] = _NEG_INF
            m = lw.max(axis=0)
            out = m + np.log(np.exp(lw - m).mean(axis=0)) + house.log_r_latent_sum
            return out
        n *= 4
    raise ZeroLikelihoodRegionError(
        "no valid importance draws for a simulated household"
    )
