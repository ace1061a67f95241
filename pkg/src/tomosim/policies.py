"""Online probe-selection policies.

A policy is stepped once per round: `step(t)` is called with the 1-based
round number t while its tally still holds the first t-1 outcomes, and
returns the 0-based probe to perform.  The engine then records the outcome
into `policy.tally`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .probes import TallyState

OPAL = "opal"
OPAL_LAZY = "opal_lazy"
UNIFORM = "uniform"
ORACLE = "oracle"
ITERATIVE = "iterative"

POLICY_KINDS = (OPAL, OPAL_LAZY, UNIFORM, ORACLE, ITERATIVE)
XI_CUBE_ROOT = "T^(-1/3)"


@dataclass(frozen=True)
class PolicyConfig:
    """Declarative policy selection for the harness.

    xi is the total initial-sampling fraction (T0 = xi * T) or the schedule
    token "T^(-1/3)"; lazy_batch is the allocation-refresh period B of the
    lazy variant; iter_batch is the batched baseline's re-optimization period.
    """

    kind: str
    xi: object = 0.1
    lazy_batch: int = 100
    iter_batch: int = 100
    label: str = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.lazy_batch < 1 or self.iter_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if isinstance(self.xi, str):
            if self.xi != XI_CUBE_ROOT:
                raise ConfigError(f"unknown xi schedule token {self.xi!r}")
        elif not 0.0 <= float(self.xi) < 1.0:
            raise ConfigError("xi must lie in [0, 1) or be the schedule token")
        if self.label is None:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self):
        if self.kind == OPAL_LAZY:
            return f"opal_lazy_b{self.lazy_batch}"
        return self.kind


def resolve_xi(token, horizon, probe_count):
    """Turn the xi parameter into (xi, per-probe initial sample sizes).

    The total initial budget T0 = round(xi * T) is split evenly, remainder
    round-robin from the first probe.  T0 >= T is a configuration error.
    """
    if isinstance(token, str):
        if token != XI_CUBE_ROOT:
            raise ConfigError(f"unknown xi schedule token {token!r}")
        xi = float(horizon) ** (-1.0 / 3.0)
    else:
        xi = float(token)
        if xi < 0.0:
            raise ConfigError("xi must be nonnegative")
    total = int(round(xi * horizon))
    if total >= horizon:
        raise ConfigError(f"initial phase T0={total} does not fit horizon T={horizon}")
    base, extra = divmod(total, probe_count)
    s0 = np.full(probe_count, base, dtype=np.int64)
    s0[:extra] += 1
    return xi, s0


def deficit_argmax(phi_target, counts, t):
    """Probe with the largest allocation deficit phi_m - S_m/t.

    Ties break toward the smaller count, then the lower index; comparisons
    are exact so deterministic replays pick identical probes.
    """
    deficit = np.asarray(phi_target, dtype=float) - np.asarray(counts, dtype=float) / t
    best = np.flatnonzero(deficit == deficit.max())
    if best.size > 1:
        counts = np.asarray(counts)
        best = best[counts[best] == counts[best].min()]
    return int(best[0])


def least_sampled(counts):
    return int(np.argmin(counts))  # argmin takes the lowest index on ties


class Policy:
    """Shared engine-facing surface: reset, per-round step, current estimates."""

    def __init__(self, probe_set):
        self.probe_set = probe_set
        self.tally = None
        self.rng = None

    @property
    def probe_count(self):
        return self.probe_set.probe_count

    def reset(self, rng):
        self.tally = TallyState.empty(self.probe_count, self.probe_set.link_count)
        self.rng = rng

    def step(self, t):
        raise NotImplementedError

    def estimated_allocation(self):
        """Allocation the policy is currently steering toward."""
        return np.full(self.probe_count, 1.0 / self.probe_count)

    def estimated_mu(self):
        """Latest internal parameter estimate, or None before one exists."""
        return None


class ChasingPolicy(Policy):
    """Deficit-chasing of the estimated optimal allocation (lazy_batch=1 is
    the eager variant; larger B refreshes estimates only when t = 1 mod B)."""

    def __init__(self, probe_set, estimator, allocator, s0, lazy_batch=1):
        super().__init__(probe_set)
        self.estimator = estimator
        self.allocator = allocator
        self.s0 = np.asarray(s0, dtype=np.int64)
        self.lazy_batch = int(lazy_batch)
        self.phi_hat = None
        self.mu_hat = None
        self.refresh_count = 0

    def reset(self, rng):
        super().reset(rng)
        self.phi_hat = None
        self.mu_hat = None
        self.refresh_count = 0

    def _refresh(self):
        self.refresh_count += 1
        try:
            self.mu_hat = self.estimator(self.tally)
        except InsufficientDataError:
            return
        self.phi_hat = self.allocator(self.mu_hat)

    def step(self, t):
        deficient = np.flatnonzero(self.tally.S < self.s0)
        if deficient.size:
            return int(deficient[self.rng.integers(deficient.size)])
        if t % self.lazy_batch == 1 % self.lazy_batch:
            self._refresh()
        if self.phi_hat is None:
            return least_sampled(self.tally.S)
        return deficit_argmax(self.phi_hat, self.tally.S, t)

    def estimated_allocation(self):
        if self.phi_hat is None:
            return super().estimated_allocation()
        return self.phi_hat

    def estimated_mu(self):
        return self.mu_hat


class UniformPolicy(Policy):
    """Exact round-robin realization of the uniform allocation."""

    def step(self, t):
        return (t - 1) % self.probe_count


class OraclePolicy(Policy):
    """Chases the true optimal allocation; no estimation involved."""

    def __init__(self, probe_set, phi_star):
        super().__init__(probe_set)
        self.phi_star = np.asarray(phi_star, dtype=float)

    def step(self, t):
        return deficit_argmax(self.phi_star, self.tally.S, t)

    def estimated_allocation(self):
        return self.phi_star


class IterativePolicy(Policy):
    """Batched re-optimize-and-sample baseline.

    Every `batch` rounds the estimate and allocation refresh; inside a batch
    probes are drawn i.i.d. from the current allocation, so accumulated
    deficits are ignored by construction.  The first batch samples uniformly.
    """

    def __init__(self, probe_set, estimator, allocator, batch=100):
        super().__init__(probe_set)
        self.estimator = estimator
        self.allocator = allocator
        self.batch = int(batch)
        self.phi_hat = None
        self.mu_hat = None
        self.refresh_count = 0
        self._cdf = None

    def reset(self, rng):
        super().reset(rng)
        self.phi_hat = None
        self.mu_hat = None
        self.refresh_count = 0
        self._cdf = None

    def _refresh(self):
        self.refresh_count += 1
        try:
            self.mu_hat = self.estimator(self.tally)
            self.phi_hat = self.allocator(self.mu_hat)
        except InsufficientDataError:
            pass  # keep the previous allocation (uniform before the first fit)
        phi = self.estimated_allocation()
        self._cdf = np.cumsum(phi)

    def step(self, t):
        if (t - 1) % self.batch == 0 or self._cdf is None:
            self._refresh()
        draw = self.rng.random()
        return int(min(np.searchsorted(self._cdf, draw, side="right"), self.probe_count - 1))

    def estimated_allocation(self):
        if self.phi_hat is None:
            return super().estimated_allocation()
        return self.phi_hat

    def estimated_mu(self):
        return self.mu_hat
