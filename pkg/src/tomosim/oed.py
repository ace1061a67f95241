"""Fisher information, design criteria, and optimal allocations.

The A-optimal criterion is tr I(mu; phi)^-1 with I(mu; phi) = sum_m phi_m I_m(mu);
D-optimal is 1 / det I.  Singular information earns the +inf sentinel, never an
exception, so policies can treat it as worst-possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .probes import unicast_success_prob
from .topology import RI_MULTICAST, UNICAST

A_OPTIMAL = "a"
D_OPTIMAL = "d"


@dataclass(frozen=True)
class CriterionSpec:
    """Design criterion: kind 'a' (trace of inverse) or 'd' (1/determinant)."""

    kind: str = A_OPTIMAL
    floor: float = 1e-6

    def __post_init__(self):
        if self.kind not in (A_OPTIMAL, D_OPTIMAL):
            raise ConfigError(f"unknown criterion kind {self.kind!r}")
        if self.floor < 0.0:
            raise ConfigError("criterion floor must be nonnegative")


def validate_allocation(phi, probe_count=None, tol=1e-9):
    """Check phi is a point on the probe simplex and return it as floats."""
    phi = np.asarray(phi, dtype=float)
    if probe_count is not None and phi.size != probe_count:
        raise ValueError(f"allocation has {phi.size} entries, expected {probe_count}")
    if np.any(phi < -tol) or abs(phi.sum() - 1.0) > tol:
        raise ValueError("allocation must be nonnegative and sum to 1")
    return phi


def probe_fim(probe, mu):
    """Single-probe Fisher information about mu, as a dense (L, L) matrix.

    Unicast: rank-one, (nu/(1-nu)) d d^T with d_ell = Q_{m,ell}/mu_ell.
    RI multicast: diagonal, 1/(mu_ell (1-mu_ell)) on observed links.
    """
    mu = np.asarray(mu, dtype=float)
    num_links = mu.size
    if probe.mode == UNICAST:
        nu = unicast_success_prob(probe, mu)
        d = np.zeros(num_links)
        idx = np.asarray(probe.path_links, dtype=int) - 1
        d[idx] = 1.0 / mu[idx]
        return (nu / (1.0 - nu)) * np.outer(d, d)
    if probe.mode == RI_MULTICAST:
        diag = 1.0 / (mu * (1.0 - mu))
        diag[probe.root_link - 1] = 0.0
        return np.diag(diag)
    raise ValueError(f"unknown probe mode {probe.mode!r}")


def probe_fim_stack(probe_set, mu):
    """(M, L, L) stack of single-probe FIMs."""
    return np.stack([probe_fim(p, mu) for p in probe_set.probes])


def mix_fim(fim_stack, phi):
    """Allocation-weighted information sum_m phi_m I_m."""
    return np.tensordot(np.asarray(phi, dtype=float), fim_stack, axes=1)


def _trace_inverse(info):
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return np.inf
    inv_chol = np.linalg.solve(chol, np.eye(info.shape[0]))
    return float(np.sum(inv_chol**2))


def generic_criterion_value(mu, phi, probe_set, spec):
    """Criterion via explicit FIM assembly; the slow reference route."""
    info = mix_fim(probe_fim_stack(probe_set, mu), phi)
    if spec.kind == A_OPTIMAL:
        return _trace_inverse(info)
    sign, logdet = np.linalg.slogdet(info)
    return float(np.exp(-logdet)) if sign > 0 else np.inf


def star_allocation_weights(mu, matrix):
    """Per-probe weights A_m = ((1-nu_m)/nu_m) sum_ell mu_ell^2 kappa_{ell,m}^2.

    tr I^-1 equals sum_m A_m / phi_m when Q is square invertible; with the
    pseudo-inverse kappa the same expression is the asymptotic summed variance
    of the log-least-squares estimator on general unicast sets.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.exp(matrix.entries @ np.log(mu))
    return (1.0 - nu) / nu * (mu**2 @ matrix.kappa**2)


def classical_star_criterion(mu, phi, matrix):
    """Closed-form tr I^-1 for square unicast sets: sum_m A_m / phi_m."""
    weights = star_allocation_weights(mu, matrix)
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0.0):
        return np.inf
    return float(np.sum(weights / phi))


def quantum_star_criterion(mu, phi):
    """Closed-form tr I^-1 for the full RI star: sum_ell mu(1-mu)/(1-phi)."""
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    slack = 1.0 - phi
    if np.any(slack <= 0.0):
        return np.inf
    return float(np.sum(mu * (1.0 - mu) / slack))


def criterion_value(mu, phi, probe_set, spec):
    """Design-criterion value with fast paths for the two star cases."""
    if spec.kind == A_OPTIMAL:
        if probe_set.full_ri_star:
            return quantum_star_criterion(mu, phi)
        if probe_set.mode == UNICAST and probe_set.matrix.square:
            return classical_star_criterion(mu, phi, probe_set.matrix)
    return generic_criterion_value(mu, phi, probe_set, spec)


def allocation_from_weights(weights):
    """Lagrange solution of min sum w_m/phi_m on the simplex: phi ~ sqrt(w)."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0.0):
        raise ValueError("allocation weights must be strictly positive")
    root = np.sqrt(weights)
    return root / root.sum()


def star_a_optimal_allocation(mu, matrix):
    """Exact A-optimal allocation for square invertible unicast sets."""
    if not matrix.square:
        raise ValueError("closed-form star allocation needs a square Q")
    return allocation_from_weights(star_allocation_weights(mu, matrix))


def surrogate_a_optimal_allocation(mu, matrix):
    """sqrt-weight allocation with pseudo-inverse kappa for general unicast sets.

    Minimizes the asymptotic summed variance of the log-least-squares
    estimator rather than the exact tr I^-1 (those coincide when Q is square).
    """
    return allocation_from_weights(star_allocation_weights(mu, matrix))


def quantum_a_optimal_allocation(mu):
    """A-optimal allocation for the bit-flip RI star, by sorted elimination.

    Probes whose link has too large sqrt(mu(1-mu)) relative to the rest get
    zero allocation; ties eliminate the lowest link index first.
    """
    mu = np.asarray(mu, dtype=float)
    num = mu.size
    if num < 2:
        raise ValueError("need at least 2 probes")
    s = np.sqrt(mu * (1.0 - mu))
    # ascending s; equal values ordered by descending index so the lowest
    # index sits last and is eliminated first
    order = np.lexsort((-np.arange(num), s))
    s_sorted = s[order]
    csum = np.cumsum(s_sorted)
    kept = 2
    for j in range(num, 1, -1):
        if csum[j - 1] - (j - 1) * s_sorted[j - 1] >= 0.0:
            kept = j
            break
    phi = np.zeros(num)
    total = csum[kept - 1]
    support = order[:kept]
    phi[support] = (total - (kept - 1) * s[support]) / total
    return phi


def criterion_gradient(fim_stack, phi, kind):
    """Gradient of the smooth objective wrt phi (A: tr I^-1, D: -log det I)."""
    info = mix_fim(fim_stack, phi)
    inv = np.linalg.inv(info)
    if kind == A_OPTIMAL:
        return -np.einsum("ij,mjk,ki->m", inv, fim_stack, inv)
    return -np.einsum("ij,mji->m", inv, fim_stack)


def simplex_optimize(mu, probe_set, spec, iters=2000):
    """Conditional-gradient minimization of the criterion over the simplex.

    Feasible set is {phi >= floor, sum phi = 1}; step 2/(k+2), fixed budget,
    no randomness.  Backs the policies on topologies without closed forms and
    serves as the oracle route in tests.
    """
    m_count = probe_set.probe_count
    floor = spec.floor
    if floor * m_count >= 1.0:
        raise ConfigError("criterion floor too large for the probe count")
    fim_stack = probe_fim_stack(probe_set, mu)
    phi = np.full(m_count, 1.0 / m_count)
    start_value = generic_criterion_value(mu, phi, probe_set, spec)
    if not np.isfinite(start_value):
        raise ConfigError("criterion is not finite at the uniform allocation")
    slack = 1.0 - m_count * floor
    for k in range(1, iters + 1):
        grad = criterion_gradient(fim_stack, phi, spec.kind)
        vertex = np.full(m_count, floor)
        vertex[int(np.argmin(grad))] += slack
        step = 2.0 / (k + 2.0)
        phi = (1.0 - step) * phi + step * vertex
    return phi
