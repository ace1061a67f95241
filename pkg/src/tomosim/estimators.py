"""Link-parameter estimators and confidence radii.

All tally-driven estimators apply add-one-half smoothing, (count + 1/2) /
(total + 1), before any log transform so boundary observations stay inside
(0, 1), then clip to [eps, 1 - eps].  Pass smoothing=False to obtain the raw
maximum-likelihood ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdentifiabilityError, InsufficientDataError
from .topology import RI_MULTICAST, UNICAST

CLIP_EPS = 1e-6


@dataclass
class Estimate:
    """Point estimate of the link parameters plus optional confidence radii."""

    mu_hat: np.ndarray
    radii: np.ndarray = None
    delta: float = None


def default_delta(link_count, horizon):
    """Confidence parameter 1/(L T^2) used by the online policies."""
    return 1.0 / (link_count * horizon**2)


def _smooth(successes, totals, smoothing):
    successes = np.asarray(successes, dtype=float)
    totals = np.asarray(totals, dtype=float)
    if smoothing:
        return (successes + 0.5) / (totals + 1.0)
    return successes / totals


def probe_rate_mle(tally, m, smoothing=True, eps=CLIP_EPS):
    """Per-probe success-rate estimate B_m / S_m (smoothed, clipped)."""
    if tally.S[m] < 1:
        raise InsufficientDataError(f"probe {m + 1} has no samples")
    return float(np.clip(_smooth(tally.B[m], tally.S[m], smoothing), eps, 1 - eps))


def probe_rates(tally, smoothing=True, eps=CLIP_EPS):
    """Vector of per-probe success-rate estimates; needs every S_m >= 1."""
    if np.any(tally.S < 1):
        missing = [int(m + 1) for m in np.flatnonzero(tally.S < 1)]
        raise InsufficientDataError(f"probes without samples: {missing}")
    return np.clip(_smooth(tally.B, tally.S, smoothing), eps, 1 - eps)


def star_mle_from_rates(nu_hat, matrix, eps=CLIP_EPS):
    """Invert the log-linear model on a square system: exp(Q^-1 log nu)."""
    if not matrix.square:
        raise IdentifiabilityError("star MLE needs a square invertible Q")
    mu = np.exp(matrix.kappa @ np.log(np.asarray(nu_hat, dtype=float)))
    return np.clip(mu, eps, 1 - eps)


def general_mle_from_rates(nu_hat, matrix, eps=CLIP_EPS):
    """Least-squares solve of log nu = Q log mu, exponentiated and clipped.

    Uses the cached pseudo-inverse; for full column rank this equals the
    normal-equations solution (Q^T Q)^-1 Q^T log nu.
    """
    log_nu = np.log(np.asarray(nu_hat, dtype=float))
    return np.clip(np.exp(matrix.kappa @ log_nu), eps, 1 - eps)


def star_link_mle(tally, matrix, smoothing=True, eps=CLIP_EPS):
    """Closed-form unicast star MLE from tallies."""
    nu_hat = probe_rates(tally, smoothing=smoothing, eps=eps)
    return Estimate(mu_hat=star_mle_from_rates(nu_hat, matrix, eps=eps))


def general_link_mle(tally, matrix, smoothing=True, eps=CLIP_EPS):
    """Log-domain least-squares MLE for any rank-L unicast probe set."""
    nu_hat = probe_rates(tally, smoothing=smoothing, eps=eps)
    return Estimate(mu_hat=general_mle_from_rates(nu_hat, matrix, eps=eps))


def ri_link_mle(tally, smoothing=True, eps=CLIP_EPS):
    """Pooled Bernoulli mean per link over every probe not rooted there."""
    totals = tally.S.sum() - tally.S.astype(float)
    if np.any(totals < 1):
        missing = [int(ell + 1) for ell in np.flatnonzero(totals < 1)]
        raise InsufficientDataError(f"links never observed: {missing}")
    flips_avoided = tally.A.sum(axis=0).astype(float)
    mu = np.clip(_smooth(flips_avoided, totals, smoothing), eps, 1 - eps)
    return Estimate(mu_hat=mu)


def confidence_radii(tally, delta, mode, matrix=None):
    """Per-link half-widths at confidence 1 - delta (exponent 1/2, c = 1).

    Unicast: sum over probes with kappa != 0 of |kappa| sqrt(log(1/(M delta))/S_m),
    which requires delta < 1/M.  RI multicast: sqrt(log(1/delta) / sum_{m != ell} S_m).
    Links backed by zero counts get an infinite radius.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if mode == UNICAST:
        if matrix is None:
            raise ValueError("unicast radii need the measurement matrix")
        m_count = matrix.probe_count
        if delta >= 1.0 / m_count:
            raise ValueError(f"unicast radii need delta < 1/M = {1.0 / m_count:.3g}")
        log_term = np.log(1.0 / (delta * m_count))
        weights = np.abs(matrix.kappa)  # (L, M)
        weights[weights <= 1e-12] = 0.0
        s = tally.S.astype(float)
        per_probe = np.full(m_count, np.inf)
        sampled = s > 0
        per_probe[sampled] = np.sqrt(log_term / s[sampled])
        with np.errstate(invalid="ignore"):
            contrib = np.where(weights > 0, weights * per_probe[None, :], 0.0)
        return contrib.sum(axis=1)
    if mode == RI_MULTICAST:
        totals = tally.S.sum() - tally.S.astype(float)
        radii = np.full(totals.shape, np.inf)
        seen = totals > 0
        radii[seen] = np.sqrt(np.log(1.0 / delta) / totals[seen])
        return radii
    raise ValueError(f"unknown mode {mode!r}")
