"""Stochastic probe feedback and sufficient-statistic tallies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import RI_MULTICAST, UNICAST


def validate_mu(mu, link_count=None):
    """Return mu as a float vector after checking every entry lies in (0,1)."""
    vec = np.asarray(mu, dtype=float)
    if vec.ndim != 1:
        raise ValueError("mu must be a 1-d vector")
    if link_count is not None and vec.size != link_count:
        raise ValueError(f"mu has {vec.size} entries, expected {link_count}")
    if not np.all((vec > 0.0) & (vec < 1.0)):
        raise ValueError("every link parameter must lie strictly inside (0, 1)")
    return vec


class RngStream:
    """Deterministic random stream keyed by (scenario, run, policy).

    Identical keys replay the identical draw sequence; distinct keys are
    independent by seed-sequence construction.  `domain` separates stream
    families (scenario-level parameter draws vs. per-run simulation draws).
    """

    def __init__(self, master_seed, scenario=0, run=0, policy=0, domain=1):
        self.key = (int(domain), int(scenario), int(run), int(policy))
        self.master_seed = int(master_seed)
        self._gen = None

    @property
    def generator(self):
        if self._gen is None:
            seq = np.random.SeedSequence(self.master_seed, spawn_key=self.key)
            self._gen = np.random.Generator(np.random.PCG64(seq))
        return self._gen

    def replay(self):
        """Fresh generator positioned at the start of this stream."""
        return RngStream(self.master_seed, *self.key[1:], domain=self.key[0]).generator


@dataclass
class TallyState:
    """Per-probe counts S, unicast success counts B, per-link no-flip counts A."""

    S: np.ndarray  # (M,) probes performed
    B: np.ndarray  # (M,) unicast successes
    A: np.ndarray  # (M, L) RI no-flip counts; row m has a structural zero at m

    @classmethod
    def empty(cls, probe_count, link_count):
        return cls(
            S=np.zeros(probe_count, dtype=np.int64),
            B=np.zeros(probe_count, dtype=np.int64),
            A=np.zeros((probe_count, link_count), dtype=np.int64),
        )

    @property
    def rounds(self):
        return int(self.S.sum())

    def copy(self):
        return TallyState(S=self.S.copy(), B=self.B.copy(), A=self.A.copy())


def unicast_success_prob(probe, mu):
    """End-to-end success probability: product of mu over the path links."""
    if probe.mode != UNICAST:
        raise ValueError("probe is not unicast")
    idx = np.asarray(probe.path_links, dtype=int) - 1
    return float(np.prod(np.asarray(mu, dtype=float)[idx]))


def sample_unicast(probe, mu, rng):
    """One Bernoulli(nu_m) end-to-end reception bit."""
    return int(rng.random() < unicast_success_prob(probe, mu))


def ri_observed_links(probe, link_count):
    """0-based indices of the links a root-independent probe observes."""
    root = probe.root_link - 1
    return np.array([ell for ell in range(link_count) if ell != root], dtype=int)


def sample_ri_multicast(probe, mu, rng):
    """Independent no-flip bits for every non-root link, ascending link order."""
    if probe.mode != RI_MULTICAST:
        raise ValueError("probe is not RI multicast")
    mu = np.asarray(mu, dtype=float)
    observed = ri_observed_links(probe, mu.size)
    return (rng.random(observed.size) < mu[observed]).astype(np.int64)


def record(tally, probe_index, probe, outcome):
    """Fold one probe outcome into the tallies (in place); returns the tally."""
    if probe.mode == UNICAST:
        bit = int(outcome)
        if bit not in (0, 1):
            raise ValueError("unicast outcome must be a single bit")
        tally.B[probe_index] += bit
    elif probe.mode == RI_MULTICAST:
        bits = np.asarray(outcome, dtype=np.int64)
        observed = ri_observed_links(probe, tally.A.shape[1])
        if bits.shape != observed.shape:
            raise ValueError(
                f"RI outcome needs {observed.size} bits, got shape {bits.shape}"
            )
        tally.A[probe_index, observed] += bits
    else:
        raise ValueError(f"unknown probe mode {probe.mode!r}")
    tally.S[probe_index] += 1
    return tally
