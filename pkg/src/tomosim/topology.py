"""Network topologies, probe sets, and measurement matrices.

Nodes and links are 1-based in file formats, CLI output, and error
messages; numpy arrays index them 0-based.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EdgeListError,
    GenerationError,
    IdentifiabilityError,
    UnsupportedTopologyError,
)

STAR = "star"
GENERAL = "general"

UNICAST = "unicast"
RI_MULTICAST = "ri_multicast"

RANK_TOL = 1e-9


def _check_connected(node_count, links):
    adj = [[] for _ in range(node_count + 1)]
    for u, v in links:
        adj[u].append(v)
        adj[v].append(u)
    seen = {1}
    queue = deque([1])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == node_count


def _find_hub(node_count, links):
    """Return the 1-based hub node if one node touches every link, else None."""
    degree = np.zeros(node_count + 1, dtype=int)
    for u, v in links:
        degree[u] += 1
        degree[v] += 1
    hubs = np.flatnonzero(degree == len(links))
    return int(hubs[0]) if len(hubs) and len(links) >= 2 else None


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph with 1-based nodes and indexed links."""

    node_count: int
    links: tuple  # tuple of (u, v) node pairs, u < v; link ell = links[ell-1]
    kind: str = GENERAL

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("topology needs at least 2 nodes")
        seen = set()
        norm = []
        for u, v in self.links:
            if not (1 <= u <= self.node_count and 1 <= v <= self.node_count):
                raise ValueError(f"link ({u},{v}) has out-of-range endpoint")
            if u == v:
                raise ValueError(f"self-loop ({u},{v}) not allowed")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate link ({u},{v})")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "links", tuple(norm))
        if not _check_connected(self.node_count, self.links):
            raise ValueError("topology is not connected")
        if self.kind == STAR and _find_hub(self.node_count, self.links) is None:
            raise ValueError("kind=star but no node is incident to all links")

    @property
    def link_count(self):
        return len(self.links)

    @property
    def hub(self):
        return _find_hub(self.node_count, self.links)

    def adjacency(self):
        """Adjacency lists: node -> sorted list of (neighbor, link_index)."""
        adj = {n: [] for n in range(1, self.node_count + 1)}
        for idx, (u, v) in enumerate(self.links, start=1):
            adj[u].append((v, idx))
            adj[v].append((u, idx))
        for n in adj:
            adj[n].sort()
        return adj


def build_star(num_links):
    """Star with `num_links` leaves: link ell joins node ell to hub node L+1."""
    if num_links < 2:
        raise ValueError("a star needs at least 2 links")
    hub = num_links + 1
    links = tuple((ell, hub) for ell in range(1, num_links + 1))
    return Topology(node_count=num_links + 1, links=links, kind=STAR)


def build_er(n, edge_prob, seed, max_retries=1000):
    """Connected Erdos-Renyi graph; resamples until connected (bounded)."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if not 0.0 < edge_prob < 1.0:
        raise ValueError("edge_prob must be in (0, 1)")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        draws = rng.random((n, n))
        links = [
            (u, v)
            for u in range(1, n + 1)
            for v in range(u + 1, n + 1)
            if draws[u - 1, v - 1] < edge_prob
        ]
        if links and _check_connected(n, links):
            kind = STAR if _find_hub(n, links) is not None else GENERAL
            return Topology(node_count=n, links=tuple(links), kind=kind)
    raise GenerationError(
        f"no connected graph after {max_retries} samples (n={n}, p={edge_prob})"
    )


def load_edge_list(text):
    """Parse "u,v[,mu]" lines into (Topology, mu array or None).

    Duplicate undirected edges collapse onto the first occurrence; if any
    line carries a third column, every line must.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    links, mus, seen = [], [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise EdgeListError(f"expected 'u,v' or 'u,v,mu', got {raw!r}", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"non-integer node id in {raw!r}", lineno) from None
        if u == v:
            raise EdgeListError(f"self-loop ({u},{v})", lineno)
        mu = None
        if len(parts) == 3:
            try:
                mu = float(parts[2])
            except ValueError:
                raise EdgeListError(f"bad mu value {parts[2]!r}", lineno) from None
            if not 0.0 < mu < 1.0:
                raise EdgeListError(f"mu must lie in (0,1), got {mu}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen[key] = lineno
        links.append(key)
        mus.append(mu)
    if not links:
        raise EdgeListError("edge list contains no links")
    with_mu = [m is not None for m in mus]
    if any(with_mu) and not all(with_mu):
        raise EdgeListError("mu column present on some lines but not all")
    node_count = max(max(u, v) for u, v in links)
    try:
        kind = STAR if _find_hub(node_count, links) is not None else GENERAL
        topo = Topology(node_count=node_count, links=tuple(links), kind=kind)
    except ValueError as exc:
        raise EdgeListError(str(exc)) from None
    mu_vec = np.array(mus, dtype=float) if all(with_mu) else None
    return topo, mu_vec


def serialize_edge_list(topo, mu=None):
    """Inverse of load_edge_list for (nodes, links, mu)."""
    lines = []
    for idx, (u, v) in enumerate(topo.links):
        if mu is None:
            lines.append(f"{u},{v}")
        else:
            lines.append(f"{u},{v},{format(float(mu[idx]), '.17g')}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProbeDescriptor:
    """One probing experiment.

    Unicast: `path_links` lists the traversed link indices in path order,
    `source`/`destinations` hold the end nodes.  RI multicast: `root_link`
    names the rooted link; destinations are every end node but the root's.
    """

    mode: str
    path_links: tuple = ()
    root_link: int = 0
    source: int = 0
    destinations: tuple = ()

    def label(self):
        if self.mode == UNICAST:
            return f"{self.source}<->{self.destinations[0]}"
        return f"root={self.root_link}"


@dataclass(frozen=True)
class MeasurementMatrix:
    """Binary probe-by-link incidence matrix with its (pseudo-)inverse."""

    entries: np.ndarray  # (M, L) 0/1 floats
    kappa: np.ndarray = field(default=None)  # (L, M): inverse if square, else pinv
    square: bool = False

    def __post_init__(self):
        q = np.asarray(self.entries, dtype=float)
        m, ell = q.shape
        if np.linalg.matrix_rank(q, tol=RANK_TOL) < ell:
            raise IdentifiabilityError(
                f"measurement matrix has column rank < {ell}; "
                f"unidentifiable links: {unidentifiable_links(q)}"
            )
        object.__setattr__(self, "entries", q)
        object.__setattr__(self, "square", m == ell)
        if self.kappa is None:
            kap = np.linalg.inv(q) if m == ell else np.linalg.pinv(q)
            object.__setattr__(self, "kappa", kap)

    @property
    def probe_count(self):
        return self.entries.shape[0]

    @property
    def link_count(self):
        return self.entries.shape[1]


def unidentifiable_links(q):
    """1-based links whose unit vector is outside the row space of Q."""
    q = np.asarray(q, dtype=float)
    if q.shape[0] == 0:
        return list(range(1, q.shape[1] + 1))
    bad = []
    for ell in range(q.shape[1]):
        target = np.zeros(q.shape[1])
        target[ell] = 1.0
        x = np.linalg.lstsq(q.T, target, rcond=None)[0]
        if np.sum((q.T @ x - target) ** 2) > 1e-18:
            bad.append(ell + 1)
    return bad


@dataclass(frozen=True)
class ProbeSet:
    """Probes plus their measurement matrix over a fixed topology."""

    topology: Topology
    probes: tuple
    matrix: MeasurementMatrix

    def __post_init__(self):
        if len(self.probes) != self.matrix.probe_count:
            raise ValueError("probe list and matrix row count disagree")

    @property
    def mode(self):
        return self.probes[0].mode

    @property
    def probe_count(self):
        return len(self.probes)

    @property
    def link_count(self):
        return self.matrix.link_count

    @property
    def full_ri_star(self):
        """True for the canonical quantum set: probe m rooted at link m, M = L."""
        return (
            self.mode == RI_MULTICAST
            and self.probe_count == self.link_count
            and all(p.root_link == i + 1 for i, p in enumerate(self.probes))
        )


def _leaf_of(topo, link_idx):
    """End node of a star link (the endpoint that is not the hub)."""
    hub = topo.hub
    u, v = topo.links[link_idx - 1]
    return v if u == hub else u


def canonical_star_unicast_probes(topo):
    """Square invertible unicast set on a star, M = L, two links per probe.

    Odd L uses the closed link cycle (1,2),(2,3),...,(L,1); even L would make
    that cycle singular, so its closing pair is replaced by the (1,3) chord.
    Probes are listed in lexicographic link-pair order.
    """
    if topo.kind != STAR:
        raise UnsupportedTopologyError("canonical unicast probes need a star")
    num_links = topo.link_count
    if num_links < 3:
        raise IdentifiabilityError(
            "no invertible two-ones-per-row square matrix exists for L < 3"
        )
    if num_links % 2 == 1:
        pairs = [tuple(sorted((m, m % num_links + 1))) for m in range(1, num_links + 1)]
    else:
        pairs = [(m, m + 1) for m in range(1, num_links)] + [(1, 3)]
    pairs.sort()
    probes = []
    q = np.zeros((num_links, num_links))
    for row, (i, j) in enumerate(pairs):
        a, b = _leaf_of(topo, i), _leaf_of(topo, j)
        probes.append(
            ProbeDescriptor(
                mode=UNICAST,
                path_links=(i, j),
                source=a,
                destinations=(b,),
            )
        )
        q[row, i - 1] = 1.0
        q[row, j - 1] = 1.0
    return ProbeSet(topology=topo, probes=tuple(probes), matrix=MeasurementMatrix(q))


def _lex_shortest_path(topo, adj, src, dst):
    """Lexicographically smallest shortest node path from src to dst."""
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        u = queue.popleft()
        for w, _ in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    if src not in dist:
        return None
    path = [src]
    cur = src
    while cur != dst:
        cur = min(w for w, _ in adj[cur] if dist.get(w, -1) == dist[cur] - 1)
        path.append(cur)
    return path


def _path_to_links(topo, node_path):
    index = {}
    for idx, (u, v) in enumerate(topo.links, start=1):
        index[(u, v)] = idx
        index[(v, u)] = idx
    return tuple(index[(a, b)] for a, b in zip(node_path, node_path[1:]))


def general_unicast_probes(topo, monitors=None, max_probes=None):
    """Shortest-path unicast probes between monitor pairs, greedy to rank L.

    Pairs are visited in lexicographic order; a pair's probe is added while
    it raises the rank of Q, and once rank L is reached the skipped pairs
    are appended (in the same order) until `max_probes`.
    """
    if monitors is None:
        monitors = list(range(1, topo.node_count + 1))
    monitors = sorted(set(int(m) for m in monitors))
    if not monitors:
        raise ValueError("monitor set is empty")
    for m in monitors:
        if not 1 <= m <= topo.node_count:
            raise ValueError(f"monitor {m} is not a node")
    adj = topo.adjacency()
    num_links = topo.link_count
    candidates = []
    for i, u in enumerate(monitors):
        for v in monitors[i + 1 :]:
            node_path = _lex_shortest_path(topo, adj, u, v)
            links = _path_to_links(topo, node_path)
            row = np.zeros(num_links)
            row[[ell - 1 for ell in links]] = 1.0
            candidates.append((u, v, links, row))

    rows, probes, skipped = [], [], []
    rank = 0
    for u, v, links, row in candidates:
        trial = np.vstack(rows + [row]) if rows else row[None, :]
        new_rank = np.linalg.matrix_rank(trial, tol=RANK_TOL)
        if new_rank > rank:
            rank = new_rank
            rows.append(row)
            probes.append((u, v, links))
        else:
            skipped.append((u, v, links, row))
    if rank < num_links:
        q = np.vstack(rows) if rows else np.zeros((0, num_links))
        raise IdentifiabilityError(
            f"monitor pairs reach rank {rank} < {num_links}; "
            f"unidentifiable links: {unidentifiable_links(q)}"
        )
    if max_probes is not None:
        for u, v, links, row in skipped:
            if len(probes) >= max_probes:
                break
            rows.append(row)
            probes.append((u, v, links))
    descriptors = tuple(
        ProbeDescriptor(mode=UNICAST, path_links=links, source=u, destinations=(v,))
        for u, v, links in probes
    )
    return ProbeSet(
        topology=topo,
        probes=descriptors,
        matrix=MeasurementMatrix(np.vstack(rows[: len(descriptors)])),
    )


def ri_multicast_probes(topo):
    """Root-independent multicast set on a star: probe m roots link m."""
    if topo.kind != STAR:
        raise UnsupportedTopologyError("RI multicast probes need a star topology")
    num_links = topo.link_count
    probes = []
    q = np.ones((num_links, num_links)) - np.eye(num_links)
    for root in range(1, num_links + 1):
        dests = tuple(
            _leaf_of(topo, ell) for ell in range(1, num_links + 1) if ell != root
        )
        probes.append(
            ProbeDescriptor(
                mode=RI_MULTICAST,
                root_link=root,
                source=_leaf_of(topo, root),
                destinations=dests,
            )
        )
    return ProbeSet(topology=topo, probes=tuple(probes), matrix=MeasurementMatrix(q))
