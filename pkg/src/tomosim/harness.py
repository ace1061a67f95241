"""Monte Carlo experiment runner: configuration, engine, metrics, persistence.

Every (scenario, run, policy) cell is an independent simulation driven by its
own random stream, so cells can execute in any order (or on any number of
workers) without changing the aggregate output; aggregation is a
deterministic reduction applied afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimators, oed, policies, probes, topology
from .errors import ConfigError, InsufficientDataError
from .oed import A_OPTIMAL, CriterionSpec
from .policies import PolicyConfig
from .probes import RngStream, TallyState, record
from .topology import RI_MULTICAST, UNICAST

AGGREGATE_COLUMNS = (
    "policy",
    "t",
    "regret_mean",
    "regret_std",
    "dist_act_mean",
    "dist_act_std",
    "dist_est_mean",
    "dist_est_std",
    "mse_mean",
    "mse_std",
)
METRICS = ("regret", "dist_act", "dist_est", "mse")

GROUND_TRUTH_ITERS = 10_000
D_ALLOCATOR_ITERS = 300


def _take(mapping, context):
    """Return a consuming view over a config dict; leftovers are errors."""
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a key/value table")
    return dict(mapping)


def _finish(leftover, context):
    if leftover:
        raise ConfigError(f"{context}: unknown keys {sorted(leftover)}")


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    links: int = 0
    nodes: int = 0
    edge_prob: float = 0.0
    seed: int = None
    path: str = None

    @classmethod
    def from_dict(cls, data):
        d = _take(data, "topology")
        kind = d.pop("kind", None)
        if kind == "star":
            spec = cls(kind=kind, links=int(d.pop("links")))
        elif kind == "er":
            spec = cls(
                kind=kind,
                nodes=int(d.pop("nodes")),
                edge_prob=float(d.pop("edge_prob")),
                seed=d.pop("seed", None),
            )
        elif kind == "edge_list":
            spec = cls(kind=kind, path=str(d.pop("path")))
        else:
            raise ConfigError(f"topology.kind must be star/er/edge_list, got {kind!r}")
        _finish(d, "topology")
        return spec


@dataclass(frozen=True)
class ProbeSpec:
    mode: str = UNICAST
    monitors: tuple = None
    max_probes: int = None

    @classmethod
    def from_dict(cls, data):
        d = _take(data, "probes")
        mode = d.pop("mode", UNICAST)
        if mode not in (UNICAST, RI_MULTICAST):
            raise ConfigError(f"probes.mode must be unicast/ri_multicast, got {mode!r}")
        monitors = d.pop("monitors", None)
        if monitors is not None:
            monitors = tuple(int(m) for m in monitors)
        max_probes = d.pop("max_probes", None)
        _finish(d, "probes")
        return cls(mode=mode, monitors=monitors, max_probes=max_probes)


@dataclass(frozen=True)
class MuSpec:
    kind: str
    low: float = 0.0
    high: float = 0.0
    values: tuple = None

    @classmethod
    def from_dict(cls, data, probe_mode):
        if data is None:
            high = 1.0 if probe_mode == RI_MULTICAST else 0.9
            return cls(kind="uniform", low=0.1, high=high)
        d = _take(data, "mu")
        kind = d.pop("kind", None)
        if kind == "uniform":
            spec = cls(kind=kind, low=float(d.pop("low")), high=float(d.pop("high")))
            if not 0.0 < spec.low < spec.high <= 1.0:
                raise ConfigError("mu.uniform needs 0 < low < high <= 1")
        elif kind == "values":
            spec = cls(kind=kind, values=tuple(float(v) for v in d.pop("values")))
        elif kind == "edge_list":
            spec = cls(kind=kind)
        else:
            raise ConfigError(f"mu.kind must be uniform/values/edge_list, got {kind!r}")
        _finish(d, "mu")
        return spec


def _policy_from_dict(data, index):
    d = _take(data, f"policies[{index}]")
    kind = d.pop("kind", None)
    kwargs = {}
    if "xi" in d:
        kwargs["xi"] = d.pop("xi")
    if "lazy_batch" in d:
        kwargs["lazy_batch"] = int(d.pop("lazy_batch"))
    if "iter_batch" in d:
        kwargs["iter_batch"] = int(d.pop("iter_batch"))
    if "label" in d:
        kwargs["label"] = str(d.pop("label"))
    _finish(d, f"policies[{index}]")
    if kind not in policies.POLICY_KINDS:
        raise ConfigError(f"policies[{index}].kind invalid: {kind!r}")
    return PolicyConfig(kind=kind, **kwargs)


@dataclass(frozen=True)
class SimConfig:
    """Full experiment description; mirrors the JSON config file exactly."""

    topology: TopologySpec
    probes: ProbeSpec
    mu: MuSpec
    horizon: int
    mc_runs: int = 1
    scenarios: int = 1
    policies: tuple = ()
    criterion: CriterionSpec = field(default_factory=CriterionSpec)
    metric_stride: int = None
    output_dir: str = "out"
    master_seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.mc_runs < 1 or self.scenarios < 1:
            raise ConfigError("mc_runs and scenarios must be >= 1")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate policy labels: {sorted(labels)}")
        if self.metric_stride is not None and self.metric_stride < 1:
            raise ConfigError("metric_stride must be >= 1")

    @property
    def stride(self):
        if self.metric_stride is not None:
            return self.metric_stride
        return max(1, self.horizon // 500)

    @classmethod
    def from_dict(cls, data):
        d = _take(data, "config")
        topo = TopologySpec.from_dict(d.pop("topology"))
        probe_spec = ProbeSpec.from_dict(d.pop("probes", {"mode": UNICAST}))
        mu_spec = MuSpec.from_dict(d.pop("mu", None), probe_spec.mode)
        crit = d.pop("criterion", None)
        if crit is None:
            criterion = CriterionSpec()
        else:
            c = _take(crit, "criterion")
            criterion = CriterionSpec(
                kind=c.pop("kind", A_OPTIMAL), floor=float(c.pop("floor", 1e-6))
            )
            _finish(c, "criterion")
        policy_list = d.pop("policies", None)
        if not policy_list:
            raise ConfigError("config needs a non-empty policies list")
        pols = tuple(_policy_from_dict(p, i) for i, p in enumerate(policy_list))
        try:
            cfg = cls(
                topology=topo,
                probes=probe_spec,
                mu=mu_spec,
                horizon=int(d.pop("horizon")),
                mc_runs=int(d.pop("mc_runs", 1)),
                scenarios=int(d.pop("scenarios", 1)),
                policies=pols,
                criterion=criterion,
                metric_stride=d.pop("metric_stride", None),
                output_dir=str(d.pop("output_dir", "out")),
                master_seed=int(d.pop("master_seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing required config key {exc}") from None
        _finish(d, "config")
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)


@dataclass
class ScenarioContext:
    """Everything fixed within one scenario: topology, probes, truth, oracles."""

    index: int
    probe_set: topology.ProbeSet
    mu: np.ndarray
    criterion: CriterionSpec
    phi_star: np.ndarray
    f_star: float
    evaluate: object  # phi -> criterion value (true mu)
    estimator: object  # tally -> mu_hat
    allocator: object  # mu_hat -> phi
    nu_true: np.ndarray = None  # unicast per-probe success rates
    ri_observed: tuple = None  # per-probe observed 0-based link indices


def _build_topology(spec, master_seed, scenario_idx):
    if spec.kind == "star":
        return topology.build_star(spec.links), None
    if spec.kind == "er":
        if spec.seed is not None:
            seed = int(spec.seed)
        else:
            seed = np.random.SeedSequence(
                master_seed, spawn_key=(0, scenario_idx, 0, 0)
            )
        return topology.build_er(spec.nodes, spec.edge_prob, seed), None
    try:
        text = Path(spec.path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read edge list {spec.path!r}: {exc}") from None
    return topology.load_edge_list(text)


def _build_probe_set(topo, probe_spec):
    if probe_spec.mode == RI_MULTICAST:
        return topology.ri_multicast_probes(topo)
    if topo.kind == topology.STAR and probe_spec.monitors is None:
        return topology.canonical_star_unicast_probes(topo)
    return topology.general_unicast_probes(
        topo, monitors=probe_spec.monitors, max_probes=probe_spec.max_probes
    )


def _draw_mu(mu_spec, link_count, file_mu, master_seed, scenario_idx):
    if mu_spec.kind == "uniform":
        rng = RngStream(master_seed, scenario=scenario_idx, domain=2).generator
        return probes.validate_mu(
            rng.uniform(mu_spec.low, mu_spec.high, link_count), link_count
        )
    if mu_spec.kind == "values":
        return probes.validate_mu(np.array(mu_spec.values), link_count)
    if file_mu is None:
        raise ConfigError("mu.kind=edge_list but the edge list has no mu column")
    return probes.validate_mu(file_mu, link_count)


def _make_estimator(probe_set):
    if probe_set.mode == RI_MULTICAST:
        return lambda tally: estimators.ri_link_mle(tally).mu_hat
    matrix = probe_set.matrix
    if matrix.square:
        return lambda tally: estimators.star_link_mle(tally, matrix).mu_hat
    return lambda tally: estimators.general_link_mle(tally, matrix).mu_hat


def _make_allocator(probe_set, criterion):
    if criterion.kind == A_OPTIMAL:
        if probe_set.full_ri_star:
            return oed.quantum_a_optimal_allocation
        return lambda mu: oed.surrogate_a_optimal_allocation(mu, probe_set.matrix)
    if probe_set.full_ri_star or (probe_set.mode == UNICAST and probe_set.matrix.square):
        # D-optimal on either star family: det I factorizes per probe, so the
        # maximizer is uniform regardless of mu
        uniform = np.full(probe_set.probe_count, 1.0 / probe_set.probe_count)
        return lambda mu: uniform
    return lambda mu: oed.simplex_optimize(mu, probe_set, criterion, D_ALLOCATOR_ITERS)


def _ground_truth_allocation(probe_set, mu, criterion):
    if criterion.kind == A_OPTIMAL:
        if probe_set.full_ri_star:
            return oed.quantum_a_optimal_allocation(mu)
        if probe_set.mode == UNICAST and probe_set.matrix.square:
            return oed.star_a_optimal_allocation(mu, probe_set.matrix)
        return oed.simplex_optimize(mu, probe_set, criterion, GROUND_TRUTH_ITERS)
    if probe_set.full_ri_star or (probe_set.mode == UNICAST and probe_set.matrix.square):
        return np.full(probe_set.probe_count, 1.0 / probe_set.probe_count)
    return oed.simplex_optimize(mu, probe_set, criterion, GROUND_TRUTH_ITERS)


def _make_evaluator(probe_set, mu, criterion):
    if criterion.kind == A_OPTIMAL:
        if probe_set.full_ri_star:
            variances = mu * (1.0 - mu)

            def evaluate(phi):
                slack = 1.0 - phi
                if np.any(slack <= 0.0):
                    return np.inf
                return float(np.sum(variances / slack))

            return evaluate
        if probe_set.mode == UNICAST and probe_set.matrix.square:
            weights = oed.star_allocation_weights(mu, probe_set.matrix)

            def evaluate(phi):
                if np.any(phi <= 0.0):
                    return np.inf
                return float(np.sum(weights / phi))

            return evaluate
    stack = oed.probe_fim_stack(probe_set, mu)
    kind = criterion.kind

    def evaluate(phi):
        info = oed.mix_fim(stack, phi)
        if kind == A_OPTIMAL:
            return oed._trace_inverse(info)
        sign, logdet = np.linalg.slogdet(info)
        return float(np.exp(-logdet)) if sign > 0 else np.inf

    return evaluate


def build_scenario(config, scenario_idx):
    """Construct the fixed per-scenario context (topology, mu, oracles)."""
    topo, file_mu = _build_topology(config.topology, config.master_seed, scenario_idx)
    probe_set = _build_probe_set(topo, config.probes)
    if config.horizon < probe_set.probe_count:
        raise ConfigError("horizon must be at least the number of probes")
    mu = _draw_mu(config.mu, topo.link_count, file_mu, config.master_seed, scenario_idx)
    phi_star = _ground_truth_allocation(probe_set, mu, config.criterion)
    evaluate = _make_evaluator(probe_set, mu, config.criterion)
    ctx = ScenarioContext(
        index=scenario_idx,
        probe_set=probe_set,
        mu=mu,
        criterion=config.criterion,
        phi_star=phi_star,
        f_star=evaluate(phi_star),
        evaluate=evaluate,
        estimator=_make_estimator(probe_set),
        allocator=_make_allocator(probe_set, config.criterion),
    )
    if probe_set.mode == UNICAST:
        ctx.nu_true = np.array(
            [probes.unicast_success_prob(p, mu) for p in probe_set.probes]
        )
    else:
        ctx.ri_observed = tuple(
            probes.ri_observed_links(p, topo.link_count) for p in probe_set.probes
        )
    return ctx


def make_policy(cfg, ctx, horizon):
    """Instantiate the runtime policy object for one config entry."""
    probe_set = ctx.probe_set
    if cfg.kind == policies.UNIFORM:
        return policies.UniformPolicy(probe_set)
    if cfg.kind == policies.ORACLE:
        return policies.OraclePolicy(probe_set, ctx.phi_star)
    if cfg.kind == policies.ITERATIVE:
        return policies.IterativePolicy(
            probe_set, ctx.estimator, ctx.allocator, batch=cfg.iter_batch
        )
    _, s0 = policies.resolve_xi(cfg.xi, horizon, probe_set.probe_count)
    lazy = cfg.lazy_batch if cfg.kind == policies.OPAL_LAZY else 1
    return policies.ChasingPolicy(
        probe_set, ctx.estimator, ctx.allocator, s0, lazy_batch=lazy
    )


@dataclass
class RunSeries:
    """Metric traces for one (scenario, run, policy) cell."""

    policy: str
    scenario: int
    run: int
    t: np.ndarray
    regret: np.ndarray
    dist_act: np.ndarray
    dist_est: np.ndarray
    mse: np.ndarray


def run_once(config, ctx, policy_cfg, run_idx, policy_idx):
    """Execute one cell for T rounds and record metrics every stride."""
    probe_set = ctx.probe_set
    mu = ctx.mu
    policy = make_policy(policy_cfg, ctx, config.horizon)
    rng = RngStream(
        config.master_seed,
        scenario=ctx.index,
        run=run_idx,
        policy=policy_idx,
        domain=1,
    ).generator
    policy.reset(rng)
    tally = policy.tally
    stride = config.stride
    unicast = probe_set.mode == UNICAST
    rec_t, rec = [], {name: [] for name in METRICS}
    for t in range(1, config.horizon + 1):
        m = policy.step(t)
        if unicast:
            bit = int(rng.random() < ctx.nu_true[m])
            tally.B[m] += bit
        else:
            observed = ctx.ri_observed[m]
            bits = rng.random(observed.size) < mu[observed]
            tally.A[m, observed] += bits
        tally.S[m] += 1
        if t % stride == 0:
            phi_t = tally.S / t
            rec_t.append(t)
            rec["regret"].append(ctx.evaluate(phi_t) - ctx.f_star)
            rec["dist_act"].append(float(np.linalg.norm(ctx.phi_star - phi_t)))
            rec["dist_est"].append(
                float(np.linalg.norm(ctx.phi_star - policy.estimated_allocation()))
            )
            try:
                mu_hat = ctx.estimator(tally)
                rec["mse"].append(float(np.sum((mu_hat - mu) ** 2)))
            except InsufficientDataError:
                rec["mse"].append(np.inf)
    return RunSeries(
        policy=policy_cfg.label,
        scenario=ctx.index,
        run=run_idx,
        t=np.array(rec_t, dtype=np.int64),
        regret=np.array(rec["regret"]),
        dist_act=np.array(rec["dist_act"]),
        dist_est=np.array(rec["dist_est"]),
        mse=np.array(rec["mse"]),
    )


def _mean_std(block):
    """Column means/stds with +inf sentinels wherever a column has one."""
    mean = block.mean(axis=0)
    with np.errstate(invalid="ignore"):
        std = block.std(axis=0)
    bad = ~np.isfinite(block).all(axis=0)
    mean = np.where(bad, np.inf, mean)
    std = np.where(bad, np.inf, std)
    return mean, std


@dataclass
class ExperimentResult:
    """Aggregated experiment output plus the raw per-cell series."""

    config: SimConfig
    t: np.ndarray
    aggregate: dict  # label -> {metric_mean/std arrays}
    per_scenario: dict  # (label, scenario) -> {metric_mean/std arrays}
    series: list
    slopes: dict

    def aggregate_rows(self):
        rows = []
        for cfg in self.config.policies:
            agg = self.aggregate[cfg.label]
            for i, t in enumerate(self.t):
                row = [cfg.label, int(t)]
                for metric in METRICS:
                    row.append(agg[f"{metric}_mean"][i])
                    row.append(agg[f"{metric}_std"][i])
                rows.append(row)
        return rows

    def write_outputs(self, out_dir=None):
        """Write aggregate.csv, scenarios.csv, and summary.json; return paths."""
        out = Path(out_dir if out_dir is not None else self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        agg_path = out / "aggregate.csv"
        with agg_path.open("w", newline="") as fh:
            fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
            for row in self.aggregate_rows():
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        scen_path = out / "scenarios.csv"
        with scen_path.open("w", newline="") as fh:
            fh.write("policy,scenario," + ",".join(AGGREGATE_COLUMNS[1:]) + "\n")
            for cfg in self.config.policies:
                for s in range(self.config.scenarios):
                    block = self.per_scenario[(cfg.label, s)]
                    for i, t in enumerate(self.t):
                        row = [cfg.label, s, int(t)]
                        for metric in METRICS:
                            row.append(block[f"{metric}_mean"][i])
                            row.append(block[f"{metric}_std"][i])
                        fh.write(",".join(_fmt(v) for v in row) + "\n")
        summary_path = out / "summary.json"
        summary = {"policies": {}}
        for cfg in self.config.policies:
            agg = self.aggregate[cfg.label]
            summary["policies"][cfg.label] = {
                "final": {
                    f"{metric}_mean": _json_num(agg[f"{metric}_mean"][-1])
                    for metric in METRICS
                },
                "regret_slope": _json_num(self.slopes[cfg.label]),
            }
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return agg_path, scen_path, summary_path


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


def _json_num(value):
    value = float(value)
    if math.isfinite(value):
        return value
    return "inf" if value > 0 else "-inf"


def run_experiment(config, write=True):
    """Run scenarios x runs x policies, aggregate, and persist the outputs."""
    all_series = []
    per_scenario = {}
    rec_t = None
    for s in range(config.scenarios):
        ctx = build_scenario(config, s)
        for policy_idx, cfg in enumerate(config.policies):
            runs = []
            for r in range(config.mc_runs):
                series = run_once(config, ctx, cfg, r, policy_idx)
                runs.append(series)
                all_series.append(series)
            rec_t = runs[0].t
            block = {}
            for metric in METRICS:
                stack = np.vstack([getattr(rs, metric) for rs in runs])
                mean, std = _mean_std(stack)
                block[f"{metric}_mean"] = mean
                block[f"{metric}_std"] = std
            per_scenario[(cfg.label, s)] = block
    aggregate = {}
    for cfg in config.policies:
        agg = {}
        for metric in METRICS:
            scen_means = np.vstack(
                [
                    per_scenario[(cfg.label, s)][f"{metric}_mean"]
                    for s in range(config.scenarios)
                ]
            )
            if config.scenarios > 1:
                mean, std = _mean_std(scen_means)
            else:
                mean = scen_means[0]
                std = per_scenario[(cfg.label, 0)][f"{metric}_std"]
            agg[f"{metric}_mean"] = mean
            agg[f"{metric}_std"] = std
        aggregate[cfg.label] = agg
    slopes = {
        cfg.label: fit_regret_slope(rec_t, aggregate[cfg.label]["regret_mean"])
        for cfg in config.policies
    }
    result = ExperimentResult(
        config=config,
        t=rec_t,
        aggregate=aggregate,
        per_scenario=per_scenario,
        series=all_series,
        slopes=slopes,
    )
    if write:
        result.write_outputs()
    return result


def fit_regret_slope(t, regret_mean, window=10.0):
    """Least-squares slope of log regret vs log t over the trailing window.

    The window keeps recorded points with t >= max(t)/window (the last decade
    for the default); non-finite or nonpositive regret points are dropped.
    Returns nan when fewer than two usable points remain.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(regret_mean, dtype=float)
    keep = (t >= t.max() / window) & np.isfinite(values) & (values > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[keep]), np.log(values[keep]), 1)[0])
