"""Line topologies: every node synchronizes to the virtual clock of its upstream neighbour.

Link ``h`` carries its own offset/skew dynamics of node ``h`` relative to
node ``h-1`` under that hop's environment, so a node's clock relative to the
root accumulates the link states above it. Node ``h`` exchanges with node
``h-1``. The upstream node stamps ``t2`` and ``t3``
by reading its local clock and converting the reading with its latest
virtual clock, i.e. the estimate from its own window ending at the same
step. Evaluation truth always refers to the root.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import streams
from .clockdyn import HOP_PROFILES, NoiseProfile, StateTrajectory, ThermalProfile, simulate_states
from .exchange import SW_WIFI, Dataset, DelayProfile, QuantizationSpec, exchanges_from_draws, sample_delays
from .harness import ErrorStats
from .neural import NeuralModel, TrainConfig, TrainingSet, build_training_set, forward, train, window_features
from .splines import predict_batch, sliding_fits


class ChainOrderError(RuntimeError):
    """A hop was asked to run before its upstream estimator exists."""


@dataclass(frozen=True)
class HopEstimator:
    """``S1`` (order-1 spline), ``NN`` (``model`` on top of S1) or ``oracle`` (exact root time)."""

    kind: str = "S1"
    K: int = 20
    model: NeuralModel | None = None

    def __post_init__(self):
        if self.kind not in ("S1", "NN", "oracle"):
            raise ValueError(f"unknown hop estimator {self.kind!r}")
        if self.kind == "NN":
            if self.model is None:
                raise ValueError("NN hop estimator needs a model")
            object.__setattr__(self, "K", self.model.K)

    @property
    def warmup(self) -> int:
        return 0 if self.kind == "oracle" else self.K


@dataclass(frozen=True)
class HopChainConfig:
    thermal: tuple[ThermalProfile, ...] = HOP_PROFILES
    delays: DelayProfile = SW_WIFI
    quant: QuantizationSpec = QuantizationSpec()
    noise: NoiseProfile = NoiseProfile()
    tau: float = 1.0

    def __post_init__(self):
        if len(self.thermal) < 1:
            raise ValueError("a chain needs at least one hop")

    @property
    def H(self) -> int:
        return len(self.thermal)

    def with_seed(self, seed: int) -> "HopChainConfig":
        return replace(self, noise=replace(self.noise, seed=seed))

    def truncated(self, H: int) -> "HopChainConfig":
        return replace(self, thermal=tuple(self.thermal[:H]))

    def reversed(self) -> "HopChainConfig":
        return replace(self, thermal=tuple(reversed(self.thermal)))


@dataclass
class VirtualClock:
    """Local-to-root time map of one node, one estimate per step from ``first_step``."""

    first_step: int
    coef: np.ndarray | None = None
    x0: np.ndarray | None = None
    correction: np.ndarray | None = None

    def __call__(self, steps, local):
        i = np.asarray(steps) - self.first_step
        if np.any(i < 0) or np.any(i >= len(self.x0)):
            raise ChainOrderError(f"virtual clock defined for steps {self.first_step}.."
                                  f"{self.first_step + len(self.x0) - 1} only")
        return predict_batch(self.coef[i], self.x0[i], local) + self.correction[i]


def virtual_clock(data: Dataset, est: HopEstimator) -> VirtualClock:
    """Per-step clock map estimated from a hop's own exchanges."""
    first = int(data.k[0]) + est.K
    if est.kind == "S1":
        coef, x0 = sliding_fits(data, est.K, 1)
        return VirtualClock(first, coef, x0, np.zeros(len(x0)))
    wf = window_features(data, est.K)
    return VirtualClock(first, wf.coef, wf.x0, np.asarray(forward(est.model, wf.features)))


@dataclass
class HopResult:
    hop: int
    data: Dataset
    estimator: HopEstimator
    clock: VirtualClock | None
    errors: np.ndarray

    @property
    def stats(self) -> ErrorStats:
        return ErrorStats.of(self.errors)


@dataclass
class ChainResult:
    hops: list[HopResult] = field(default_factory=list)

    def stats(self) -> list[ErrorStats]:
        return [h.stats for h in self.hops]

    def dataset(self) -> Dataset:
        parts = [replace(h.data, hop=np.full(len(h.data), h.hop)) for h in self.hops]
        return Dataset.concat(parts)


def compose(upper: StateTrajectory, link: StateTrajectory) -> StateTrajectory:
    """Root-relative states of a node from its master's and its own link's."""
    return StateTrajectory(link.tau, link.slot_start, upper.theta + link.theta, upper.gamma_rw + link.gamma_rw,
                           upper.gamma_thermal + link.gamma_thermal, link.d)


def node_states(config: HopChainConfig, steps: int, node: int) -> StateTrajectory:
    """Root-relative states of ``node`` (links ``1..node`` composed)."""
    states = None
    for h in range(1, node + 1):
        link = simulate_states(steps, config.tau, config.thermal[h - 1], config.noise, node=h)
        states = link if states is None else compose(states, link)
    return states


def _node_clock(states: StateTrajectory, steps, u):
    return u + states.theta[steps] + states.gamma[steps] * (u - states.slot_start[steps])


def run_chain(config: HopChainConfig, steps: int, estimators: Sequence[HopEstimator] | HopEstimator
              ) -> ChainResult:
    """Simulate hops 1..H in order; hop ``h+1`` starts once hop ``h`` has a virtual clock."""
    H = config.H
    if isinstance(estimators, HopEstimator):
        estimators = [estimators] * H
    if len(estimators) != H:
        raise ValueError(f"{len(estimators)} estimators for {H} hops")
    seed = config.noise.seed
    out = ChainResult()
    upstream = None  # (states, clock) of the previous node, or None for the root
    start = 0
    for h in range(1, H + 1):
        est = estimators[h - 1]
        states = simulate_states(steps, config.tau, config.thermal[h - 1], config.noise, node=h)
        if upstream is not None:
            states = compose(upstream[0], states)
        draws = sample_delays(config.delays, streams.stream(seed, h, streams.DELAYS), steps)
        if start + est.warmup >= steps:
            raise ChainOrderError(f"hop {h} starts at step {start}, too late for {steps} steps")
        receiver = None
        if upstream is not None and upstream[1] is not None:
            up_states, up_clock = upstream
            receiver = (lambda s0, st, vc: lambda idx, u: vc(s0 + idx, _node_clock(st, s0 + idx, u)))(
                start, up_states, up_clock)
        data = exchanges_from_draws(states.tail(start), {k: v[start:] for k, v in draws.items()},
                                    config.quant, receiver, k0=start)
        if est.kind == "oracle":
            clock = None
            errors = np.zeros(len(data))
        else:
            clock = virtual_clock(data, est)
            errors = clock(data.k[est.K:], data.eval_sender[est.K:]) - data.eval_receiver[est.K:]
        out.hops.append(HopResult(h, data, est, clock, errors))
        upstream = (states, clock)
        start += est.warmup
    return out


# -- training databases -------------------------------------------------------

def build_db_link(config: HopChainConfig, steps: int, K: int = 60, train_config: TrainConfig = TrainConfig()
                  ) -> tuple[list[TrainingSet], list[NeuralModel]]:
    """Per-hop databases; hop ``h`` is simulated behind the trained networks of hops ``< h``."""
    dbs: list[TrainingSet] = []
    models: list[NeuralModel] = []
    for h in range(1, config.H + 1):
        ests = [HopEstimator("NN", model=m) for m in models] + [HopEstimator("S1", K)]
        chain = run_chain(config.truncated(h), steps, ests)
        db = build_training_set(chain.hops[-1].data, K)
        dbs.append(db)
        models.append(train(db, replace(train_config, seed=train_config.seed + h)))
    return dbs, models


def direct_to_root(config: HopChainConfig, steps: int, node: int) -> Dataset:
    """Exchanges of ``node`` wired straight to the root: its own oscillator, no hop error.

    Equals hop ``node`` of a chain whose upstream virtual clocks are exact.
    """
    states = node_states(config, steps, node)
    draws = sample_delays(config.delays, streams.stream(config.noise.seed, node, streams.DELAYS), steps)
    return exchanges_from_draws(states, draws, config.quant)


def build_db_genA(config: HopChainConfig, steps: int, K: int = 60) -> TrainingSet:
    """Every node synchronized directly to the root, databases concatenated."""
    parts = [build_training_set(direct_to_root(config, steps, h), K) for h in range(1, config.H + 1)]
    return TrainingSet.concat(parts)


def build_db_genB(config: HopChainConfig, steps: int, K: int = 60, train_config: TrainConfig = TrainConfig()
                  ) -> TrainingSet:
    """Link-by-link databases with the hop/environment assignment reversed, concatenated.

    One network is grown iteratively: the database of hop ``h`` is collected
    with every upstream node running the network trained on hops ``< h``.
    """
    reversed_cfg = config.reversed()
    dbs: list[TrainingSet] = []
    model = None
    for h in range(1, config.H + 1):
        upstream = [HopEstimator("NN", model=model)] * (h - 1) if model is not None else []
        chain = run_chain(reversed_cfg.truncated(h), steps, upstream + [HopEstimator("S1", K)])
        dbs.append(build_training_set(chain.hops[-1].data, K))
        if h < config.H:
            model = train(TrainingSet.concat(dbs), replace(train_config, seed=train_config.seed + h))
    return TrainingSet.concat(dbs)


@dataclass(frozen=True)
class HopTableRow:
    method: str
    hop: int
    K: int
    sigma: float
    p999: float
    max: float


def hop_table(method: str, result: ChainResult) -> list[HopTableRow]:
    return [HopTableRow(method, h.hop, h.estimator.K, s.sigma, s.p999, s.max)
            for h, s in zip(result.hops, result.stats())]


HOP_METHODS = ("S1", "NN_link", "NN_genA", "NN_genB")


def hop_comparison(config: HopChainConfig, steps: int, train_seed: int, link_steps: int = 100_000,
                   gen_steps: int = 20_000, K_s1: int = 20, K_nn: int = 60,
                   methods: Sequence[str] = HOP_METHODS) -> dict[str, ChainResult]:
    """Test chain under each method; networks are trained on chains seeded with ``train_seed``.

    ``link_steps`` sizes each per-link database, ``gen_steps`` each per-hop
    part of the generalized databases.
    """
    unknown = set(methods) - set(HOP_METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    train_cfg = config.with_seed(train_seed)
    tc = TrainConfig(seed=train_seed)
    out: dict[str, ChainResult] = {}
    for m in methods:
        if m == "S1":
            ests: Sequence[HopEstimator] | HopEstimator = HopEstimator("S1", K_s1)
        elif m == "NN_link":
            _, models = build_db_link(train_cfg, link_steps, K_nn, tc)
            ests = [HopEstimator("NN", model=mod) for mod in models]
        elif m == "NN_genA":
            ests = HopEstimator("NN", model=train(build_db_genA(train_cfg, gen_steps, K_nn), tc))
        else:
            ests = HopEstimator("NN", model=train(build_db_genB(train_cfg, gen_steps, K_nn, tc), tc))
        out[m] = run_chain(config, steps, ests)
    return out


def write_hop_table(rows: Sequence[HopTableRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "hop", "K", "sigma", "p999", "max"])
        for r in rows:
            w.writerow([r.method, r.hop, r.K, format(r.sigma, ".17g"), format(r.p999, ".17g"), format(r.max, ".17g")])
