"""Scenario configuration, the simulate-then-estimate pipeline and error reports.

Phase 1 writes a dataset of exchanges; phase 2 runs every estimator on the
same rows. Statistics exclude the first K exchanges of a dataset, for which
no full window exists.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import streams
from .clockdyn import THERMAL_PROFILES, NoiseProfile, ThermalProfile, simulate_states
from .exchange import (HW_WIFI, HW_WSN, HW_WSN_RESOLUTION, SW_WIFI, SW_WSN, Dataset, Delay, DelayProfile,
                       QuantizationSpec, read_dataset, simulate_exchanges, write_dataset)
from .neural import NeuralModel, TrainConfig, build_training_set, nn_predict, train
from .splines import FITTERS, predict_batch, sliding_fits

DELAY_PROFILES = {"sw_wifi": SW_WIFI, "hw_wifi": HW_WIFI, "sw_wsn": SW_WSN, "hw_wsn": HW_WSN}
SPLINE_ORDERS = {"S1": 1, "S2": 2, "S3": 3}
NN_FITTERS = {"NN": "ols", "NN-minfilter": "minfilter"}
ESTIMATORS = tuple(SPLINE_ORDERS) + tuple(NN_FITTERS)


class ConfigError(ValueError):
    pass


class MissingModelError(LookupError):
    pass


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative description of one simulation scenario.

    ``delay`` is one of the named in-node latency tables, ``exp`` (zero
    in-node latency, exponential propagation with mean ``exp_mean``) or
    ``composite`` (``sw_wifi`` latencies with exponential propagation).
    ``thermal`` is a named profile or a :class:`ThermalProfile`.
    """

    thermal: str | ThermalProfile = "omega_norm"
    delay: str = "sw_wifi"
    n_mu: float = 1.0
    n_sigma: float = 1.0
    exp_mean: float = 1e-6
    tau: float = 1.0
    steps: int = 100_000
    train_steps: int | None = None
    K: tuple[int, ...] = (20,)
    estimators: tuple[str, ...] = ("S1",)
    seed: int = 0
    var_theta: float = 1e-17
    var_gamma: float = 1e-19

    def __post_init__(self):
        object.__setattr__(self, "K", tuple(int(k) for k in np.atleast_1d(self.K)))
        object.__setattr__(self, "estimators", tuple(np.atleast_1d(self.estimators).tolist()))
        if isinstance(self.thermal, str) and self.thermal not in THERMAL_PROFILES:
            raise ConfigError(f"unknown thermal profile {self.thermal!r}; known: {sorted(THERMAL_PROFILES)}")
        if self.delay not in DELAY_PROFILES and self.delay not in ("exp", "composite"):
            raise ConfigError(f"unknown delay scenario {self.delay!r}")
        if self.steps <= 0 or (self.train_steps is not None and self.train_steps <= 0):
            raise ConfigError("steps must be positive")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.n_mu < 0 or self.n_sigma < 0 or self.exp_mean < 0:
            raise ConfigError("n_mu, n_sigma and exp_mean must be non-negative")
        if any(k < 1 for k in self.K):
            raise ConfigError(f"K values must be at least 1: {self.K}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; known: {list(ESTIMATORS)}")

    def thermal_profile(self) -> ThermalProfile:
        return THERMAL_PROFILES[self.thermal] if isinstance(self.thermal, str) else self.thermal

    def delay_profile(self) -> DelayProfile:
        exp = Delay("exp", self.exp_mean)
        if self.delay == "exp":
            base = DelayProfile(prop_sr=exp, prop_rs=exp)
        elif self.delay == "composite":
            base = replace(SW_WIFI, prop_sr=exp, prop_rs=exp)
        else:
            base = DELAY_PROFILES[self.delay]
        return replace(base, n_mu=self.n_mu, n_sigma=self.n_sigma)

    def quantization(self) -> QuantizationSpec:
        return QuantizationSpec(HW_WSN_RESOLUTION if self.delay == "hw_wsn" else 0.0)

    def noise_profile(self, seed: int | None = None) -> NoiseProfile:
        return NoiseProfile(self.var_theta, self.var_gamma, self.seed if seed is None else seed)

    @property
    def train_seed(self) -> int:
        return self.seed + streams.TRAIN_SEED_OFFSET

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K"] = list(self.K)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        doc = dict(doc)
        if isinstance(doc.get("thermal"), Mapping):
            try:
                doc["thermal"] = ThermalProfile(**doc["thermal"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad thermal profile: {exc}") from None
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# -- metrics ----------------------------------------------------------------

def p999(errors) -> float:
    """Nearest-rank 99.9th percentile of ``|errors|``."""
    a = np.abs(np.asarray(errors, dtype=float)).ravel()
    if a.size == 0:
        raise ValueError("p999 of an empty sequence")
    rank = math.ceil(0.999 * a.size)
    return float(np.partition(a, rank - 1)[rank - 1])


@dataclass(frozen=True)
class ErrorStats:
    sigma: float
    p999: float
    max: float
    mean: float
    n: int

    @classmethod
    def of(cls, errors) -> "ErrorStats":
        e = np.asarray(errors, dtype=float)
        return cls(float(np.std(e)), p999(e), float(np.max(np.abs(e))), float(np.mean(e)), int(e.size))


@dataclass(frozen=True)
class ReportRow:
    estimator: str
    K: int
    sigma: float
    p999: float
    max: float
    mean: float = 0.0
    n: int = 0
    tau: float = 1.0


REPORT_COLUMNS = tuple(f.name for f in fields(ReportRow))


@dataclass
class ErrorReport:
    rows: list[ReportRow] = field(default_factory=list)
    digest: str = ""

    def add(self, estimator: str, K: int, stats: ErrorStats, tau: float = 1.0) -> ReportRow:
        row = ReportRow(estimator, K, stats.sigma, stats.p999, stats.max, stats.mean, stats.n, tau)
        self.rows.append(row)
        return row

    def get(self, estimator: str, K: int, tau: float | None = None) -> ReportRow:
        for r in self.rows:
            if r.estimator == estimator and r.K == K and (tau is None or r.tau == tau):
                return r
        raise KeyError((estimator, K, tau))

    def curve(self, estimator: str) -> tuple[np.ndarray, np.ndarray]:
        rows = sorted((r for r in self.rows if r.estimator == estimator), key=lambda r: r.K)
        return np.array([r.K for r in rows]), np.array([r.p999 for r in rows])

    def best(self, estimator: str) -> ReportRow:
        rows = [r for r in self.rows if r.estimator == estimator]
        if not rows:
            raise KeyError(estimator)
        return min(rows, key=lambda r: r.p999)

    @property
    def estimators(self) -> list[str]:
        return list(dict.fromkeys(r.estimator for r in self.rows))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([v if isinstance(v, (str, int)) else format(v, ".17g") for v in asdict(r).values()])

    @classmethod
    def read_csv(cls, path) -> "ErrorReport":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            types = {f.name: f.type for f in fields(ReportRow)}
            conv = {"str": str, "int": int, "float": float}
            rows = [ReportRow(**{k: conv[types[k]](v) for k, v in rec.items()}) for rec in reader]
        return cls(rows)


# -- phase 1 ----------------------------------------------------------------

def simulate(config: ScenarioConfig, seed: int | None = None, steps: int | None = None) -> Dataset:
    """Exchanges of one slave synchronizing directly to the reference."""
    seed = config.seed if seed is None else seed
    states = simulate_states(steps or config.steps, config.tau, config.thermal_profile(),
                             config.noise_profile(seed))
    return simulate_exchanges(states, config.delay_profile(), config.quantization(), seed)


def run_phase1(config: ScenarioConfig, out_path=None) -> Dataset:
    data = simulate(config)
    if out_path is not None:
        write_dataset(data, out_path)
    return data


# -- phase 2 ----------------------------------------------------------------

def dataset_digest(data: Dataset) -> str:
    h = hashlib.sha256()
    for c in ("t1", "t2", "t3", "t4", "eval_sender", "eval_receiver"):
        h.update(np.ascontiguousarray(getattr(data, c)).tobytes())
    return h.hexdigest()


def estimate(data: Dataset, estimator: str, K: int, model: NeuralModel | None = None) -> np.ndarray:
    """Receiver-time estimates at the evaluation instants of rows ``K .. N-1``."""
    if K >= len(data):
        raise ValueError(f"K={K} needs more than {len(data)} exchanges")
    if estimator in SPLINE_ORDERS:
        coef, x0 = sliding_fits(data, K, SPLINE_ORDERS[estimator])
        return predict_batch(coef, x0, data.eval_sender[K:])
    if estimator in NN_FITTERS:
        if model is None:
            raise MissingModelError(f"{estimator} at K={K} needs a trained model")
        if model.K != K:
            raise ValueError(f"model was trained for K={model.K}, asked for K={K}")
        return nn_predict(model, data, FITTERS[NN_FITTERS[estimator]])
    raise ConfigError(f"unknown estimator {estimator!r}")


def estimation_errors(data: Dataset, estimator: str, K: int, model: NeuralModel | None = None) -> np.ndarray:
    return estimate(data, estimator, K, model) - data.eval_receiver[K:]


Models = Mapping[tuple[str, int], NeuralModel]


def run_phase2(data: Dataset | str | Path, estimators: Sequence[str], Ks: Sequence[int],
               models: Models | None = None, tau: float = 1.0) -> ErrorReport:
    """One report row per (estimator, K) over the same dataset.

    Neural estimators are evaluated at the K values for which ``models``
    holds a network; requesting one with no model at all is an error.
    """
    if not isinstance(data, Dataset):
        data = read_dataset(data)
    models = models or {}
    report = ErrorReport(digest=dataset_digest(data))
    for est in estimators:
        if est in NN_FITTERS:
            ks = [k for k in Ks if (est, k) in models]
            if not ks:
                raise MissingModelError(f"no model supplied for {est}")
        else:
            ks = list(Ks)
        for k in ks:
            e = estimation_errors(data, est, k, models.get((est, k)))
            report.add(est, k, ErrorStats.of(e), tau)
    return report


def train_nn(config: ScenarioConfig, K: int, estimator: str = "NN", train_config: TrainConfig | None = None,
             data: Dataset | None = None) -> NeuralModel:
    """Network trained on a database simulated with the scenario's training seed."""
    if data is None:
        data = simulate(config, config.train_seed, config.train_steps or config.steps)
    tc = train_config or TrainConfig(seed=config.train_seed)
    return train(build_training_set(data, K, FITTERS[NN_FITTERS[estimator]]), tc)


def run_experiment(config: ScenarioConfig, train_config: TrainConfig | None = None,
                   models: Models | None = None) -> tuple[ErrorReport, dict]:
    """Both phases in memory; trains any missing neural models first."""
    data = simulate(config)
    models = dict(models or {})
    train_data = None
    for est in config.estimators:
        if est not in NN_FITTERS:
            continue
        for k in config.K:
            if (est, k) not in models:
                if train_data is None:
                    train_data = simulate(config, config.train_seed, config.train_steps or config.steps)
                models[(est, k)] = train_nn(config, k, est, train_config, train_data)
    return run_phase2(data, config.estimators, config.K, models, config.tau), models


@dataclass
class TauSweep:
    reports: dict[float, ErrorReport]

    def best(self) -> ErrorReport:
        """Rows at each estimator's best K for every period."""
        out = ErrorReport()
        for tau, rep in self.reports.items():
            for est in rep.estimators:
                out.rows.append(rep.best(est))
        return out

    def all_rows(self) -> ErrorReport:
        return ErrorReport([r for rep in self.reports.values() for r in rep.rows])


def sweep_tau(config: ScenarioConfig, taus: Sequence[float], estimators: Sequence[str] | None = None,
              train_config: TrainConfig | None = None) -> TauSweep:
    est = tuple(estimators or config.estimators)
    return TauSweep({float(t): run_experiment(replace(config, tau=float(t), estimators=est), train_config)[0]
                     for t in taus})


# -- plot data ----------------------------------------------------------------

def emit_plot_data(report: ErrorReport, path, x: str = "K", metric: str = "p999") -> Path:
    """One CSV: the x column then one ``metric`` column per estimator (blank where absent)."""
    if not report.rows:
        raise ValueError("empty report")
    if x not in ("K", "tau") or metric not in ("sigma", "p999", "max", "mean"):
        raise ValueError(f"bad axis {x!r} or metric {metric!r}")
    ests = report.estimators
    table: dict[float, dict[str, float]] = {}
    for r in report.rows:
        table.setdefault(getattr(r, x), {})[r.estimator] = getattr(r, metric)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x] + ests)
        for xv in sorted(table):
            row = table[xv]
            w.writerow([format(xv, ".17g") if x == "tau" else xv]
                       + [format(row[e], ".17g") if e in row else "" for e in ests])
    return path


def read_plot_data(path) -> tuple[str, np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    xs = np.array([float(r[0]) for r in rows])
    cols = {name: np.array([float(r[i]) if r[i] else np.nan for r in rows])
            for i, name in enumerate(header[1:], start=1)}
    return header[0], xs, cols
