"""Two-way timing message exchange simulation and the phase-1 dataset format.

The receiver's clock is the true-time reference unless a ``receiver_clock``
callable is supplied (multi-hop chains pass the master's virtual clock).
Timestamps follow the delay chain

    u1 = slot + hold_s          t1 = C_S(u1 + d_S^send)
    u2 = u1 + prop_sr           t2 = C_R(u2 + d_R^rec)
    u3 = u2 + hold_r            t3 = C_R(u3 + d_R^send)
    u4 = u3 + prop_rs           t4 = C_S(u4 + d_S^rec)
    u_eval = u4 + hold_eval     truth = (C_S(u_eval), u_eval)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import streams
from .clockdyn import ClockState, StateTrajectory

US = 1e-6


class SlotOverflowError(RuntimeError):
    """The sampled delay chain does not fit inside one synchronization period."""


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Latency:
    """Gaussian in-node latency, clamped at zero when sampled."""

    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.mean < 0 or self.std < 0:
            raise ValueError(f"latency mean/std must be non-negative: {self}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.maximum(rng.normal(self.mean, self.std, size=n), 0.0)


@dataclass(frozen=True)
class Delay:
    """Propagation or hold delay: ``const``, ``exp`` (mean=value) or ``uniform`` on [value, high]."""

    kind: str = "const"
    value: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in ("const", "exp", "uniform"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.value < 0 or (self.kind == "uniform" and self.high < self.value):
            raise ValueError(f"invalid delay {self}")

    @property
    def mean(self) -> float:
        return (self.value + self.high) / 2 if self.kind == "uniform" else self.value

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "const":
            return np.full(n, float(self.value))
        if self.kind == "exp":
            return rng.exponential(self.value, size=n) if self.value > 0 else np.zeros(n)
        return rng.uniform(self.value, self.high, size=n)


@dataclass(frozen=True)
class DelayProfile:
    """In-node latencies per role plus propagation and hold delays.

    Receiver latencies are stored unscaled; ``n_mu`` and ``n_sigma`` multiply
    their means and standard deviations.
    """

    s_send: Latency = Latency()
    s_rec: Latency = Latency()
    r_send: Latency = Latency()
    r_rec: Latency = Latency()
    prop_sr: Delay = Delay()
    prop_rs: Delay = Delay()
    n_mu: float = 1.0
    n_sigma: float = 1.0
    hold_s: Delay = Delay()
    hold_r: Delay = Delay()
    hold_eval: Delay = Delay()

    def receiver(self, lat: Latency) -> Latency:
        return Latency(lat.mean * self.n_mu, lat.std * self.n_sigma)

    @property
    def path_sr_mean(self) -> float:
        return self.prop_sr.mean + self.receiver(self.r_rec).mean - self.s_send.mean

    @property
    def path_rs_mean(self) -> float:
        return self.prop_rs.mean + self.s_rec.mean - self.receiver(self.r_send).mean


@dataclass(frozen=True)
class QuantizationSpec:
    resolution: float = 0.0

    def apply(self, t):
        if self.resolution <= 0:
            return t
        return np.floor(np.asarray(t) / self.resolution) * self.resolution


def _symmetric(send_mean, send_std, rec_mean, rec_std, prop=150e-9) -> DelayProfile:
    send = Latency(send_mean * US, send_std * US)
    rec = Latency(rec_mean * US, rec_std * US)
    return DelayProfile(s_send=send, s_rec=rec, r_send=send, r_rec=rec,
                        prop_sr=Delay("const", prop), prop_rs=Delay("const", prop))


# in-node latency tables (mean, std in microseconds for send then receive)
SW_WIFI = _symmetric(5.4, 0.310, 7.23, 0.580)
HW_WIFI = _symmetric(1.31, 0.046, 8.9, 0.110)
SW_WSN = _symmetric(259.057, 1.291, 346.849, 2.415)
HW_WSN = replace(_symmetric(0.408, 0.0157, 2.769, 0.0374),
                 hold_s=Delay("uniform", 0.0, 31 * US), hold_r=Delay("uniform", 0.0, 31 * US))
HW_WSN_RESOLUTION = 1.0 / 32768.0


@dataclass(frozen=True)
class ExchangeRecord:
    k: int
    t1: float
    t2: float
    t3: float
    t4: float
    eval_sender: float
    eval_receiver: float


COLUMNS = ("k", "t1", "t2", "t3", "t4", "eval_sender", "eval_receiver")


@dataclass
class Dataset:
    """Column-oriented sequence of :class:`ExchangeRecord`."""

    k: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    eval_sender: np.ndarray
    eval_receiver: np.ndarray
    hop: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.int64)
        for name in COLUMNS[1:]:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.hop is not None:
            self.hop = np.asarray(self.hop, dtype=np.int64)

    def __len__(self):
        return len(self.k)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(*(getattr(self, c)[i] for c in COLUMNS),
                           hop=None if self.hop is None else self.hop[i])
        return ExchangeRecord(int(self.k[i]), *(float(getattr(self, c)[i]) for c in COLUMNS[1:]))

    def __iter__(self) -> Iterator[ExchangeRecord]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.hop is None) != (other.hop is None):
            return False
        cols = list(COLUMNS) + (["hop"] if self.hop is not None else [])
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in cols)

    @classmethod
    def from_records(cls, records: Iterable[ExchangeRecord]) -> "Dataset":
        records = list(records)
        return cls(*(np.array([getattr(r, c) for r in records]) for c in COLUMNS))

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        hop = None
        if all(p.hop is not None for p in parts):
            hop = np.concatenate([p.hop for p in parts])
        return cls(*(np.concatenate([getattr(p, c) for p in parts]) for c in COLUMNS), hop=hop)


def sender_clock_read(state: ClockState, true_time, slot_start):
    """Sender clock at a true instant inside the slot (linear intra-slot skew)."""
    return true_time + state.theta + state.gamma * (np.asarray(true_time) - slot_start)


ReceiverClock = Callable[[np.ndarray, np.ndarray], np.ndarray]


def sample_delays(profile: DelayProfile, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    """Draw every delay of ``n`` exchanges in a fixed order."""
    return {
        "hold_s": profile.hold_s.sample(rng, n),
        "s_send": profile.s_send.sample(rng, n),
        "prop_sr": profile.prop_sr.sample(rng, n),
        "r_rec": profile.receiver(profile.r_rec).sample(rng, n),
        "hold_r": profile.hold_r.sample(rng, n),
        "r_send": profile.receiver(profile.r_send).sample(rng, n),
        "prop_rs": profile.prop_rs.sample(rng, n),
        "s_rec": profile.s_rec.sample(rng, n),
        "hold_eval": profile.hold_eval.sample(rng, n),
    }


def exchanges_from_draws(states: StateTrajectory, draws: dict[str, np.ndarray], quant: QuantizationSpec,
                         receiver_clock: ReceiverClock | None = None, k0: int = 0) -> Dataset:
    """Timestamps for every step of ``states`` given pre-sampled delays."""
    slot = states.slot_start
    n = len(slot)
    idx = np.arange(n)
    gamma = states.gamma

    def c_s(u):
        return u + states.theta + gamma * (u - slot)

    def c_r(u):
        return u if receiver_clock is None else receiver_clock(idx, u)

    u1 = slot + draws["hold_s"]
    u2 = u1 + draws["prop_sr"]
    u3 = u2 + draws["hold_r"]
    u4 = u3 + draws["prop_rs"]
    u_eval = u4 + draws["hold_eval"]
    t_last = np.maximum.reduce([u_eval, u4 + draws["s_rec"], u3 + draws["r_send"], u2 + draws["r_rec"]])
    over = np.nonzero(t_last - slot >= states.tau)[0]
    if over.size:
        k = int(over[0])
        raise SlotOverflowError(
            f"exchange at step {k0 + k} needs {t_last[k] - slot[k]:.6g} s, period is {states.tau} s")
    q = quant.apply
    return Dataset(
        k=k0 + idx,
        t1=q(c_s(u1 + draws["s_send"])),
        t2=q(c_r(u2 + draws["r_rec"])),
        t3=q(c_r(u3 + draws["r_send"])),
        t4=q(c_s(u4 + draws["s_rec"])),
        eval_sender=c_s(u_eval),
        eval_receiver=u_eval,
    )


def simulate_exchanges(states: StateTrajectory, delays: DelayProfile, quant: QuantizationSpec = QuantizationSpec(),
                       seed: int = 0, hop: int = 1, receiver_clock: ReceiverClock | None = None,
                       k0: int = 0) -> Dataset:
    """One exchange per step of ``states`` using the delay stream of ``hop``."""
    rng = streams.stream(seed, hop, streams.DELAYS)
    return exchanges_from_draws(states, sample_delays(delays, rng, len(states)), quant, receiver_clock, k0)


def run_exchange(state: ClockState, delays: DelayProfile, quant: QuantizationSpec, slot_start: float,
                 rng: np.random.Generator, tau: float = 1.0, k: int = 0) -> ExchangeRecord:
    """Single exchange starting at ``slot_start`` (true time)."""
    traj = StateTrajectory(tau, np.array([slot_start], dtype=float), np.array([state.theta]),
                           np.array([state.gamma_rw]), np.array([state.gamma_thermal]), state.d)
    return exchanges_from_draws(traj, sample_delays(delays, rng, 1), quant, k0=k)[0]


def write_dataset(records, path) -> None:
    """Write exchanges as CSV with 17 significant digits (lossless for doubles)."""
    data = records if isinstance(records, Dataset) else Dataset.from_records(records)
    if len(data) == 0:
        raise DatasetError("refusing to write an empty dataset")
    cols = (["hop"] if data.hop is not None else []) + list(COLUMNS)
    arrays = [getattr(data, c) for c in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*(a.tolist() for a in arrays)):
            w.writerow([v if isinstance(v, int) else format(v, ".17g") for v in row])


def read_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        has_hop = header == ["hop"] + list(COLUMNS)
        if not has_hop and header != list(COLUMNS):
            raise DatasetError(f"{path}:1: unexpected header {header}")
        cols: list[list] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                for i, (name, v) in enumerate(zip(header, row)):
                    cols[i].append(int(v) if name in ("k", "hop") else float(v))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    if not cols[0]:
        raise DatasetError(f"{path}: no records")
    named = dict(zip(header, cols))
    return Dataset(*(named[c] for c in COLUMNS), hop=named.get("hop"))
