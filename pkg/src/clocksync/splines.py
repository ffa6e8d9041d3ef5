"""Least-squares splines in the sender -> receiver timestamp plane.

Fits are stored as a polynomial of the receiver-minus-sender time in the
shifted sender coordinate ``x - x0`` (``x0`` is the window's first sender
timestamp), i.e. ``y = x + sum(coef[i] * (x - x0)**i)``. Working with
``y - x`` keeps the normal equations well conditioned even when absolute
timestamps are large; slope and intercept are recovered as ``1 + coef[1]``
and ``x0 + coef[0]``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exchange import Dataset

MAX_ORDER = 3


class SplineRankError(ValueError):
    """Too few distinct sender timestamps for the requested order."""


@dataclass(frozen=True)
class InfoWindow:
    """Points ``(t1, t2)`` and ``(t4, t3)`` of the last K+1 exchanges, sender-time ordered."""

    x: np.ndarray
    y: np.ndarray

    @classmethod
    def from_timestamps(cls, t1, t2, t3, t4, d: float = 0.0) -> "InfoWindow":
        t1, t2, t3, t4 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (t1, t2, t3, t4))
        x = np.column_stack((t1, t4)).ravel()
        y = np.column_stack((t2 - d, t3 + d)).ravel()
        return cls(x, y)

    @classmethod
    def from_dataset(cls, data: Dataset, end: int, K: int, d: float = 0.0) -> "InfoWindow":
        """Window of exchanges ``end - K .. end`` (inclusive)."""
        if end < K or end >= len(data):
            raise IndexError(f"window ending at {end} with K={K} outside dataset of {len(data)}")
        s = slice(end - K, end + 1)
        return cls.from_timestamps(data.t1[s], data.t2[s], data.t3[s], data.t4[s], d)

    @property
    def x0(self) -> float:
        return float(self.x[0])

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class SplineFit:
    order: int
    coef: np.ndarray
    x0: float

    @property
    def slope(self) -> float:
        return 1.0 + float(self.coef[1])

    @property
    def intercept(self) -> float:
        """Receiver time at ``x0``."""
        return self.x0 + float(self.coef[0])

    def predict(self, x):
        return predict(self, x)

    def residuals(self, window: InfoWindow) -> np.ndarray:
        u = window.x - self.x0
        return (window.y - window.x) - _horner(self.coef, u)


def _horner(coef, u):
    out = np.zeros_like(np.asarray(u, dtype=float)) + coef[-1]
    for c in coef[-2::-1]:
        out = out * u + c
    return out


def predict(fit: SplineFit, sender_time):
    x = np.asarray(sender_time, dtype=float)
    return x + _horner(fit.coef, x - fit.x0)


def ols_line(x, y):
    """Slope and intercept from the raw-sum normal-equation formulas."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    sx, sy = x.sum(), y.sum()
    m = (np.dot(x, y) - sx * sy / n) / (np.dot(x, x) - sx * sx / n)
    return m, y.mean() - m * x.mean()


def _line_batch(U, Z):
    """Centered OLS of Z on U along axis 1; returns (c0, c1)."""
    um = U.mean(axis=1, keepdims=True)
    zm = Z.mean(axis=1, keepdims=True)
    du = U - um
    c1 = np.einsum("ij,ij->i", du, Z - zm) / np.einsum("ij,ij->i", du, du)
    c0 = zm[:, 0] - c1 * um[:, 0]
    return np.column_stack((c0, c1))


def _poly_batch(U, Z, order):
    """Normal-equation polynomial fit on ``U`` scaled to [0, 1] per row."""
    scale = U.max(axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    V = U / scale[:, None]
    powers = np.stack([V ** i for i in range(order + 1)], axis=2)
    A = np.einsum("nki,nkj->nij", powers, powers)
    b = np.einsum("nki,nk->ni", powers, Z)
    c = np.linalg.solve(A, b[..., None])[..., 0]
    return c / scale[:, None] ** np.arange(order + 1)


def fit_batch(U: np.ndarray, Z: np.ndarray, order: int) -> np.ndarray:
    """Coefficients (rows) for many windows of shifted points at once."""
    if order == 1:
        return _line_batch(U, Z)
    return _poly_batch(U, Z, order)


def check_order(order: int) -> None:
    if order not in (1, 2, 3):
        raise ValueError(f"spline order must be 1, 2 or 3 (got {order}); higher orders overfit")


def fit_spline(window: InfoWindow, order: int = 1) -> SplineFit:
    check_order(order)
    if len(np.unique(window.x)) < order + 1:
        raise SplineRankError(f"order {order} needs {order + 1} distinct sender times")
    x0 = window.x0
    U = (window.x - x0)[None, :]
    Z = (window.y - window.x)[None, :]
    return SplineFit(order, fit_batch(U, Z, order)[0], x0)


# -- line fitters -----------------------------------------------------------

class LineFitter(Protocol):
    def __call__(self, window: InfoWindow) -> SplineFit: ...


def ols_fitter(window: InfoWindow) -> SplineFit:
    return fit_spline(window, 1)


ols_fitter.name = "ols"


@dataclass(frozen=True)
class ConstantLineFitter:
    """Ignores the data and returns ``y = m * x + q``; for interface tests."""

    m: float = 1.0
    q: float = 0.0
    name: str = "constant"

    def __call__(self, window: InfoWindow) -> SplineFit:
        return SplineFit(1, np.array([self.q, self.m - 1.0]), 0.0)


@dataclass(frozen=True)
class MinFilterFitter:
    """Line through the exchange midpoints with the smallest round-trip delay.

    Each exchange contributes the point ``((t1+t4)/2, (t2+t3)/2)``; only
    exchanges whose round trip ``(t4-t1)-(t3-t2)`` is at most the window's
    ``quantile`` are kept. A simple stand-in for minimum-delay estimators,
    not a reproduction of any published one.
    """

    quantile: float = 0.5
    name: str = "minfilter"

    def __call__(self, window: InfoWindow) -> SplineFit:
        t1, t4 = window.x[0::2], window.x[1::2]
        t2, t3 = window.y[0::2], window.y[1::2]
        rtt = (t4 - t1) - (t3 - t2)
        keep = rtt <= np.quantile(rtt, self.quantile)
        if keep.sum() < 2:
            keep = np.argsort(rtt)[:2]
        mx, my = (t1 + t4)[keep] / 2, (t2 + t3)[keep] / 2
        if len(np.unique(mx)) < 2:
            raise SplineRankError("min-filter kept fewer than two distinct exchanges")
        x0 = window.x0
        c = _line_batch((mx - x0)[None, :], (my - mx)[None, :])[0]
        return SplineFit(1, c, x0)


FITTERS = {"ols": ols_fitter, "minfilter": MinFilterFitter()}


# -- incremental S1 ---------------------------------------------------------

class S1Accumulator:
    """Sliding-window running sums for the order-1 fit.

    Each pushed exchange adds two points and, once the window holds K+1
    exchanges, the oldest two leave; the sums are rebuilt from the stored
    points every ``rebase_every`` pushes to bound drift from cancellation.
    """

    def __init__(self, K: int, rebase_every: int | None = None):
        self.K = K
        self.points: deque[tuple[float, float]] = deque()
        self.rebase_every = rebase_every or 2 * (K + 1)
        self._since_rebase = 0
        self._rebase(0.0)

    def _rebase(self, ref: float) -> None:
        self.ref = ref
        self.n = 0
        self.su = self.sz = self.suu = self.suz = 0.0
        for x, y in self.points:
            self._add(x, y, 1)

    def _add(self, x: float, y: float, sign: int) -> None:
        u = x - self.ref
        z = y - x
        self.n += sign
        self.su += sign * u
        self.sz += sign * z
        self.suu += sign * u * u
        self.suz += sign * u * z

    def push(self, t1: float, t2: float, t3: float, t4: float) -> tuple[float, float]:
        if not self.points:
            self._rebase(t1)
        for x, y in ((t1, t2), (t4, t3)):
            self.points.append((x, y))
            self._add(x, y, 1)
        while len(self.points) > 2 * (self.K + 1):
            x, y = self.points.popleft()
            self._add(x, y, -1)
        self._since_rebase += 1
        if self._since_rebase >= self.rebase_every:
            self._since_rebase = 0
            self._rebase(self.points[0][0])
        return self.line()

    def line(self) -> tuple[float, float]:
        """(slope, intercept at the window's first sender time)."""
        n = self.n
        c1 = (self.suz - self.su * self.sz / n) / (self.suu - self.su * self.su / n)
        c0 = (self.sz - c1 * self.su) / n
        x0 = self.points[0][0]
        # intercept of z at x0, then back to receiver time
        z0 = c0 + c1 * (x0 - self.ref)
        return 1.0 + c1, x0 + z0


# -- delay correction -------------------------------------------------------

@dataclass(frozen=True)
class DelayCorrectionGap:
    delta_m: float
    delta_q: float
    delta_m_closed_form: float
    delta_m_refit: float


def delay_correction_gap(window: InfoWindow, d: float) -> DelayCorrectionGap:
    """Change of the order-1 fit when t2 -> t2 - d and t3 -> t3 + d.

    ``window`` must hold uncorrected timestamps. Least squares is linear in
    ``y``, so the change equals the fit of the correction vector itself; this
    avoids the cancellation of refitting shifted absolute timestamps, whose
    rounding (about 1e-16 of the timestamp) is kept visible in
    ``delta_m_refit``. The slope change is also given in closed form.
    """
    shift = d * np.tile([-1.0, 1.0], len(window) // 2)
    x0 = window.x0
    gap = _line_batch((window.x - x0)[None, :], shift[None, :])[0]
    refit = fit_spline(InfoWindow(window.x, window.y + shift), 1).coef[1] - fit_spline(window, 1).coef[1]
    t1, t4 = window.x[0::2] - x0, window.x[1::2] - x0
    n = len(window)
    sx = (t1 + t4).sum()
    closed = d * (t4 - t1).sum() / ((t1 ** 2 + t4 ** 2).sum() - sx * sx / n)
    return DelayCorrectionGap(float(gap[1]), float(gap[0]), float(closed), float(refit))


# -- batched sliding windows ------------------------------------------------

def sliding_windows(data: Dataset, K: int, d: float = 0.0, chunk: int = 4096
                    ) -> Iterator[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(first_end, X, Y, x0)`` for windows ending at steps ``K .. N-1``.

    Rows of ``X``/``Y`` hold the 2(K+1) points of one window; rows are
    consecutive window ends starting at ``first_end``.
    """
    n = len(data)
    if K < 1:
        raise ValueError("K must be at least 1")
    if n < K + 1:
        raise ValueError(f"dataset of {n} exchanges is shorter than a window of K+1={K + 1}")
    px = np.column_stack((data.t1, data.t4)).ravel()
    py = np.column_stack((data.t2 - d, data.t3 + d)).ravel()
    wx = sliding_window_view(px, 2 * (K + 1))[::2]
    wy = sliding_window_view(py, 2 * (K + 1))[::2]
    for start in range(0, len(wx), chunk):
        X = np.array(wx[start:start + chunk])
        Y = np.array(wy[start:start + chunk])
        yield start + K, X, Y, X[:, 0].copy()


def sliding_fits(data: Dataset, K: int, order: int = 1, d: float = 0.0):
    """Coefficients and shifts for every full window: ``(coef (M, order+1), x0 (M,))``."""
    check_order(order)
    coefs, x0s = [], []
    for _, X, Y, x0 in sliding_windows(data, K, d):
        coefs.append(fit_batch(X - x0[:, None], Y - X, order))
        x0s.append(x0)
    return np.concatenate(coefs), np.concatenate(x0s)


def predict_batch(coef: np.ndarray, x0: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = x - x0
    out = coef[:, -1].copy()
    for i in range(coef.shape[1] - 2, -1, -1):
        out = out * u + coef[:, i]
    return x + out
