"""Vector field x' = D^-1 A s(x) - x and a deterministic fixed-step RK4 integrator."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DimensionError, InvarianceViolation
from .graph import Graph, is_connected
from .signals import SignalFunction

log = logging.getLogger(__name__)

PROJECTION_TOL = 1e-9
MAX_FRAMES = 2000
DEFAULT_STEP = 0.01
DEFAULT_HORIZON = 20.0
HIGH_GAIN_STEP = 0.001
HIGH_GAIN_LIPSCHITZ = 10.0


def default_step(s: SignalFunction) -> float:
    return HIGH_GAIN_STEP if s.lipschitz_bound > HIGH_GAIN_LIPSCHITZ else DEFAULT_STEP


class _Field:
    """Precomputed f for one (graph, signal) pair.

    Evaluated as (1/d_i) sum_j a_ij (s(x_j) - s(x_i)) + s(x_i) - x_i, which equals
    D^-1 A s(x) - x because each row of D^-1 A sums to one, and returns bitwise
    identical components on a synchronized state.
    """

    def __init__(self, g: Graph, s: SignalFunction):
        self.n = g.n
        self.s = s.kernel()
        w = np.array(g.matrices.normalized_adjacency)
        # rows sum to zero: D^-1 A - diag(row sums of D^-1 A)
        self.mt = np.ascontiguousarray((w - np.diag(w.sum(axis=1))).T)

    def __call__(self, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        y = self.s(x)
        z = y - y[..., :1]  # exact zeros when synchronized
        out = np.matmul(z, self.mt, out=out)
        out += y
        out -= x
        return out


def vector_field(g: Graph, s: SignalFunction, x) -> np.ndarray:
    """f(x) for a state of shape ``(n,)`` or a batch of shape ``(m, n)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.n:
        raise DimensionError(f"state has {x.shape[-1]} components, graph has {g.n} vertices")
    return _Field(g, s)(x)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (frames, n)
    step: float
    metadata: dict[str, Any] = field(default_factory=dict)
    max_excursion: float = 0.0  # largest pre-projection exit from [-1, 1]
    projections: int = 0  # steps that needed projecting
    state_min: np.ndarray | None = None  # per agent, over every step
    state_max: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def spread(self) -> np.ndarray:
        return self.states.max(axis=1) - self.states.min(axis=1)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)])
            for t, row in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "states": self.states.tolist(),
            "step": self.step,
            "metadata": self.metadata,
            "max_excursion": self.max_excursion,
            "projections": self.projections,
            "state_min": None if self.state_min is None else self.state_min.tolist(),
            "state_max": None if self.state_max is None else self.state_max.tolist(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, data: dict) -> Trajectory:
        opt = lambda key: None if data.get(key) is None else np.asarray(data[key], float)  # noqa: E731
        return cls(np.asarray(data["times"], float), np.asarray(data["states"], float),
                   float(data["step"]), dict(data.get("metadata", {})),
                   float(data.get("max_excursion", 0.0)), int(data.get("projections", 0)),
                   opt("state_min"), opt("state_max"))

    @classmethod
    def from_json(cls, path: str | Path) -> Trajectory:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_params(T, h):
    if not (0.0 < h <= 0.1):
        raise ValueError(f"step size must satisfy 0 < h <= 0.1, got {h}")
    if not T >= h:
        raise ValueError(f"horizon T={T} must be at least one step h={h}")


def integrate_many(g: Graph, s: SignalFunction, x0s, T: float = DEFAULT_HORIZON,
                   h: float = DEFAULT_STEP, max_frames: int = MAX_FRAMES,
                   metadata: dict | None = None) -> list[Trajectory]:
    """Integrate a batch of initial states in lock-step.

    ``x0s`` has shape ``(m, n)``. Returns one :class:`Trajectory` per row.
    After every step components outside [-1, 1] by at most ``PROJECTION_TOL``
    are projected back (and counted); larger exits raise
    :class:`InvarianceViolation`.
    """
    _check_params(T, h)
    x = np.array(x0s, dtype=float, ndmin=2)
    if x.ndim != 2 or x.shape[1] != g.n:
        raise DimensionError(f"initial states have shape {x.shape}, graph has {g.n} vertices")
    if np.any(np.abs(x) > 1.0 + PROJECTION_TOL):
        raise ValueError("initial state outside [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    if not is_connected(g):
        warnings.warn(f"{g!r} is not connected; convergence results do not apply", stacklevel=2)

    nsteps = int(round(T / h))
    if abs(nsteps * h - T) > 1e-9 * max(T, 1.0):
        nsteps = math.ceil(T / h)
    stride = max(1, math.ceil(nsteps / (max_frames - 1)))
    keep = list(range(0, nsteps + 1, stride))
    if keep[-1] != nsteps:
        keep.append(nsteps)

    f = _Field(g, s)
    m = x.shape[0]
    frames = np.empty((len(keep), m, g.n))
    frames[0] = x
    lo, hi = x.copy(), x.copy()
    worst = np.zeros(m)
    nproj = np.zeros(m, dtype=np.int64)
    slot = 1
    half = 0.5 * h
    sixth = h / 6.0
    k1, k2, k3, k4, tmp = (np.empty_like(x) for _ in range(5))
    for k in range(1, nsteps + 1):
        f(x, k1)
        np.multiply(k1, half, out=tmp)
        tmp += x
        f(tmp, k2)
        np.multiply(k2, half, out=tmp)
        tmp += x
        f(tmp, k3)
        np.multiply(k3, h, out=tmp)
        tmp += x
        f(tmp, k4)
        # x + h/6 (k1 + 2 k2 + 2 k3 + k4)
        k2 += k3
        k2 *= 2.0
        k2 += k1
        k2 += k4
        k2 *= sixth
        x = x + k2
        if x.max() > 1.0 or x.min() < -1.0:
            exc = np.maximum(np.abs(x) - 1.0, 0.0).max(axis=1)
            if np.any(exc > PROJECTION_TOL):
                bad = int(np.argmax(exc))
                raise InvarianceViolation(
                    f"state left [-1, 1] by {exc[bad]:.3g} at t={k * h:.6g} "
                    f"(batch row {bad}); reduce the step size or check the signal"
                )
            hit = exc > 0.0
            log.debug("projected %d states back into the box at t=%g (max %.3g)",
                      int(hit.sum()), k * h, exc.max())
            nproj += hit
            worst = np.maximum(worst, exc)
            x = np.clip(x, -1.0, 1.0)
        np.minimum(lo, x, out=lo)
        np.maximum(hi, x, out=hi)
        if slot < len(keep) and keep[slot] == k:
            frames[slot] = x
            slot += 1

    times = np.array(keep, dtype=float) * h
    meta = {"graph": dict(g.spec), "signal": s.to_spec(), "step": h, "T": nsteps * h,
            "steps": nsteps, "stride": stride, **(metadata or {})}
    return [Trajectory(times.copy(), frames[:, b, :].copy(), h, dict(meta),
                       float(worst[b]), int(nproj[b]), lo[b].copy(), hi[b].copy())
            for b in range(m)]


def integrate(g: Graph, s: SignalFunction, x0, T: float = DEFAULT_HORIZON,
              h: float = DEFAULT_STEP, max_frames: int = MAX_FRAMES,
              metadata: dict | None = None) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise DimensionError("integrate takes a single state; use integrate_many for batches")
    return integrate_many(g, s, x0[None, :], T, h, max_frames, metadata)[0]


@dataclass(frozen=True)
class MonitorReport:
    max_box_excursion: float
    projections: int
    initially_synchronized: bool
    max_spread_after_sync: float | None


def invariance_monitor(traj: Trajectory, sync_tol: float = 1e-12) -> MonitorReport:
    """Box excursions over the run and, for a synchronized start, spread growth."""
    stored = float(np.maximum(np.abs(traj.states) - 1.0, 0.0).max())
    excursion = max(stored, traj.max_excursion)
    spread = traj.spread()
    synced = bool(spread[0] <= sync_tol)
    after = float(spread.max()) if synced else None
    return MonitorReport(excursion, traj.projections, synced, after)


def uniform_states(n: int, count: int, seed, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """``count`` i.i.d. uniform states in [low, high]^n from a seeded PCG64 stream."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(low, high, size=(count, n))
