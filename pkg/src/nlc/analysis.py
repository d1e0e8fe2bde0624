"""Equilibria, stability verdicts, Lyapunov traces, attraction cells and
topology-induced synchronization checks."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dynamics import (
    PROJECTION_TOL,
    Trajectory,
    default_step,
    integrate_many,
    vector_field,
)
from .errors import DimensionError, NotAFixedPointError
from .graph import Graph, require_connected, spectral_check, symmetric_pairs
from .signals import (
    CONSISTENT,
    INCONSISTENT,
    OVER,
    RESIDUAL_TOL,
    FixedPointSet,
    SignalFunction,
    classify_estimation,
    find_fixed_points,
)

ASYMPTOTICALLY_STABLE = "asymptotically_stable"
STABLE = "stable_not_asymptotic"
UNSTABLE = "unstable"
AMBIGUOUS = "ambiguous"

HINT_STABLE = "stable"
HINT_UNSTABLE = "unstable"
HINT_INCONCLUSIVE = "inconclusive"

PERTURBATION_SIZE = 1e-2
RETURN_HORIZON = 40.0
RETURN_TOL = 1e-4
ESCAPE_RADIUS = 0.1
ESCAPE_TRIALS = 16
SYNC_TOL = 1e-3
DECAY_SLACK = 1e-9


# -- equilibria ----------------------------------------------------------------


@dataclass(frozen=True)
class SpectralHint:
    location: float
    slopes: tuple[float, ...]  # one-sided slopes when s has a kink at c
    eigenvalues: np.ndarray  # of the Jacobian s'(c) D^-1 A - I, descending
    max_eigenvalue: float
    verdict: str


@dataclass(frozen=True)
class EquilibriumVerdict:
    location: float | tuple[float, float]
    consistency: str
    stability: str
    residual: float  # max |f(c 1)| over the checked points
    spectral_hint: SpectralHint | None = None

    @property
    def isolated(self) -> bool:
        return not isinstance(self.location, tuple)


def _slopes(s: SignalFunction, c: float, step: float = 1e-7) -> tuple[float, ...]:
    left = (float(s(c)) - float(s(c - step))) / step if c - step >= -1.0 else None
    right = (float(s(c + step)) - float(s(c))) / step if c + step <= 1.0 else None
    sides = [v for v in (left, right) if v is not None]
    if len(sides) == 2 and abs(sides[0] - sides[1]) <= 1e-4 * max(1.0, abs(sides[0])):
        return ((float(s(c + step)) - float(s(c - step))) / (2 * step),)
    return tuple(sides)


def spectral_stability_hint(g: Graph, s: SignalFunction, c: float,
                            tol: float = 1e-6) -> SpectralHint:
    """Linearisation cross-check at c 1: eigenvalues s'(c) mu_i - 1.

    At a kink both one-sided slopes are tried; a definite hint needs both to
    agree.
    """
    if abs(float(s(c)) - c) > RESIDUAL_TOL:
        raise NotAFixedPointError(f"s({c}) - {c} = {float(s(c)) - c:.3g}")
    mu = spectral_check(g).eigenvalues
    slopes = _slopes(s, c)
    verdicts, spectra = [], []
    for slope in slopes:
        eig = np.sort(slope * mu - 1.0)[::-1]
        spectra.append(eig)
        top = eig[0]
        verdicts.append(HINT_UNSTABLE if top > tol else HINT_STABLE if top < -tol
                        else HINT_INCONCLUSIVE)
    verdict = verdicts[0] if len(set(verdicts)) == 1 else HINT_INCONCLUSIVE
    worst = max(spectra, key=lambda e: e[0])
    return SpectralHint(float(c), slopes, worst, float(worst[0]), verdict)


def stability_from_consistency(consistency: str, isolated: bool) -> str:
    if consistency == CONSISTENT:
        return ASYMPTOTICALLY_STABLE if isolated else STABLE
    if consistency == INCONSISTENT:
        return UNSTABLE
    return AMBIGUOUS


def classify_equilibria(g: Graph, s: SignalFunction,
                        fps: FixedPointSet | None = None) -> list[EquilibriumVerdict]:
    """One verdict per isolated fixed point and per fixed interval of s."""
    require_connected(g)
    fps = fps if fps is not None else find_fixed_points(s)
    out = []
    for c, label in zip(fps.isolated, fps.isolated_labels):
        res = float(np.max(np.abs(vector_field(g, s, np.full(g.n, c)))))
        hint = spectral_stability_hint(g, s, c)
        out.append(EquilibriumVerdict(c, label, stability_from_consistency(label, True), res, hint))
    for (a, b), label in zip(fps.intervals, fps.interval_labels):
        pts = np.linspace(a, b, 5)
        res = float(np.max(np.abs(vector_field(g, s, pts[:, None] * np.ones(g.n)))))
        hint = spectral_stability_hint(g, s, 0.5 * (a + b))
        out.append(EquilibriumVerdict((a, b), label, stability_from_consistency(label, False), res, hint))
    out.sort(key=lambda v: v.location if v.isolated else v.location[0])
    return out


# -- Lyapunov and synchronization ---------------------------------------------


@dataclass(frozen=True)
class LyapunovTrace:
    times: np.ndarray
    values: np.ndarray
    center: float
    max_increment: float


def lyapunov_trace(g: Graph, traj: Trajectory, center: float = 0.0) -> LyapunovTrace:
    """V(x) = (x - c 1)^T D (x - c 1) / 2 at every stored frame."""
    if traj.n != g.n:
        raise DimensionError(f"trajectory has {traj.n} agents, graph has {g.n}")
    d = g.degrees.astype(float)
    dev = traj.states - center
    values = 0.5 * (dev * dev) @ d
    inc = float(np.max(np.diff(values))) if values.size > 1 else 0.0
    return LyapunovTrace(traj.times, values, float(center), inc)


@dataclass(frozen=True)
class SyncStatus:
    final_spread: float
    synchronized: bool
    first_sync_time: float | None
    value: float | None
    tol: float


def synchronization_status(traj: Trajectory, tol: float = SYNC_TOL) -> SyncStatus:
    spread = traj.spread()
    hits = np.flatnonzero(spread < tol)
    final = float(spread[-1])
    synced = final < tol
    return SyncStatus(final, synced, float(traj.times[hits[0]]) if hits.size else None,
                      float(traj.final.mean()) if synced else None, tol)


@dataclass(frozen=True)
class PairReport:
    i: int
    j: int
    initial: float  # |delta_ij(0)|
    final: float
    max_increase: float
    monotone: bool
    decay_ok: bool

    @property
    def ok(self) -> bool:
        return self.monotone and self.decay_ok


def pairwise_sync_check(g: Graph, s: SignalFunction, traj: Trajectory,
                        tol: float = SYNC_TOL, slack: float = DECAY_SLACK,
                        pairs: Sequence[tuple[int, int]] | None = None) -> list[PairReport]:
    """|x_i - x_j| must not grow and must end below e^{-T/2} |delta(0)| + tol
    for every symmetric pair."""
    if traj.n != g.n:
        raise DimensionError(f"trajectory has {traj.n} agents, graph has {g.n}")
    pairs = symmetric_pairs(g) if pairs is None else pairs
    horizon = float(traj.times[-1] - traj.times[0])
    out = []
    for i, j in pairs:
        delta = np.abs(traj.states[:, i] - traj.states[:, j])
        inc = float(np.max(np.diff(delta))) if delta.size > 1 else 0.0
        bound = math.exp(-horizon / 2) * delta[0] + tol
        out.append(PairReport(i, j, float(delta[0]), float(delta[-1]), inc,
                              inc <= slack, bool(delta[-1] <= bound)))
    return out


# -- perturbation tests --------------------------------------------------------


@dataclass(frozen=True)
class PerturbationResult:
    location: float
    mode: str  # "return" or "escape"
    trials: int
    final_distances: tuple[float, ...]
    max_distances: tuple[float, ...]
    passed: bool


def perturbations(c: float, n: int, count: int, seed, size: float = PERTURBATION_SIZE) -> np.ndarray:
    """Random-sign perturbations with sup-norm exactly ``size``.

    Magnitudes are uniform in (0, size] and rescaled so one component hits
    ``size``. At c = +/-1 signs point into the box.
    """
    rng = np.random.default_rng(seed)
    mags = rng.uniform(0.0, 1.0, size=(count, n))
    mags /= mags.max(axis=1, keepdims=True)
    signs = rng.choice([-1.0, 1.0], size=(count, n))
    if c + size > 1.0:
        signs[:] = -1.0
    elif c - size < -1.0:
        signs[:] = 1.0
    return np.clip(c + size * signs * mags, -1.0, 1.0)


def perturbation_test(g: Graph, s: SignalFunction, verdict: EquilibriumVerdict, seed,
                      size: float = PERTURBATION_SIZE, horizon: float = RETURN_HORIZON,
                      h: float | None = None) -> PerturbationResult:
    """Asymptotically stable points must pull a perturbed start back within
    ``RETURN_TOL`` by ``horizon``; for unstable points at least one of
    ``ESCAPE_TRIALS`` starts must leave the ``ESCAPE_RADIUS`` ball."""
    if not verdict.isolated:
        raise ValueError("perturbation tests apply to isolated equilibria")
    c = float(verdict.location)
    h = default_step(s) if h is None else h
    mode = "escape" if verdict.stability == UNSTABLE else "return"
    count = ESCAPE_TRIALS if mode == "escape" else 1
    x0 = perturbations(c, g.n, count, seed, size)
    trajs = integrate_many(g, s, x0, horizon, h)
    finals = tuple(float(np.max(np.abs(tr.final - c))) for tr in trajs)
    maxes = tuple(float(max(np.max(np.abs(tr.state_max - c)), np.max(np.abs(tr.state_min - c))))
                  for tr in trajs)
    if mode == "return":
        passed = all(d <= RETURN_TOL for d in finals)
    else:
        passed = any(d > ESCAPE_RADIUS for d in maxes)
    return PerturbationResult(c, mode, count, finals, maxes, passed)


# -- attraction cells ----------------------------------------------------------


@dataclass(frozen=True)
class CellReport:
    lower: float
    upper: float
    targets: FixedPointSet  # fixed points the cell is attracted to
    samples: int
    fraction_contained: float
    fraction_converged: float
    finals: tuple[float, ...] = ()  # common value reached per sample (nan if none)
    note: str = ""


@dataclass(frozen=True)
class BasinReport:
    ordered_inconsistent_points: tuple[float, ...]
    cells: tuple[CellReport, ...]
    half_boxes: tuple[CellReport, ...] = ()
    horizon: float = RETURN_HORIZON
    tol: float = SYNC_TOL
    notes: tuple[str, ...] = ()


def _targets(fps: FixedPointSet, lo: float, hi: float, closed_lo: bool, closed_hi: bool):
    def inside(v):
        return (lo < v or (closed_lo and v == lo)) and (v < hi or (closed_hi and v == hi))

    iso = tuple(c for c in fps.isolated if inside(c))
    ivs = tuple((max(a, lo), min(b, hi)) for a, b in fps.intervals
                if max(a, lo) <= min(b, hi) and (inside(max(a, lo)) or inside(min(b, hi))
                                                 or (a < lo and b > hi)))
    return FixedPointSet(iso, ivs)


def _run_cell(g, s, lo, hi, targets: FixedPointSet, samples, seed_seq, horizon, h, tol, note=""):
    if not hi > lo:
        raise ValueError(f"cell [{lo}, {hi}] has zero volume")
    x0 = []
    for child in seed_seq.spawn(samples):
        rng = np.random.default_rng(child)
        while True:
            x = rng.uniform(lo, hi, size=g.n)
            if not (np.all(x == lo) or np.all(x == hi)):
                break
        x0.append(x)
    trajs = integrate_many(g, s, np.array(x0), horizon, h)
    contained = converged = 0
    finals = []
    for tr in trajs:
        inside = (tr.state_min.min() >= lo - PROJECTION_TOL
                  and tr.state_max.max() <= hi + PROJECTION_TOL
                  and tr.states.min() >= lo - PROJECTION_TOL
                  and tr.states.max() <= hi + PROJECTION_TOL)
        contained += inside
        st = synchronization_status(tr, tol)
        ok = st.synchronized and targets.distance(st.value) <= tol
        converged += ok
        finals.append(st.value if st.synchronized else math.nan)
    return CellReport(lo, hi, targets, samples, contained / samples, converged / samples,
                      tuple(finals), note)


def basin_probe(g: Graph, s: SignalFunction, samples: int, seed,
                horizon: float = RETURN_HORIZON, h: float | None = None,
                tol: float = SYNC_TOL, fps: FixedPointSet | None = None) -> BasinReport:
    """Sample every attraction cell [k_l, k_{l+1}]^N and check containment and
    convergence to the synchronized equilibria inside it.

    The inconsistent fixed points k_1 < ... < k_m split [-1, 1]; the outermost
    cells extend to the domain boundary (which is forward invariant), where
    the boundary value counts as a reachable target. With no inconsistent
    point there is a single cell [-1, 1]^N. For a globally overestimating
    signal the half boxes [0, 1]^N and [-1, 0]^N are also probed with Fix(s)
    as target.
    """
    require_connected(g)
    if samples < 1:
        raise ValueError("samples must be positive")
    fps = fps if fps is not None else find_fixed_points(s)
    h = default_step(s) if h is None else h
    ks = tuple(sorted(fps.inconsistent_points))
    bounds = sorted({-1.0, *ks, 1.0})
    root = np.random.SeedSequence(seed)
    seqs = root.spawn(len(bounds))
    notes = []
    if len(ks) < 2:
        notes.append(f"{len(ks)} inconsistent fixed point(s): cells extended to the domain boundary")
    cells = []
    for l, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        targets = _targets(fps, lo, hi, closed_lo=lo not in ks, closed_hi=hi not in ks)
        cells.append(_run_cell(g, s, lo, hi, targets, samples, seqs[l], horizon, h, tol))

    halves = []
    if classify_estimation(s) == OVER:
        for box_seq, (lo, hi) in zip(seqs[-1].spawn(2), ((0.0, 1.0), (-1.0, 0.0))):
            halves.append(_run_cell(g, s, lo, hi, fps, samples, box_seq, horizon, h, tol,
                                    note="globally overestimating half box"))
    return BasinReport(ks, tuple(cells), tuple(halves), horizon, tol, tuple(notes))


# -- reports -------------------------------------------------------------------


def to_jsonable(obj: Any) -> Any:
    """Recursively convert report objects to JSON-compatible values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class AnalysisReport:
    equilibria: list[EquilibriumVerdict] = field(default_factory=list)
    basin: BasinReport | None = None
    sync: SyncStatus | None = None
    lyapunov: LyapunovTrace | None = None
    pairs: list[PairReport] | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "equilibria": to_jsonable(self.equilibria),
            "basin": to_jsonable(self.basin),
            "sync": to_jsonable(self.sync),
            "lyapunov": None if self.lyapunov is None else {
                "center": self.lyapunov.center,
                "max_increment": self.lyapunov.max_increment,
                "initial": float(self.lyapunov.values[0]),
                "final": float(self.lyapunov.values[-1]),
            },
            "metadata": to_jsonable(self.metadata),
        }
        if self.pairs is not None:
            out["pairs"] = to_jsonable(self.pairs)
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text
