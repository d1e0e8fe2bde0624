"""Signal functions s: [-1, 1] -> [-1, 1] and their fixed-point structure.

A signal is a frozen ``kind`` + ``params`` pair. Calling it evaluates the
closed form elementwise without domain checks (the hot path used by the
integrator); :func:`evaluate` is the checked entry point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError, NotAFixedPointError, SpecError

RESIDUAL_TOL = 1e-9
MERGE_TOL = 1e-6
DOMAIN_SLACK = 1e-12
DEFAULT_SCAN_POINTS = 10_000
# |s(x) - x| at or below this is treated as exact equality when detecting
# perfect-estimation intervals; tangential roots like tanh(x) - x ~ -x^3/3
# fall below RESIDUAL_TOL on a wide band but not below this floor.
FLAT_TOL = 1e-14
MIN_INTERVAL_WIDTH = 1e-3

SIGNAL_KINDS = ("identity", "affine", "tanh_gain", "scaled_sine",
                "piecewise_linear", "quantizer_approx")

_REQUIRED = {
    "identity": (),
    "affine": ("a", "b"),
    "tanh_gain": ("k",),
    "scaled_sine": ("amplitude", "frequency"),
    "piecewise_linear": ("points",),
    "quantizer_approx": ("eps",),
}


@dataclass(frozen=True)
class SignalFunction:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _REQUIRED:
            raise SpecError(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")
        params = dict(self.params)
        missing = [p for p in _REQUIRED[self.kind] if p not in params]
        if missing:
            raise SpecError(f"{self.kind} signal missing params {missing}")
        if self.kind == "piecewise_linear":
            pts = np.asarray(params["points"], dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
                raise SpecError("piecewise_linear points must be a list of [x, y] pairs")
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise SpecError("piecewise_linear x-coordinates must be strictly increasing")
            if abs(pts[0, 0] + 1) > DOMAIN_SLACK or abs(pts[-1, 0] - 1) > DOMAIN_SLACK:
                raise SpecError("piecewise_linear points must cover [-1, 1]")
            params["points"] = tuple((float(x), float(y)) for x, y in pts)
        else:
            for name, value in params.items():
                try:
                    params[name] = float(value)
                except (TypeError, ValueError) as exc:
                    raise SpecError(f"{self.kind} param {name}={value!r} is not a number") from exc
                if not math.isfinite(params[name]):
                    raise SpecError(f"{self.kind} param {name} must be finite")
        if self.kind == "quantizer_approx" and not 0.0 < params["eps"] <= 1.0:
            raise SpecError(f"quantizer_approx needs 0 < eps <= 1, got {params['eps']}")
        if self.kind == "scaled_sine":
            params.setdefault("core", params["amplitude"])
            if not 0.0 < params["core"] <= 1.0:
                raise SpecError("scaled_sine core must lie in (0, 1]")
            if abs(math.sin(params["frequency"] * params["core"])) < 1e-12:
                raise SpecError("scaled_sine normaliser sin(frequency*core) vanishes")
        object.__setattr__(self, "params", params)

    def __call__(self, x):
        return self.kernel()(np.asarray(x, dtype=float))

    def kernel(self):
        """Elementwise closure over float arrays, without argument coercion."""
        try:
            return self.__dict__["_kernel"]
        except KeyError:
            pass
        p = self.params
        kind = self.kind
        if kind == "identity":
            fn = np.array
        elif kind == "affine":
            a, b = p["a"], p["b"]
            fn = lambda x: a * x + b  # noqa: E731
        elif kind == "tanh_gain":
            k = p["k"]
            fn = lambda x: np.tanh(k * x)  # noqa: E731
        elif kind == "scaled_sine":
            core, freq = p["core"], p["frequency"]
            scale = p["amplitude"] / math.sin(freq * core)

            def fn(x):
                return np.where(np.abs(x) <= core, scale * np.sin(freq * x), x)
        elif kind == "piecewise_linear":
            pts = np.asarray(p["points"])
            xp, fp = pts[:, 0].copy(), pts[:, 1].copy()
            fn = lambda x: np.interp(x, xp, fp)  # noqa: E731
        elif kind == "quantizer_approx":
            inv = 1.0 / p["eps"]
            fn = lambda x: np.clip(x * inv, -1.0, 1.0)  # noqa: E731
        else:
            raise AssertionError(kind)
        self.__dict__["_kernel"] = fn
        return fn

    @property
    def lipschitz_bound(self) -> float:
        """Analytic upper bound on |s'| over [-1, 1]."""
        p = self.params
        if self.kind == "identity":
            return 1.0
        if self.kind == "affine":
            return abs(p["a"])
        if self.kind == "tanh_gain":
            return abs(p["k"])
        if self.kind == "scaled_sine":
            inner = abs(p["amplitude"] * p["frequency"] / math.sin(p["frequency"] * p["core"]))
            return max(inner, 1.0) if p["core"] < 1.0 else inner
        if self.kind == "piecewise_linear":
            pts = np.asarray(p["points"])
            return float(np.max(np.abs(np.diff(pts[:, 1]) / np.diff(pts[:, 0]))))
        if self.kind == "quantizer_approx":
            return 1.0 / p["eps"]
        raise AssertionError(self.kind)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the closed form switches branch."""
        p = self.params
        if self.kind == "scaled_sine":
            return (-p["core"], p["core"])
        if self.kind == "quantizer_approx":
            return (-p["eps"], p["eps"])
        if self.kind == "piecewise_linear":
            return tuple(x for x, _ in p["points"])
        return ()

    def to_spec(self) -> dict:
        params = dict(self.params)
        if self.kind == "piecewise_linear":
            params["points"] = [list(pt) for pt in params["points"]]
        return {"kind": self.kind, "params": params}

    def describe(self) -> str:
        if not self.params:
            return self.kind
        body = ", ".join(f"{k}={v}" for k, v in self.params.items() if k != "points")
        return f"{self.kind}({body})" if body else self.kind


def identity():
    return SignalFunction("identity")


def affine(a: float, b: float):
    return SignalFunction("affine", {"a": a, "b": b})


def tanh_gain(k: float):
    return SignalFunction("tanh_gain", {"k": k})


def scaled_sine(amplitude: float, frequency: float, core: float | None = None):
    params = {"amplitude": amplitude, "frequency": frequency}
    if core is not None:
        params["core"] = core
    return SignalFunction("scaled_sine", params)


def piecewise_linear(points: Sequence[Sequence[float]]):
    return SignalFunction("piecewise_linear", {"points": points})


def quantizer_approx(eps: float):
    return SignalFunction("quantizer_approx", {"eps": eps})


def overestimating_sine():
    """0.8 sin(2x)/sin(1.6) on [-0.8, 0.8], identity outside."""
    return scaled_sine(0.8, 2.0, 0.8)


def parse_signal(spec: Mapping[str, Any]) -> SignalFunction:
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise SpecError(f"signal spec must be an object with a 'kind', got {spec!r}")
    params = spec.get("params", {})
    if not isinstance(params, Mapping):
        raise SpecError("signal 'params' must be an object")
    return SignalFunction(spec["kind"], params)


def evaluate(s: SignalFunction, x):
    """Checked evaluation: rejects inputs outside [-1, 1] and trims round-off."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 1.0 + DOMAIN_SLACK) or np.any(np.isnan(arr)):
        raise DomainError(f"signal argument outside [-1, 1]: {x!r}")
    y = s(np.clip(arr, -1.0, 1.0))
    tiny = (np.abs(y) > 1.0) & (np.abs(y) <= 1.0 + DOMAIN_SLACK)
    y = np.where(tiny, np.sign(y), y)
    return float(y) if y.ndim == 0 else y


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    check: str  # "range" | "monotone" | "lipschitz"
    x: float
    magnitude: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    signal: SignalFunction
    grid_size: int
    lipschitz_estimate: float
    lipschitz_location: float
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def worst(self, check: str) -> Violation | None:
        vs = [v for v in self.violations if v.check == check]
        return max(vs, key=lambda v: v.magnitude) if vs else None


def scan_grid(s: SignalFunction, size: int = DEFAULT_SCAN_POINTS) -> np.ndarray:
    """Uniform grid on [-1, 1] with 0 and the signal's breakpoints inserted."""
    extra = [0.0, *s.breakpoints]
    return np.unique(np.concatenate([np.linspace(-1.0, 1.0, size + 1), extra]))


def validate(s: SignalFunction, grid_size: int = DEFAULT_SCAN_POINTS) -> ValidationReport:
    """Check range containment, monotonicity and the slope bound on a grid.

    Violations are returned, never raised. Each check reports its worst
    offender only.
    """
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    x = scan_grid(s, grid_size)
    y = s(x)
    violations = []

    excess = np.maximum(np.abs(y) - 1.0, 0.0)
    if excess.max() > DOMAIN_SLACK:
        k = x.size - 1 - int(np.argmax(excess[::-1]))
        violations.append(Violation("range", float(x[k]), float(excess[k]),
                                    f"s({x[k]:.6g}) = {y[k]:.6g} lies outside [-1, 1]"))

    slopes = np.diff(y) / np.diff(x)
    peak = np.maximum.accumulate(y)
    drop = peak - y
    if drop.max() > DOMAIN_SLACK:
        k = int(np.argmax(drop))
        top = int(np.flatnonzero(y[:k + 1] == peak[k])[0])
        violations.append(Violation("monotone", float(x[k]), float(drop[k]),
                                    f"s drops by {drop[k]:.3g} between x={x[top]:.6g} and x={x[k]:.6g}"))

    k = int(np.argmax(np.abs(slopes)))
    lip = float(abs(slopes[k]))
    bound = s.lipschitz_bound
    # compare rises, not slopes: on short segments rounding dominates the quotient
    over = np.abs(np.diff(y)) - bound * np.diff(x) - 4 * np.finfo(float).eps * (1 + np.abs(y[1:]))
    if over.max() > 0:
        k = int(np.argmax(over))
        lip = float(abs(slopes[k]))
        violations.append(Violation("lipschitz", float(x[k]), lip - bound,
                                    f"grid slope {lip:.6g} exceeds bound {bound:.6g}"))
    return ValidationReport(s, grid_size, lip, float(0.5 * (x[k] + x[k + 1])), tuple(violations))


# -- fixed points --------------------------------------------------------------

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
AMBIGUOUS = "boundary-ambiguous"


@dataclass(frozen=True)
class FixedPointSet:
    isolated: tuple[float, ...]
    intervals: tuple[tuple[float, float], ...]
    isolated_labels: tuple[str, ...] = ()
    interval_labels: tuple[str, ...] = ()
    # caveat: labels are grid certificates at this resolution
    grid_resolution: float = 2.0 / DEFAULT_SCAN_POINTS

    def __len__(self):
        return len(self.isolated) + len(self.intervals)

    def contains(self, x: float, tol: float = MERGE_TOL) -> bool:
        return self.distance(x) <= tol

    def distance(self, x: float) -> float:
        dists = [abs(x - c) for c in self.isolated]
        dists += [max(a - x, 0.0, x - b) for a, b in self.intervals]
        return min(dists) if dists else math.inf

    @property
    def inconsistent_points(self) -> tuple[float, ...]:
        return tuple(c for c, lab in zip(self.isolated, self.isolated_labels)
                     if lab == INCONSISTENT)


def _bisect(fun, a: float, b: float, fa: float, tol: float) -> float:
    """Root of ``fun`` in [a, b] given sign(fun(a)) = sign(fa) != sign(fun(b))."""
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fun(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _bisect_edge(pred, inside: float, outside: float, tol: float) -> float:
    """Boundary between a point where ``pred`` holds and one where it fails."""
    while abs(outside - inside) > tol:
        m = 0.5 * (inside + outside)
        if pred(m):
            inside = m
        else:
            outside = m
    return inside


def find_fixed_points(s: SignalFunction, scan_points: int = DEFAULT_SCAN_POINTS,
                      refine_tol: float = 1e-12, label: bool = True) -> FixedPointSet:
    """Locate Fix(s) by scanning g(x) = s(x) - x and refining by bisection.

    Near-zero runs of g that are flat to ``FLAT_TOL`` over at least
    ``MIN_INTERVAL_WIDTH`` become perfect-estimation intervals; other runs and
    strict sign changes yield isolated roots.
    """
    if scan_points < 10_000:
        raise ValueError("scan_points must be at least 1e4")
    if refine_tol > 1e-10:
        raise ValueError("refine_tol must be at most 1e-10")

    def gfun(v: float) -> float:
        return float(s(v)) - v

    x = scan_grid(s, scan_points)
    g = s(x) - x
    near = np.abs(g) <= RESIDUAL_TOL
    flat = np.abs(g) <= FLAT_TOL

    intervals: list[tuple[float, float]] = []
    roots: list[float] = []

    # maximal runs of near-zero residual
    idx = np.flatnonzero(near)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1) if idx.size else []
    covered = np.zeros(x.size, dtype=bool)
    for run in runs:
        covered[run] = True
        lo, hi = int(run[0]), int(run[-1])
        flat_idx = run[flat[run]]
        # longest flat sub-run
        best = None
        if flat_idx.size >= 2:
            parts = np.split(flat_idx, np.flatnonzero(np.diff(flat_idx) > 1) + 1)
            best = max(parts, key=lambda part: x[part[-1]] - x[part[0]])
        if best is not None and x[best[-1]] - x[best[0]] >= MIN_INTERVAL_WIDTH:
            a_i, b_i = int(best[0]), int(best[-1])

            def is_flat(v):
                return abs(gfun(v)) <= FLAT_TOL

            a = x[a_i] if a_i == 0 else _bisect_edge(is_flat, x[a_i], x[a_i - 1], refine_tol)
            b = x[b_i] if b_i == x.size - 1 else _bisect_edge(is_flat, x[b_i], x[b_i + 1], refine_tol)
            intervals.append((float(a), float(b)))
            continue
        # isolated root inside the run
        seg = g[lo:hi + 1]
        zeros = np.flatnonzero(seg == 0.0)
        changes = np.flatnonzero(np.sign(seg[:-1]) * np.sign(seg[1:]) < 0)
        if zeros.size:
            cands = [float(x[lo + k]) for k in zeros]
        elif changes.size:
            cands = [_bisect(gfun, x[lo + k], x[lo + k + 1], seg[k], refine_tol) for k in changes]
        else:
            # tangential touch: nearest-to-zero grid point, refined on |g|
            k = lo + int(np.argmin(np.abs(seg)))
            cands = [_refine_touch(gfun, x, k)]
        roots.extend(cands)

    # strict sign changes between grid points outside near-zero runs
    sgn = np.sign(g)
    for k in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
        if covered[k] or covered[k + 1]:
            continue
        roots.append(_bisect(gfun, x[k], x[k + 1], g[k], refine_tol))

    roots = [r for r in roots
             if not any(a - MERGE_TOL <= r <= b + MERGE_TOL for a, b in intervals)]
    isolated = _merge(sorted(roots))
    intervals.sort()
    fps = FixedPointSet(tuple(isolated), tuple(intervals), grid_resolution=2.0 / scan_points)
    if not label:
        return fps
    iso_labels = tuple(classify_consistency(s, c, fps=fps) for c in isolated)
    int_labels = tuple(_interval_label(s, iv, fps) for iv in intervals)
    return FixedPointSet(fps.isolated, fps.intervals, iso_labels, int_labels,
                         fps.grid_resolution)


def _refine_touch(gfun, x, k) -> float:
    a = x[max(k - 1, 0)]
    b = x[min(k + 1, x.size - 1)]
    # golden-section on |g|
    phi = (math.sqrt(5) - 1) / 2
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(80):
        if abs(gfun(c)) < abs(gfun(d)):
            b = d
        else:
            a = c
        c, d = b - phi * (b - a), a + phi * (b - a)
    best = min((a, b, x[k]), key=lambda v: abs(gfun(v)))
    return float(best)


def _merge(points: list[float]) -> list[float]:
    out: list[list[float]] = []
    for p in points:
        if out and p - out[-1][-1] <= MERGE_TOL:
            out[-1].append(p)
        else:
            out.append([p])
    return [float(np.median(group)) if len(group) > 2 else group[0] for group in out]


# -- estimation classes --------------------------------------------------------

UNDER = "underestimation"
OVER = "overestimation"
PERFECT = "perfect"
MIXED = "mixed"


@dataclass(frozen=True)
class EstimationProfile:
    under: bool
    over: bool
    perfect: bool
    worst_residual: float

    @property
    def label(self) -> str:
        if self.perfect:
            return PERFECT
        if self.under:
            return UNDER
        if self.over:
            return OVER
        return MIXED


def estimation_profile(s: SignalFunction, region=None,
                       scan_points: int = DEFAULT_SCAN_POINTS) -> EstimationProfile:
    """Grid test of the signs of x (s(x) - x) over ``region``.

    ``region`` is ``None`` (all of [-1, 1]), a point, or an ``(a, b)`` pair.
    The tolerance applies to s(x) - x, not to the product.
    """
    if region is None:
        x = scan_grid(s, scan_points)
    elif np.ndim(region) == 0:
        x = np.array([float(region)])
    else:
        a, b = (float(v) for v in region)
        x = np.linspace(max(a, -1.0), min(b, 1.0), scan_points + 1)
    g = s(x) - x
    pos, neg = x > 0, x < 0
    under = bool(np.all(g[pos] <= RESIDUAL_TOL) and np.all(g[neg] >= -RESIDUAL_TOL))
    over = bool(np.all(g[pos] >= -RESIDUAL_TOL) and np.all(g[neg] <= RESIDUAL_TOL))
    worst = float(np.max(np.abs(g)))
    return EstimationProfile(under, over, worst <= RESIDUAL_TOL, worst)


def classify_estimation(s: SignalFunction, region=None,
                        scan_points: int = DEFAULT_SCAN_POINTS) -> str:
    return estimation_profile(s, region, scan_points).label


def classify_consistency(s: SignalFunction, c: float, initial_radius: float = 0.1,
                         halvings: int = 20, side_points: int = 400,
                         fps: FixedPointSet | None = None) -> str:
    """Is (x - c)(s(x) - x) <= 0 on some neighbourhood of the fixed point c?

    Radii ``initial_radius / 2**k`` are tried in turn. A side fails at a
    radius when s(x) - x has the wrong sign there by more than the residual
    tolerance scaled by |x - c| / initial_radius, so that a slightly
    expanding slope is still caught close to c, with a rounding floor.
    ``consistent`` as soon as one radius passes on both sides;
    ``inconsistent`` when the same side fails at every radius; otherwise
    ``boundary-ambiguous``. At c = +/-1 only the interior side exists.
    When ``c`` is the endpoint of a fixed interval the interval side is
    automatically satisfied.
    """
    if abs(float(s(c)) - c) > RESIDUAL_TOL:
        raise NotAFixedPointError(f"s({c}) - {c} = {float(s(c)) - c:.3g}")
    floor = 16 * np.finfo(float).eps * (1.0 + abs(c)) * max(1.0, s.lipschitz_bound)
    left_fails = right_fails = 0
    r = initial_radius
    slope_tol = RESIDUAL_TOL / initial_radius
    for _ in range(halvings + 1):
        left_bad = right_bad = False
        if c > -1.0:
            xl = np.linspace(max(c - r, -1.0), c, side_points + 1)[:-1]
            left_bad = bool(np.any(s(xl) - xl < -np.maximum(slope_tol * (c - xl), floor)))
        if c < 1.0:
            xr = np.linspace(c, min(c + r, 1.0), side_points + 1)[1:]
            right_bad = bool(np.any(s(xr) - xr > np.maximum(slope_tol * (xr - c), floor)))
        if not (left_bad or right_bad):
            return CONSISTENT
        left_fails += left_bad
        right_fails += right_bad
        r /= 2
    tried = halvings + 1
    if left_fails == tried or right_fails == tried:
        return INCONSISTENT
    return AMBIGUOUS


def _interval_label(s, interval, fps) -> str:
    a, b = interval
    ends = [classify_consistency(s, a), classify_consistency(s, b)] if a != b else \
        [classify_consistency(s, a)]
    if all(lab == CONSISTENT for lab in ends):
        return CONSISTENT
    return AMBIGUOUS
