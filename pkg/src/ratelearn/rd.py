"""Conditional rate-distortion curves by Blahut-Arimoto.

With the side information X available at both encoder and decoder, the
conditional problem separates across side symbols: for a common slope
``lam`` each conditional source p(y|x) is solved independently and the
per-symbol rates and distortions are averaged under p(x). Points obtained
this way lie on the lower convex envelope of R_{Y|X}(D).

Slopes are in bits per unit of loss: each point minimizes R + lam * D with
R in bits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import UsageError
from .losses import LossFunction
from .probability import FiniteJoint

LN2 = math.log(2.0)
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
# slack allowed on the per-iteration Lagrangian before it is called an ascent
DESCENT_TOL = 1e-12
PRUNE_RATIO = 1e-20


@dataclass
class BAResult:
    """Lagrangian-optimal point of R + lam*D at a fixed slope.

    ``intercept`` is the dual constant of the Blahut lower bound: every
    distortion D satisfies R_{Y|X}(D) >= intercept - lam * D, in bits.
    """

    distortion: float
    rate: float
    slope: float
    intercept: float
    channels: np.ndarray
    converged: bool
    iterations: int
    max_ascent: float = 0.0
    histories: list = field(default_factory=list, repr=False)


def _ba_single(p, d, lam, tol, max_iter, keep_history):
    """Blahut-Arimoto for one source ``p`` (support only) and loss table ``d``.

    The rate of each iterate is computed from the partition function rather
    than from the channel entries:
    I = -s*E[d - dmin] - E[ln z] - KL(r_new || r_old)  (nats).
    """
    s = lam * LN2
    dmin = d.min(axis=1, keepdims=True)
    dsh = d - dmin
    a = np.exp(-s * dsh)
    nr = d.shape[1]
    e_dmin = float(p @ dmin[:, 0])

    # zero-rate optimality (Kuhn-Tucker): point mass on the best constant
    j0 = int(np.argmin(p @ d))
    with np.errstate(over="ignore"):
        c0 = p @ np.exp(-s * (d - d[:, j0 : j0 + 1]))
    if c0.max() <= 1.0 + 1e-15:
        q = np.zeros_like(d)
        q[:, j0] = 1.0
        dist = float(p @ d[:, j0])
        # log2 z_y = -lam * d(y, j0) when r is the point mass on j0
        intercept = float(lam * dist - np.log2(c0.max()))
        return dist, 0.0, intercept, q, True, 0, 0.0, [lam * dist] if keep_history else []

    r = np.full(nr, 1.0 / nr)
    # letters whose output mass drops below PRUNE_RATIO of the largest are
    # invisible in double precision; removing them only shrinks the work
    active = np.arange(nr)
    a_act, d_act = a, dsh
    history = []
    prev = math.inf
    max_ascent = 0.0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        if it % 16 == 0:
            keep = r > PRUNE_RATIO * r.max()
            if not keep.all():
                active, r = active[keep], r[keep]
                a_act, d_act = a[:, active], dsh[:, active]
        z = a_act @ r
        q = a_act * r[None, :] / z[:, None]
        r_new = p @ q
        e_dsh = float(p @ np.einsum("ij,ij->i", q, d_act))
        dist = e_dsh + e_dmin
        nz = r_new > 0
        kl = float(np.sum(r_new[nz] * np.log(r_new[nz] / r[nz])))
        rate = (-s * e_dsh - float(p @ np.log(z)) - kl) / LN2
        r = r_new
        obj = rate + lam * dist
        if keep_history:
            history.append(obj)
        if obj > prev:
            max_ascent = max(max_ascent, (obj - prev) / max(1.0, abs(prev)))
        if abs(prev - obj) <= tol * max(abs(obj), 1e-300):
            converged = True
            break
        prev = obj
    q_full = np.zeros_like(d)
    q_full[:, active] = q
    q = q_full
    r_full = np.zeros(nr)
    r_full[active] = r
    r = r_full
    # Blahut dual bound evaluated at the final output marginal
    z = a @ r
    c = p @ (a / z[:, None])
    log2z = np.log2(z) - s * dmin[:, 0] / LN2
    intercept = float(-(p @ log2z) - np.log2(c.max()))
    rate = max(rate, 0.0)
    return dist, rate, intercept, q, converged, it, max_ascent, history


def ba_rd_point(
    dist: FiniteJoint,
    loss: LossFunction,
    slope: float,
    reproduction: Sequence[float] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    keep_history: bool = False,
) -> BAResult:
    """Solve min R + slope*D for the conditional source p(y|x).

    Returns the averaged (D, R), the per-symbol channels q(yhat | y, x) of
    shape (|X|, |Y|, |Yhat|), and convergence diagnostics. Non-convergence is
    reported through ``converged`` rather than raised.
    """
    if not slope > 0:
        raise UsageError(f"slope must be positive, got {slope}")
    repro = dist.y_alphabet if reproduction is None else np.asarray(reproduction, dtype=float)
    d_full = loss.matrix(dist.y_alphabet, repro)
    if not np.all(np.isfinite(d_full)):
        raise UsageError("loss must be finite on the source and reproduction alphabets")
    px = dist.px
    cond = dist.conditional_y()
    nx, ny = dist.pmf.shape
    channels = np.zeros((nx, ny, repro.size))
    D = R = G = 0.0
    converged = True
    iters = 0
    max_ascent = 0.0
    histories = []
    for i in range(nx):
        if px[i] <= 0:
            channels[i, :, int(np.argmin(d_full.sum(axis=0)))] = 1.0
            continue
        support = cond[i] > 0
        p = cond[i, support]
        d = d_full[support]
        if support.sum() == 1:
            j = int(np.argmin(d[0]))
            dx, rx, gx = float(d[0, j]), 0.0, -slope * float(d[0, j])
            q = np.zeros((1, repro.size))
            q[0, j] = 1.0
            ok, it, asc, hist = True, 0, 0.0, []
        else:
            dx, rx, gx, q, ok, it, asc, hist = _ba_single(p, d, slope, tol, max_iter, keep_history)
        channels[i][support] = q
        channels[i][~support] = q[0] if q.shape[0] else 0.0
        D += px[i] * dx
        R += px[i] * rx
        G += px[i] * gx
        converged &= ok
        iters = max(iters, it)
        max_ascent = max(max_ascent, asc)
        histories.append(hist)
    if max_ascent > 1e-9:
        raise RuntimeError(f"Blahut-Arimoto objective increased (relative {max_ascent:.3g}); solver bug")
    return BAResult(D, R, slope, G, channels, converged, iters, max_ascent, histories)


def zero_rate_distortion(dist: FiniteJoint, loss: LossFunction, reproduction=None) -> float:
    """D_max: best constant reproduction per side symbol."""
    repro = dist.y_alphabet if reproduction is None else np.asarray(reproduction, dtype=float)
    d = loss.matrix(dist.y_alphabet, repro)
    per_x = dist.pmf @ d
    return float(per_x.min(axis=1).sum())


class RDPoint(NamedTuple):
    distortion: float
    rate: float
    slope: float
    intercept: float = math.nan
    converged: bool = True


class Inversion(NamedTuple):
    value: float
    clamped: bool


@dataclass(frozen=True)
class RDCurve:
    """Sampled conditional rate-distortion curve, ordered by decreasing distortion."""

    points: tuple
    source_id: str = ""
    loss_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(RDPoint(*p) for p in self.points))

    @property
    def distortions(self) -> np.ndarray:
        return np.array([p.distortion for p in self.points])

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def slopes(self) -> np.ndarray:
        return np.array([p.slope for p in self.points])

    @property
    def converged(self) -> bool:
        return all(p.converged for p in self.points)

    @property
    def d_max(self) -> float:
        return self.points[0].distortion

    def check_invariants(self, tol: float = 1e-6) -> list:
        """Return human-readable violations of ordering and discrete convexity."""
        problems = []
        D, R = self.distortions, self.rates
        if np.any(np.diff(D) >= 0):
            problems.append("distortions not strictly decreasing")
        if np.any(np.diff(R) < -1e-12):
            problems.append("rates decrease along the curve")
        if len(D) >= 3:
            chord = np.diff(R) / -np.diff(D)
            scale = max(1.0, float(np.abs(chord).max()))
            bad = np.nonzero(np.diff(chord) < -tol * scale)[0]
            if bad.size:
                problems.append(f"convexity violated at triples {bad.tolist()}")
        return problems

    def distortion_at(self, rate: float) -> Inversion:
        return invert_curve(self, rate)

    def rate_at(self, distortion: float, method: str = "chord") -> Inversion:
        """R(D) by chord interpolation, or a certified lower bound (``envelope``).

        The envelope is the maximum of the Blahut dual lines through the
        sampled slopes, floored at zero. It never exceeds the true
        conditional rate-distortion function.
        """
        if not self.points:
            raise UsageError("empty curve")
        if method == "envelope":
            lines = [(p.intercept, p.slope) for p in self.points if math.isfinite(p.intercept)]
            best = max((g - lam * distortion for g, lam in lines), default=0.0)
            return Inversion(max(best, 0.0), False)
        if method != "chord":
            raise UsageError(f"unknown method {method!r}")
        D, R = self.distortions, self.rates
        if distortion >= D[0]:
            return Inversion(0.0 if distortion > D[0] else float(R[0]), False)
        if distortion < D[-1]:
            return Inversion(float(R[-1]), True)
        return Inversion(float(np.interp(distortion, D[::-1], R[::-1])), False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slope", "distortion", "rate"])
        for p in self.points:
            w.writerow([repr(float(p.slope)), repr(float(p.distortion)), repr(float(p.rate))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "loss_id": self.loss_id,
            "points": [
                {
                    "slope": p.slope,
                    "distortion": p.distortion,
                    "rate": p.rate,
                    "intercept": None if math.isnan(p.intercept) else p.intercept,
                    "converged": p.converged,
                }
                for p in self.points
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "RDCurve":
        if isinstance(obj, str):
            obj = json.loads(obj)
        pts = [
            RDPoint(
                q["distortion"],
                q["rate"],
                q["slope"],
                math.nan if q.get("intercept") is None else q["intercept"],
                q.get("converged", True),
            )
            for q in obj["points"]
        ]
        return cls(tuple(pts), obj.get("source_id", ""), obj.get("loss_id", ""))

    @classmethod
    def from_csv(cls, text: str, source_id: str = "", loss_id: str = "") -> "RDCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        pts = [RDPoint(float(r["distortion"]), float(r["rate"]), float(r["slope"])) for r in rows]
        return cls(tuple(pts), source_id, loss_id)


def default_slopes(dist: FiniteJoint, loss: LossFunction, count: int = 40, reproduction=None) -> np.ndarray:
    """Geometric grid over [1e-3, 1e3] scaled by the zero-rate distortion."""
    scale = zero_rate_distortion(dist, loss, reproduction)
    if scale <= 0:
        scale = 1.0
    return np.geomspace(1e-3, 1e3, count) / scale


def rd_curve(
    dist: FiniteJoint,
    loss: LossFunction,
    slopes: Sequence[float] | None = None,
    reproduction: Sequence[float] | None = None,
    source_id: str = "",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int = 1,
    max_rate_gap: float | None = 0.02,
    max_points: int = 400,
    rate_floor: float | None = 1e-4,
) -> RDCurve:
    """Sweep slopes and assemble an :class:`RDCurve` including the (D_max, 0) endpoint.

    When ``max_rate_gap`` is set, slopes are bisected geometrically between
    neighbouring points whose rates differ by more than the gap, until the
    gap is met or ``max_points`` slopes have been solved. Slopes are solved
    from steepest to shallowest and the sweep stops at the first point whose
    rate is below ``rate_floor`` bits. Points that do not
    move the curve (distortion within 1e-10 of the previous point, or no rate
    gain) are dropped so that distortions are strictly decreasing.
    """
    if slopes is None:
        slopes = default_slopes(dist, loss, reproduction=reproduction)
    slopes = np.asarray(slopes, dtype=float)
    if slopes.size == 0 or np.any(slopes <= 0):
        raise UsageError("slopes must be a nonempty positive grid")
    if np.any(np.diff(slopes) <= 0):
        raise UsageError("slopes must be sorted ascending without repeats")

    def solve(lam):
        return ba_rd_point(dist, loss, float(lam), reproduction, tol=tol, max_iter=max_iter)

    def solve_all(lams):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(solve, lams))
        return [solve(lam) for lam in lams]

    # steepest first; shallower slopes only lower the rate further, so the
    # sweep stops once a point is indistinguishable from the zero-rate end
    solved = {}
    batch = max(1, workers)
    descending = slopes[::-1].tolist()
    for start in range(0, len(descending), batch):
        chunk = descending[start : start + batch]
        solved.update(zip(chunk, solve_all(chunk)))
        if rate_floor is not None and min(solved[l].rate for l in chunk) < rate_floor:
            break
    while max_rate_gap is not None and len(solved) < max_points:
        lams = sorted(solved)
        rates = [solved[l].rate for l in lams]
        extra = [
            math.sqrt(lams[k] * lams[k + 1])
            for k in range(len(lams) - 1)
            if rates[k + 1] - rates[k] > max_rate_gap
        ]
        extra = [l for l in extra if l not in solved][: max_points - len(solved)]
        if not extra:
            break
        solved.update(zip(extra, solve_all(extra)))
    results = [solved[l] for l in sorted(solved)]

    d_max = zero_rate_distortion(dist, loss, reproduction)
    scale = 1.0 + abs(d_max)
    points = [RDPoint(d_max, 0.0, float(results[0].slope), math.nan, True)]
    for res in results:
        last = points[-1]
        if res.distortion < last.distortion - 1e-10 * scale and res.rate > last.rate + 1e-12:
            points.append(RDPoint(res.distortion, res.rate, res.slope, res.intercept, res.converged))
        elif math.isfinite(res.intercept):
            # keep the stronger dual line even when the primal point is redundant
            old = last.intercept - last.slope * last.distortion if math.isfinite(last.intercept) else -math.inf
            if res.intercept - res.slope * last.distortion > old:
                points[-1] = last._replace(
                    intercept=res.intercept, slope=res.slope, converged=last.converged and res.converged
                )
    return RDCurve(tuple(points), source_id or "finite-joint", loss.name)


def distortion_at_rate(
    dist: FiniteJoint,
    loss: LossFunction,
    rate: float,
    reproduction=None,
    rate_tol: float = 1e-7,
    max_steps: int = 200,
) -> BAResult:
    """Bisect the slope until the Blahut-Arimoto rate matches ``rate``.

    Returns the point whose rate is closest to the target. Targets at or
    above the zero-distortion rate return the steepest point reached.
    """
    if rate < 0:
        raise UsageError("rate must be nonnegative")
    lo, hi = 1e-6, 1.0
    best = ba_rd_point(dist, loss, hi, reproduction)
    while best.rate < rate and hi < 1e8:
        lo, hi = hi, hi * 4
        best = ba_rd_point(dist, loss, hi, reproduction)
    if best.rate < rate:
        return best
    for _ in range(max_steps):
        mid = math.sqrt(lo * hi)
        res = ba_rd_point(dist, loss, mid, reproduction, tol=1e-12)
        if abs(res.rate - rate) < abs(best.rate - rate):
            best = res
        if abs(res.rate - rate) <= rate_tol:
            break
        if res.rate < rate:
            lo = mid
        else:
            hi = mid
    return best


def invert_curve(curve: RDCurve, rate: float) -> Inversion:
    """D_{Y|X}(R) by piecewise-linear interpolation in (R, D).

    Rates above the largest sampled rate clamp to the smallest sampled
    distortion and set ``clamped``.
    """
    if not curve.points:
        raise UsageError("cannot invert an empty curve")
    if rate < 0:
        raise UsageError(f"rate must be nonnegative, got {rate}")
    D, R = curve.distortions, curve.rates
    if rate >= R[-1]:
        return Inversion(float(D[-1]), rate > R[-1])
    return Inversion(float(np.interp(rate, R, D)), False)


def gaussian_drf(sigma: float, rate: float) -> float:
    """Distortion-rate function sigma^2 2^(-2R) of a Gaussian source under squared loss."""
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    if rate < 0:
        raise UsageError(f"rate must be nonnegative, got {rate}")
    return sigma * sigma * 2.0 ** (-2.0 * rate)


GAUSSIAN_TAG = "gaussian-regression"


@dataclass(frozen=True)
class SupDRFSpec:
    """Family over which the worst-case distortion-rate value is taken.

    ``family`` is a nonempty list of :class:`FiniteJoint` (an epsilon-net of
    the distribution family) or the string ``"gaussian-regression"``, in which
    case ``sigma`` must be set.
    """

    family: object
    rate: float
    sigma: float | None = None

    def __post_init__(self):
        if self.rate < 0:
            raise UsageError("rate must be nonnegative")
        if isinstance(self.family, str):
            if self.family != GAUSSIAN_TAG:
                raise UsageError(f"unknown analytic family {self.family!r}")
            if self.sigma is None or not self.sigma > 0:
                raise UsageError("the Gaussian-regression family needs sigma > 0")
        elif not self.family:
            raise UsageError("family must be nonempty")


class SupDRF(NamedTuple):
    value: float
    argmax: int
    flagged: bool
    per_member: tuple


def sup_drf(spec: SupDRFSpec, loss: LossFunction | None = None, slopes=None, curves=None, queried=None) -> SupDRF:
    """Worst-case conditional distortion-rate value over the family.

    For the Gaussian-regression tag the value is sigma^2 2^(-2R) for every
    member; ``queried`` may list regression functions to evaluate, and each
    receives the same value. ``flagged`` is set if any member's curve failed
    to converge or the rate had to be clamped.
    """
    if isinstance(spec.family, str):
        n = 1 if queried is None else max(1, len(queried))
        val = gaussian_drf(spec.sigma, spec.rate)
        return SupDRF(val, 0, False, tuple([val] * n))
    if loss is None:
        raise UsageError("a loss function is required for finite families")
    if curves is None:
        curves = [rd_curve(m, loss, slopes) for m in spec.family]
    vals, flagged = [], False
    for c in curves:
        inv = invert_curve(c, spec.rate)
        vals.append(inv.value)
        flagged |= inv.clamped or not c.converged
    idx = int(np.argmax(vals))
    return SupDRF(float(vals[idx]), idx, flagged, tuple(vals))
