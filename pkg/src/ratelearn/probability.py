"""Finite-alphabet probability objects and exact information measures.

All entropies and mutual informations are in bits. KL divergence is returned
in both nats and bits. The convention 0 log 0 = 0 is used throughout, and
p log(p/0) evaluates to +inf rather than raising.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import UsageError

CONSTRUCTION_TOL = 1e-12
IDENTITY_TOL = 1e-10


def _plogp_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


@dataclass(frozen=True)
class ExtendedJoint:
    """A joint pmf over several named finite variables.

    ``pmf`` has one axis per entry of ``names``. This is the general carrier
    for quantities such as I(Y; Yhat | X), where a reproduction variable is
    attached to a (X, Y) joint.
    """

    names: tuple
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        names = tuple(self.names)
        if pmf.ndim != len(names):
            raise UsageError(f"pmf has {pmf.ndim} axes but {len(names)} names were given")
        if len(set(names)) != len(names):
            raise UsageError(f"variable names must be unique, got {names}")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise UsageError("pmf entries must be finite and nonnegative")
        if abs(pmf.sum() - 1.0) > CONSTRUCTION_TOL:
            raise UsageError(f"pmf sums to {pmf.sum():.17g}, expected 1")
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "names", names)

    def axes(self, variables: Sequence[str]) -> tuple:
        out = []
        for v in variables:
            if v not in self.names:
                raise UsageError(f"unknown variable {v!r}; joint has {self.names}")
            out.append(self.names.index(v))
        return tuple(out)

    def marginal(self, variables: Sequence[str]) -> np.ndarray:
        keep = self.axes(variables)
        drop = [i for i in range(len(self.names)) if i not in keep]
        arr = np.transpose(self.pmf, list(keep) + drop)
        return arr.reshape(arr.shape[: len(keep)] + (-1,)).sum(axis=-1)

    def entropy(self, variables: Sequence[str], given: Sequence[str] = ()) -> float:
        variables = tuple(variables)
        given = tuple(g for g in given if g not in variables)
        if not variables:
            raise UsageError("entropy needs at least one variable")
        h_joint = _plogp_bits(self.marginal(variables + given))
        h_given = _plogp_bits(self.marginal(given)) if given else 0.0
        h = h_joint - h_given
        return 0.0 if -IDENTITY_TOL < h < 0 else h

    def mutual_information(self, a: Sequence[str], b: Sequence[str], given: Sequence[str] = ()) -> float:
        a, b, given = tuple(a), tuple(b), tuple(given)
        if set(a) & set(b):
            raise UsageError("mutual information arguments must be disjoint")
        return (
            self.entropy(a, given)
            + self.entropy(b, given)
            - self.entropy(a + b, given)
        )


@dataclass(frozen=True)
class FiniteJoint:
    """Joint pmf p(x, y) over a finite side-information and output alphabet.

    Parameters
    ----------
    x_alphabet : sequence
        Labels of the side-information symbols (strings or numbers).
    y_alphabet : sequence of float
        Numeric values of the output symbols.
    pmf : array-like, shape (len(x_alphabet), len(y_alphabet))
        Joint probabilities.
    """

    x_alphabet: tuple
    y_alphabet: np.ndarray
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float)
        y = np.array(self.y_alphabet, dtype=float)
        x = tuple(self.x_alphabet)
        if pmf.ndim != 2 or pmf.shape != (len(x), len(y)):
            raise UsageError(f"pmf shape {pmf.shape} does not match alphabets ({len(x)}, {len(y)})")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise UsageError("pmf entries must be finite and nonnegative")
        total = pmf.sum()
        if abs(total - 1.0) > CONSTRUCTION_TOL:
            raise UsageError(f"pmf sums to {total:.17g}, expected 1 within {CONSTRUCTION_TOL}")
        pmf.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "y_alphabet", y)
        object.__setattr__(self, "x_alphabet", x)

    @classmethod
    def from_pmf(cls, pmf, x_alphabet=None, y_alphabet=None) -> "FiniteJoint":
        pmf = np.asarray(pmf, dtype=float)
        if x_alphabet is None:
            x_alphabet = tuple(range(pmf.shape[0]))
        if y_alphabet is None:
            y_alphabet = np.arange(pmf.shape[1], dtype=float)
        return cls(x_alphabet, y_alphabet, pmf)

    @property
    def px(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def py(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    def conditional_y(self) -> np.ndarray:
        """Rows p(y|x); rows with p(x) = 0 are returned uniform."""
        px = self.px
        out = np.full_like(self.pmf, 1.0 / self.pmf.shape[1])
        nz = px > 0
        out[nz] = self.pmf[nz] / px[nz, None]
        return out

    def pooled(self) -> "FiniteJoint":
        """The same output law with side information discarded."""
        return FiniteJoint(("*",), self.y_alphabet, self.py[None, :])

    def shifted(self, offset: float) -> "FiniteJoint":
        return FiniteJoint(self.x_alphabet, self.y_alphabet + offset, self.pmf)

    def as_extended(self) -> ExtendedJoint:
        return ExtendedJoint(("X", "Y"), self.pmf)

    def to_json(self) -> dict:
        return {
            "x_alphabet": list(self.x_alphabet),
            "y_alphabet": [float(v) for v in self.y_alphabet],
            "pmf": [float(v) for v in self.pmf.ravel()],
        }

    @classmethod
    def from_json(cls, obj) -> "FiniteJoint":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            xs = obj["x_alphabet"]
            ys = obj["y_alphabet"]
            flat = np.asarray(obj["pmf"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed FiniteJoint JSON: {exc}") from exc
        if flat.ndim == 1:
            if flat.size != len(xs) * len(ys):
                raise UsageError(f"pmf has {flat.size} entries, expected {len(xs) * len(ys)}")
            flat = flat.reshape(len(xs), len(ys))
        return cls(tuple(xs), ys, flat)


def _as_extended(dist) -> ExtendedJoint:
    if isinstance(dist, ExtendedJoint):
        return dist
    if isinstance(dist, FiniteJoint):
        return dist.as_extended()
    raise UsageError(f"expected FiniteJoint or ExtendedJoint, got {type(dist).__name__}")


def _parse_selector(which: str, names: tuple) -> tuple:
    if not isinstance(which, str) or not which.strip():
        raise UsageError(f"bad selector {which!r}")
    target, _, given = which.partition("|")

    def split(s):
        s = s.strip()
        if not s:
            return ()
        if "," in s:
            return tuple(t.strip() for t in s.split(",") if t.strip())
        if s in names:
            return (s,)
        # compact form such as "XY" for single-letter names
        return tuple(s)

    return split(target), split(given)


def entropy_bits(dist, which: str = "Y") -> float:
    """Entropy H(A) or conditional entropy H(A|B) in bits.

    ``which`` selects the variables: ``"Y"``, ``"X"``, ``"XY"``, ``"Y|X"``,
    or, for extended joints, comma-separated names such as ``"Y|X,Yhat"``.
    """
    joint = _as_extended(dist)
    target, given = _parse_selector(which, joint.names)
    if not target:
        raise UsageError(f"selector {which!r} names no target variable")
    return joint.entropy(target, given)


def mutual_information_bits(dist, a: str = "X", b: str = "Y", given: str | None = None) -> float:
    """I(A;B) or I(A;B|C) in bits, clipped at zero only for float noise."""
    joint = _as_extended(dist)
    a_vars = _parse_selector(a, joint.names)[0]
    b_vars = _parse_selector(b, joint.names)[0]
    g_vars = _parse_selector(given, joint.names)[0] if given else ()
    val = joint.mutual_information(a_vars, b_vars, g_vars)
    if -IDENTITY_TOL < val < 0:
        return 0.0
    return val


def attach_channel(dist: FiniteJoint, channel, name: str = "Yhat") -> ExtendedJoint:
    """Extend p(x, y) with a reproduction drawn from q(yhat | x, y).

    ``channel`` may have shape (|X|, |Y|, |Yhat|) or (|Y|, |Yhat|) when the
    channel ignores x.
    """
    q = np.asarray(channel, dtype=float)
    nx, ny = dist.pmf.shape
    if q.ndim == 2:
        q = np.broadcast_to(q, (nx,) + q.shape)
    if q.ndim != 3 or q.shape[:2] != (nx, ny):
        raise UsageError(f"channel shape {np.shape(channel)} incompatible with joint {dist.pmf.shape}")
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=2) - 1.0) > 1e-9):
        raise UsageError("channel rows must be probability vectors")
    return ExtendedJoint(("X", "Y", name), dist.pmf[:, :, None] * q)


class Divergence(NamedTuple):
    kl_nats: float
    kl_bits: float
    dv: float


def kl_and_variational(p, q) -> Divergence:
    """Relative entropy D(p||q) and variational distance sum |p - q|.

    The variational distance is twice the largest difference in probability
    assigned to any event, which on a finite alphabet equals the L1 distance.
    """
    if isinstance(p, FiniteJoint) or isinstance(q, FiniteJoint):
        if not (isinstance(p, FiniteJoint) and isinstance(q, FiniteJoint)):
            raise UsageError("both arguments must be FiniteJoint")
        if p.pmf.shape != q.pmf.shape or not np.allclose(p.y_alphabet, q.y_alphabet):
            raise UsageError("distributions are defined on different alphabets")
        if list(map(str, p.x_alphabet)) != list(map(str, q.x_alphabet)):
            raise UsageError("distributions are defined on different x alphabets")
        pa, qa = p.pmf.ravel(), q.pmf.ravel()
    else:
        pa = np.asarray(p, dtype=float).ravel()
        qa = np.asarray(q, dtype=float).ravel()
        if pa.shape != qa.shape:
            raise UsageError(f"shape mismatch {np.shape(p)} vs {np.shape(q)}")
    dv = float(np.abs(pa - qa).sum())
    support = pa > 0
    if np.any(qa[support] == 0):
        return Divergence(math.inf, math.inf, dv)
    ps, qs = pa[support], qa[support]
    kl = float(np.sum(ps * (np.log(ps) - np.log(qs))))
    kl = max(kl, 0.0)
    return Divergence(kl, kl / math.log(2), dv)


# -- regression model and its discretization ---------------------------------


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear function on [breaks[0], breaks[-1]], possibly discontinuous.

    Segment k runs linearly from ``left[k]`` at ``breaks[k]`` to ``right[k]`` at
    ``breaks[k+1]``. Evaluation is right-continuous at interior breaks.
    """

    breaks: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        lo = np.asarray(self.left, dtype=float)
        hi = np.asarray(self.right, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise UsageError("breaks must be strictly increasing with at least two entries")
        if lo.shape != (b.size - 1,) or hi.shape != (b.size - 1,):
            raise UsageError("need one (left, right) value pair per segment")
        for arr in (b, lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "left", lo)
        object.__setattr__(self, "right", hi)

    @classmethod
    def from_knots(cls, xs, ys) -> "PiecewiseLinear":
        ys = np.asarray(ys, dtype=float)
        return cls(xs, ys[:-1], ys[1:])

    @classmethod
    def from_steps(cls, a: float, b: float, values) -> "PiecewiseLinear":
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(a, b, values.size + 1), values, values)

    @classmethod
    def constant(cls, a: float, b: float, value: float) -> "PiecewiseLinear":
        return cls.from_steps(a, b, [value])

    @property
    def domain(self) -> tuple:
        return float(self.breaks[0]), float(self.breaks[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, self.left.size - 1)
        x0 = self.breaks[k]
        w = self.breaks[k + 1] - x0
        t = (x - x0) / w
        return self.left[k] + t * (self.right[k] - self.left[k])

    def value_range(self) -> tuple:
        vals = np.concatenate([self.left, self.right])
        return float(vals.min()), float(vals.max())

    def _pieces(self, edges: np.ndarray):
        """Split at the union of own breaks and ``edges``; return endpoint values."""
        pts = np.union1d(self.breaks, edges)
        a, b = self.domain
        pts = pts[(pts >= a) & (pts <= b)]
        lo, hi = pts[:-1], pts[1:]
        mid = 0.5 * (lo + hi)
        k = np.clip(np.searchsorted(self.breaks, mid, side="right") - 1, 0, self.left.size - 1)
        x0 = self.breaks[k]
        w = self.breaks[k + 1] - x0
        slope = (self.right[k] - self.left[k]) / w
        v0 = self.left[k] + slope * (lo - x0)
        v1 = self.left[k] + slope * (hi - x0)
        return lo, hi, v0, v1

    def cell_moments(self, edges) -> tuple:
        """Exact integrals of 1, f and f^2 over each cell ``[edges[i], edges[i+1]]``."""
        edges = np.asarray(edges, dtype=float)
        lo, hi, v0, v1 = self._pieces(edges)
        length = hi - lo
        m1 = length * (v0 + v1) / 2
        m2 = length * (v0 * v0 + v0 * v1 + v1 * v1) / 3
        cell = np.clip(np.searchsorted(edges, 0.5 * (lo + hi), side="right") - 1, 0, edges.size - 2)
        n = edges.size - 1
        return (
            np.bincount(cell, weights=length, minlength=n),
            np.bincount(cell, weights=m1, minlength=n),
            np.bincount(cell, weights=m2, minlength=n),
        )

    def sq_distance(self, other: "PiecewiseLinear") -> float:
        """Exact squared L2 distance under the uniform law on the shared domain."""
        if not np.allclose(self.domain, other.domain):
            raise UsageError("functions live on different domains")
        edges = np.union1d(self.breaks, other.breaks)
        lo, hi, a0, a1 = self._pieces(edges)
        _, _, b0, b1 = other._pieces(edges)
        d0, d1 = a0 - b0, a1 - b1
        total = np.sum((hi - lo) * (d0 * d0 + d0 * d1 + d1 * d1) / 3)
        a, b = self.domain
        return float(total / (b - a))

    def to_json(self) -> dict:
        return {"breaks": self.breaks.tolist(), "left": self.left.tolist(), "right": self.right.tolist()}

    @classmethod
    def from_json(cls, obj) -> "PiecewiseLinear":
        if "knots" in obj:
            return cls.from_knots(obj["knots"], obj["values"])
        if "steps" in obj:
            a, b = obj.get("domain", (0.0, 1.0))
            return cls.from_steps(a, b, obj["steps"])
        return cls(obj["breaks"], obj["left"], obj["right"])


@dataclass(frozen=True)
class RegressionModel:
    """Y = f0(X) + Z with X uniform on ``domain`` and Z ~ Normal(0, sigma^2)."""

    f0: PiecewiseLinear
    sigma: float
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        a, b = (float(v) for v in self.domain)
        object.__setattr__(self, "domain", (a, b))
        if not self.sigma > 0:
            raise UsageError(f"sigma must be positive, got {self.sigma}")
        if not b > a:
            raise UsageError(f"empty domain {self.domain}")
        if not np.allclose(self.f0.domain, (a, b)):
            raise UsageError(f"f0 is defined on {self.f0.domain}, model domain is {(a, b)}")
        lo, hi = self.f0.value_range()
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise UsageError(f"f0 must map into [0, 1]; breakpoint values span [{lo}, {hi}]")

    @property
    def volume(self) -> float:
        return self.domain[1] - self.domain[0]

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        a, b = self.domain
        x = rng.uniform(a, b, size=n)
        z = rng.normal(0.0, self.sigma, size=n)
        return x, self.f0(x) + z


@dataclass(frozen=True)
class DiscretizationSpec:
    x_bins: int = 1
    y_grid: int = 512
    y_span: float = 6.0
    output_range: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        if int(self.x_bins) != self.x_bins or self.x_bins < 1:
            raise UsageError(f"x_bins must be a positive integer, got {self.x_bins}")
        if int(self.y_grid) != self.y_grid or self.y_grid < 2:
            raise UsageError(f"y_grid must be an integer >= 2, got {self.y_grid}")
        if not self.y_span > 0:
            raise UsageError(f"y_span must be positive, got {self.y_span}")


MAX_TRUNCATED_MASS = 1e-6


def discretize_regression(model: RegressionModel, spec: DiscretizationSpec | None = None) -> FiniteJoint:
    """Finite surrogate of the regression law p_f(x, y) = N(y; f(x), sigma^2) / V.

    The domain is cut into ``x_bins`` equal bins represented by their centres.
    The output axis covers ``output_range`` widened by ``y_span * sigma`` on each
    side and is split into ``y_grid`` equal cells represented by their centres.
    Each row is renormalized after truncation so that it carries exactly
    1 / x_bins of the mass.
    """
    spec = spec or DiscretizationSpec()
    a, b = model.domain
    s = model.sigma
    x_edges = np.linspace(a, b, spec.x_bins + 1)
    x_centres = 0.5 * (x_edges[:-1] + x_edges[1:])
    lo, hi = spec.output_range
    y_edges = np.linspace(lo - spec.y_span * s, hi + spec.y_span * s, spec.y_grid + 1)
    y_centres = 0.5 * (y_edges[:-1] + y_edges[1:])
    means = model.f0(x_centres)
    z = (y_edges[None, :] - means[:, None]) / s
    # difference of upper tails is accurate on the right side, of lower tails on the left
    cdf = ndtr(z)
    sf = ndtr(-z)
    cells = np.where(z[:, :-1] > 0, sf[:, :-1] - sf[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    cells = np.clip(cells, 0.0, None)
    truncated = 1.0 - cells.sum(axis=1)
    worst = float(truncated.max())
    if worst >= MAX_TRUNCATED_MASS:
        raise UsageError(
            f"output grid too narrow: truncated tail mass {worst:.3g} >= {MAX_TRUNCATED_MASS:g}; "
            f"increase y_span (now {spec.y_span})"
        )
    rows = cells / cells.sum(axis=1, keepdims=True) / spec.x_bins
    # absorb residual rounding so the total is 1 to machine precision
    rows /= rows.sum()
    return FiniteJoint(tuple(float(c) for c in x_centres), y_centres, rows)
