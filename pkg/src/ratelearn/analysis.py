"""Achievability bounds, per-realization inequality chains and converse checks."""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapExceeded, UsageError
from .learning import HypothesisGrid, empirical_risks, max_risk_deviation
from .losses import LossFunction
from .probability import FiniteJoint, RegressionModel
from .rd import RDCurve, gaussian_drf, invert_curve

__all__ = [
    "theorem1_bound",
    "theorem2_bound",
    "theorem3_bound",
    "finite_sample_bound",
    "BoundReport",
    "bound_report",
    "ChainStep",
    "ChainReport",
    "proof_chain_check",
    "DobrushinTrend",
    "dobrushin_diagnostic",
    "Scheme",
    "appendix_chain_verify",
    "calibrate_c_prime",
    "ulln_deviations",
]

CHAIN_TOL = 1e-12
APPENDIX_TOL = 1e-9
APPENDIX_CAP = 4**3 * 4**3


def _nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise UsageError(f"{k} must be nonnegative, got {v}")


def theorem1_bound(lstar: float, loss: LossFunction, sup_drf: float) -> float:
    """L* + 2 eta(D)."""
    _nonneg(lstar=lstar, sup_drf=sup_drf)
    return float(lstar + 2.0 * loss.eta(sup_drf))


def theorem2_bound(lstar: float, r: float, sup_drf: float) -> float:
    """L*^(1/r) + 2 D^(1/r), a bound on the r-th root of the risk."""
    _nonneg(lstar=lstar, sup_drf=sup_drf)
    if r < 1:
        raise UsageError("metric power r must be >= 1")
    return float(lstar ** (1.0 / r) + 2.0 * sup_drf ** (1.0 / r))


def theorem3_bound(sigma: float, rate: float) -> float:
    """sigma * (1 + 2^(1-R)), a bound on the expected root risk in Gaussian regression."""
    if not sigma > 0:
        raise UsageError("sigma must be positive")
    _nonneg(rate=rate)
    return float(sigma * (1.0 + 2.0 ** (1.0 - rate)))


def finite_sample_bound(measured_ln: float, loss: LossFunction, lstar: float, c_prime: float, n: int) -> float:
    """L* + 2 eta(l_n) + C'/sqrt(n)."""
    _nonneg(measured_ln=measured_ln, lstar=lstar, c_prime=c_prime)
    if n < 1:
        raise UsageError("n must be >= 1")
    return float(lstar + 2.0 * loss.eta(measured_ln) + c_prime / math.sqrt(n))


@dataclass
class BoundReport:
    rate: float
    sup_drf: float
    lstar: float
    loss: str
    theorem1_bound: float
    theorem2_bound: float | None
    theorem3_bound: float | None = None
    remark2_terms: tuple | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [
            f"rate                 {self.rate:g}",
            f"sup DRF              {self.sup_drf:.10g}",
            f"L*                   {self.lstar:.10g}",
            f"theorem1 bound       {self.theorem1_bound:.10g}",
        ]
        if self.theorem2_bound is not None:
            lines.append(f"theorem2 bound       {self.theorem2_bound:.10g}")
        if self.theorem3_bound is not None:
            lines.append(f"theorem3 bound       {self.theorem3_bound:.10g}")
        if self.remark2_terms is not None:
            lines.append("remark2 terms        " + ", ".join(f"{t:.10g}" for t in self.remark2_terms))
        return "\n".join(lines)


def bound_report(
    rate: float,
    loss: LossFunction,
    sup_drf: float | None = None,
    lstar: float | None = None,
    sigma: float | None = None,
    measured_ln: float | None = None,
    c_prime: float | None = None,
    n: int | None = None,
) -> BoundReport:
    """Evaluate all applicable bounds.

    Passing ``sigma`` selects the Gaussian regression family: the sup-DRF
    defaults to sigma^2 2^(-2R), L* to sigma^2, and the root-risk bound sigma(1 + 2^(1-R)) is
    included.
    """
    gaussian = sigma is not None
    if gaussian:
        sup_drf = gaussian_drf(sigma, rate) if sup_drf is None else sup_drf
        lstar = sigma**2 if lstar is None else lstar
    if sup_drf is None or lstar is None:
        raise UsageError("need sup_drf and lstar, or sigma for the Gaussian family")
    remark2 = None
    if measured_ln is not None and c_prime is not None and n is not None:
        remark2 = (2.0 * float(loss.eta(measured_ln)), c_prime / math.sqrt(n))
    return BoundReport(
        rate=float(rate),
        sup_drf=float(sup_drf),
        lstar=float(lstar),
        loss=loss.name,
        theorem1_bound=theorem1_bound(lstar, loss, sup_drf),
        theorem2_bound=theorem2_bound(lstar, loss.r, sup_drf),
        theorem3_bound=theorem3_bound(sigma, rate) if gaussian else None,
        remark2_terms=remark2,
    )


# -- chains ------------------------------------------------------------------


@dataclass
class ChainStep:
    label: str
    left: float
    relation: str
    right: float
    slack: float


@dataclass
class ChainReport:
    """Values and slacks of an inequality chain.

    For ">=" and "<=" steps the slack is how far the inequality holds with
    room to spare; for "=" steps it is minus the absolute mismatch.
    """

    name: str
    steps: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def add(self, label: str, left: float, relation: str, right: float) -> ChainStep:
        left, right = float(left), float(right)
        if relation == ">=":
            slack = left - right
        elif relation == "<=":
            slack = right - left
        elif relation == "=":
            slack = -abs(left - right)
        else:
            raise ValueError(relation)
        step = ChainStep(label, left, relation, right, slack)
        self.steps.append(step)
        return step

    @property
    def worst_slack(self) -> float:
        return min((s.slack for s in self.steps), default=math.inf)

    def ok(self, tol: float) -> bool:
        return self.worst_slack >= -tol

    def to_json(self) -> dict:
        return {"name": self.name, "steps": [asdict(s) for s in self.steps], "worst_slack": self.worst_slack,
                "extras": self.extras}

    def to_text(self) -> str:
        width = max((len(s.label) for s in self.steps), default=4)
        lines = [f"{self.name}"]
        for s in self.steps:
            lines.append(f"  {s.label:<{width}}  {s.left:.12g} {s.relation} {s.right:.12g}   slack {s.slack:.3e}")
        for k, v in self.extras.items():
            lines.append(f"  {k}: {v}")
        lines.append(f"  worst slack {self.worst_slack:.3e}")
        return "\n".join(lines)


def proof_chain_check(
    x,
    y,
    yhat,
    grid: HypothesisGrid,
    loss: LossFunction,
    fhat: int,
    allow_non_erm: bool = False,
    form: str = "auto",
) -> ChainReport:
    """Check the learner's inequality chain on one realization.

    With eta-form (valid when eta bounds loss changes for the data at hand):
    L_Y(f) <= L_Yhat(f) + eta(l_n) = L*_Yhat + eta(l_n) <= L*_Y + 2 eta(l_n).
    For power losses on unbounded data the same chain is checked for r-th
    roots, where the triangle inequality of the empirical L^r norm plays the
    role of eta: L_Y(f)^(1/r) <= L_Yhat(f)^(1/r) + l_n^(1/r), and so on.

    ``fhat`` must be the ERM index on (x, yhat) unless ``allow_non_erm``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    risk_y = empirical_risks(grid, x, y, loss)
    risk_q = empirical_risks(grid, x, yhat, loss)
    best_q = float(risk_q.min())
    if risk_q[fhat] > best_q and not allow_non_erm:
        raise UsageError(f"hypothesis {fhat} is not the empirical risk minimizer on the compressed data")
    ln = float(np.mean(loss(y, yhat)))
    if form == "auto":
        in_unit = all(a.min() >= 0 and a.max() <= 1 for a in (y, yhat, grid.levels))
        form = "eta" if loss.eta_valid_on_reals or in_unit else "root"
    if form == "eta":
        tr = lambda v: v  # noqa: E731
        term = float(loss.eta(ln))
    elif form == "root":
        r = loss.r
        tr = lambda v: np.asarray(v, dtype=float) ** (1.0 / r)  # noqa: E731
        term = ln ** (1.0 / r)
    else:
        raise UsageError(f"unknown chain form {form!r}")
    ry, rq = tr(risk_y), tr(risk_q)
    rep = ChainReport(f"learner chain ({form})")
    rep.add("uniform deviation", float(np.max(np.abs(ry - rq))), "<=", term)
    rep.add("(a)", float(ry[fhat]), "<=", float(rq[fhat]) + term)
    rep.add("(b)", float(rq[fhat]) + term, "=", float(np.min(rq)) + term)
    rep.add("(c)", float(np.min(rq)) + term, "<=", float(np.min(ry)) + 2 * term)
    rep.extras = {"l_n": ln, "form": form, "fhat": int(fhat)}
    return rep


# -- Dobrushin diagnostic ----------------------------------------------------


@dataclass
class DobrushinTrend:
    c: float
    log2_ratios: list
    decreasing: bool


def dobrushin_diagnostic(eps: Sequence[float], entropy: Sequence[float], c_values: Sequence[float]) -> list:
    """Trend of H(eps)/2^(c/eps) along decreasing eps, for each c.

    This is a finite-range diagnostic of the limit condition, not a proof.
    Ratios are handled as log2 values; a zero entropy gives -inf throughout.
    """
    eps = np.asarray(eps, dtype=float)
    h = np.asarray(entropy, dtype=float)
    if eps.size < 3 or h.size != eps.size:
        raise UsageError("need at least three (eps, H) samples")
    if np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise UsageError("eps values must be positive and strictly decreasing")
    if np.any(h < 0):
        raise UsageError("entropy values must be nonnegative")
    out = []
    with np.errstate(divide="ignore"):
        log_h = np.log2(h)
    for c in c_values:
        if not c > 0:
            raise UsageError("c must be positive")
        lr = log_h - c / eps
        dec = bool(np.all(np.isneginf(lr)) or np.all(np.diff(lr) < 0))
        out.append(DobrushinTrend(float(c), lr.tolist(), dec))
    return out


# -- Appendix converse chain -------------------------------------------------


def _mixed_index(digits, base):
    v = 0
    for d in digits:
        v = v * base + d
    return v


def _key(t):
    return ",".join(str(int(v)) for v in t)


@dataclass
class Scheme:
    """A concrete block scheme on symbol indices.

    ``encoder(xs, ys) -> J``, ``decoder(xs, J) -> yhat tuple`` and
    ``learner(xs, yhats) -> tuple of hypothesis outputs on xs``, all over
    alphabet indices.
    """

    encoder: Callable
    decoder: Callable
    learner: Callable
    name: str = ""

    @classmethod
    def from_json(cls, obj: dict, joint: FiniteJoint, loss: LossFunction, n: int) -> "Scheme":
        ny, nx = len(joint.y_alphabet), len(joint.x_alphabet)
        enc, dec, lrn = obj.get("encoder", "identity"), obj.get("decoder", "identity"), obj.get("learner", "erm")

        if enc == "identity":
            encoder = lambda xs, ys: _mixed_index(ys, ny)  # noqa: E731
        elif enc == "constant":
            encoder = lambda xs, ys: 0  # noqa: E731
        elif isinstance(enc, dict):
            enc_table = {k: int(v) for k, v in enc.items()}
            encoder = lambda xs, ys: enc_table[_key(xs) + ";" + _key(ys)]  # noqa: E731
        else:
            raise UsageError(f"unknown encoder {enc!r}")

        if dec == "identity":
            def decoder(xs, j):
                out = []
                for _ in range(n):
                    out.append(j % ny)
                    j //= ny
                return tuple(reversed(out))
        elif isinstance(dec, dict) and "constant" in dec:
            const = tuple(int(v) for v in dec["constant"])
            decoder = lambda xs, j: const  # noqa: E731
        elif isinstance(dec, dict):
            dec_table = {k: tuple(int(u) for u in v) for k, v in dec.items()}
            decoder = lambda xs, j: dec_table[_key(xs) + ";" + str(int(j))]  # noqa: E731
        else:
            raise UsageError(f"unknown decoder {dec!r}")

        if lrn == "erm":
            yv = joint.y_alphabet
            maps = list(itertools.product(range(ny), repeat=nx))

            def learner(xs, yh):
                risks = [sum(float(loss(yv[m[a]], yv[b])) for a, b in zip(xs, yh)) for m in maps]
                best = maps[int(np.argmin(risks))]
                return tuple(best[a] for a in xs)
        elif isinstance(lrn, dict):
            lrn_table = {k: tuple(int(u) for u in v) for k, v in lrn.items()}
            learner = lambda xs, yh: tuple(lrn_table[_key(xs) + ";" + _key(yh)][a] for a in xs)  # noqa: E731
        else:
            raise UsageError(f"unknown learner {lrn!r}")
        return cls(encoder, decoder, learner, obj.get("name", ""))


class _Outcomes:
    """Exact joint of named discrete variables from weighted outcomes."""

    def __init__(self):
        self.prob = []
        self.vals = defaultdict(list)

    def add(self, p, **values):
        self.prob.append(p)
        for k, v in values.items():
            self.vals[k].append(v)

    def entropy(self, *names) -> float:
        if not names:
            return 0.0
        acc = defaultdict(float)
        for i, p in enumerate(self.prob):
            acc[tuple(self.vals[k][i] for k in names)] += p
        q = np.array([v for v in acc.values() if v > 0])
        return float(-(q * np.log2(q)).sum())

    def cond(self, a: Sequence[str], b: Sequence[str]) -> float:
        return self.entropy(*a, *b) - self.entropy(*b)

    def mean(self, values) -> float:
        return float(np.dot(self.prob, values))


def appendix_chain_verify(
    joint: FiniteJoint,
    scheme: Scheme,
    n: int,
    rate: float,
    curve: RDCurve,
    loss: LossFunction,
    cap: int = APPENDIX_CAP,
) -> ChainReport:
    """Evaluate the converse chain nR >= H(J|X^n) >= ... >= n R_{Y|X}(E l_n) exactly.

    Every (x^n, y^n) outcome is enumerated; the encoder, decoder and learner
    are deterministic so their outputs are functions of the outcome. Rate
    values R_{Y|X}(D) come from the curve's dual envelope, which lower-bounds
    the true function and is convex, so both of the last two steps remain
    valid inequalities. Also checks L* >= D at every curve point, where L* is
    the best risk over all maps from inputs to outputs.
    """
    nx, ny = len(joint.x_alphabet), len(joint.y_alphabet)
    size = (nx * ny) ** n
    if size > cap:
        raise CapExceeded(f"{size} outcomes exceed the enumeration cap {cap}", size=size, cap=cap)
    if n < 1:
        raise UsageError("n must be >= 1")
    yv = joint.y_alphabet
    out = _Outcomes()
    max_j = 2.0 ** (n * rate)
    pairs = list(itertools.product(range(nx), range(ny)))
    for combo in itertools.product(pairs, repeat=n):
        p = math.prod(joint.pmf[a, b] for a, b in combo)
        if p == 0:
            continue
        xs = tuple(a for a, _ in combo)
        ys = tuple(b for _, b in combo)
        j = scheme.encoder(xs, ys)
        if not 0 <= j < max_j + 1e-9:
            raise UsageError(f"encoder index {j} exceeds 2^(nR) = {max_j:g}")
        yh = tuple(scheme.decoder(xs, j))
        w = tuple(scheme.learner(xs, yh))
        vals = {"X": xs, "Y": ys, "J": j, "Yh": yh, "W": w}
        for i in range(n):
            vals[f"X{i}"], vals[f"Y{i}"], vals[f"W{i}"] = xs[i], ys[i], w[i]
            vals[f"Ypre{i}"] = ys[:i]
        out.add(p, **vals)

    rep = ChainReport("converse chain")
    h_j = out.cond(["J"], ["X"])
    h_yh = out.cond(["Yh"], ["X"])
    i_yh_y = out.cond(["Yh"], ["X"]) - out.cond(["Yh"], ["X", "Y"])
    h_y = out.cond(["Y"], ["X"])
    h_y_yh = out.cond(["Y"], ["X", "Yh"])
    h_y_yhw = out.cond(["Y"], ["X", "Yh", "W"])
    per_i = [
        out.cond([f"Y{i}"], [f"X{i}"]) - out.cond([f"Y{i}"], ["X", "Yh", "W", f"Ypre{i}"]) for i in range(n)
    ]
    per_i_local = [out.cond([f"Y{i}"], [f"X{i}"]) - out.cond([f"Y{i}"], [f"X{i}", f"W{i}"]) for i in range(n)]
    mi_i = [out.cond([f"W{i}"], [f"X{i}"]) - out.cond([f"W{i}"], [f"X{i}", f"Y{i}"]) for i in range(n)]
    d_i = [out.mean([float(loss(yv[a], yv[b])) for a, b in zip(out.vals[f"W{i}"], out.vals[f"Y{i}"])])
           for i in range(n)]
    ln = float(np.mean(d_i))
    r_i = [curve.rate_at(d, "envelope").value for d in d_i]
    r_ln = curve.rate_at(ln, "envelope").value

    rep.add("nR >= H(J|X^n)", n * rate, ">=", h_j)
    rep.add("H(J|X^n) >= H(Yh^n|X^n)", h_j, ">=", h_yh)
    rep.add("H(Yh^n|X^n) >= I(Yh^n;Y^n|X^n)", h_yh, ">=", i_yh_y)
    rep.add("I(Yh^n;Y^n|X^n) = H(Y^n|X^n) - H(Y^n|X^n,Yh^n)", i_yh_y, "=", h_y - h_y_yh)
    rep.add("W^n is a function of (X^n, Yh^n)", h_y - h_y_yh, "=", h_y - h_y_yhw)
    rep.add("chain rule over i", h_y - h_y_yhw, "=", sum(per_i))
    rep.add("drop conditioning", sum(per_i), ">=", sum(per_i_local))
    rep.add("sum of I(Y_i;W_i|X_i)", sum(per_i_local), "=", sum(mi_i))
    rep.add("I >= R_{Y|X}(E l(W_i,Y_i))", sum(mi_i), ">=", sum(r_i))
    rep.add("convexity", sum(r_i), ">=", n * r_ln)

    px = joint.px
    lmat = loss.matrix(yv, yv)
    lstar = float(sum(px[a] * min(joint.conditional_y()[a] @ lmat[:, u] for u in range(ny)) for a in range(nx)))
    d_rate = invert_curve(curve, rate).value
    for pt in curve.points:
        rep.add(f"L* >= D_Y|X at R={pt.rate:.6g}", lstar, ">=", pt.distortion)
    rep.extras = {
        "expected_l_n": ln,
        "L*": lstar,
        "D_Y|X(R)": d_rate,
        "gap L* - D_Y|X(R)": lstar - d_rate,
        "outcomes": len(out.prob),
    }
    return rep


def load_instance(obj):
    """Parse an Appendix instance: joint, n, rate, loss and scheme tables."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    joint = FiniteJoint.from_json(obj["joint"])
    loss = LossFunction.from_json(obj.get("loss", "hamming"))
    n = int(obj["n"])
    rate = float(obj["rate"])
    scheme = Scheme.from_json(obj.get("scheme", {}), joint, loss, n)
    return joint, loss, n, rate, scheme


# -- finite-sample calibration ------------------------------------------------


def ulln_deviations(grid: HypothesisGrid, model: RegressionModel, loss: LossFunction, ns, trials: int, seed: int):
    """max_f |empirical - true| risk per (n, trial) for samples from the model."""
    out = np.empty((len(ns), trials))
    for a, n in enumerate(ns):
        for t in range(trials):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, int(n), t])))
            x, y = model.sample(rng, int(n))
            out[a, t] = max_risk_deviation(grid, model, x, y, loss)
    return out


def calibrate_c_prime(ns, deviations) -> float:
    """C' = 2 C where C is the least-squares fit of deviation = C / sqrt(n)."""
    ns = np.asarray(ns, dtype=float)
    dev = np.asarray(deviations, dtype=float)
    if dev.ndim == 2:
        dev = dev.mean(axis=1)
    if ns.size == 0 or ns.size != dev.size:
        raise UsageError("need one deviation per sample size")
    c = float(np.sum(dev / np.sqrt(ns)) / np.sum(1.0 / ns))
    return 2.0 * c
