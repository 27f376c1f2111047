"""Hypothesis grids, empirical risk minimization and regression risks.

Hypothesis classes are finite grids of piecewise-constant functions on a
uniform partition of an interval. Because every member is constant on the
cells, the empirical risk of all members at once reduces to a table of
per-cell losses, which keeps ERM over tens of thousands of functions cheap
and exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapExceeded, UsageError
from .losses import LossFunction, eval_eta, eta_concavity_violation
from .probability import (
    DiscretizationSpec,
    PiecewiseLinear,
    RegressionModel,
    discretize_regression,
    kl_and_variational,
)

__all__ = [
    "LossFunction",
    "eval_eta",
    "eta_concavity_violation",
    "HypothesisGrid",
    "modulus_soundness_check",
    "empirical_risk",
    "empirical_risks",
    "erm",
    "true_risk_regression",
    "true_risks_regression",
    "covering_number",
    "family_net_from_function_net",
    "max_risk_deviation",
    "moment_condition",
]

DEFAULT_GRID_CAP = 2_000_000


@dataclass(frozen=True)
class HypothesisGrid:
    """Finite ordered class of piecewise-constant functions on ``edges``.

    ``index`` holds, for every member and cell, an index into ``levels``;
    member ``i`` takes value ``levels[index[i, k]]`` on cell ``k``. The row
    order is the enumeration order and decides ERM ties.
    """

    edges: np.ndarray
    levels: np.ndarray
    index: np.ndarray
    epsilon: float | None = None
    lipschitz_bound: float | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        index = np.asarray(self.index, dtype=np.int64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise UsageError("edges must be strictly increasing")
        if index.ndim != 2 or index.shape[1] != edges.size - 1:
            raise UsageError(f"index must have one column per cell ({edges.size - 1})")
        if index.shape[0] == 0:
            raise UsageError("hypothesis grid is empty")
        if index.min() < 0 or index.max() >= levels.size:
            raise UsageError("level index out of range")
        if levels.min() < -1e-12 or levels.max() > 1 + 1e-12:
            raise UsageError("hypothesis values must lie in [0, 1]")
        for arr in (edges, levels, index):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "index", index)

    # -- construction -------------------------------------------------------

    @classmethod
    def lattice(
        cls,
        domain: tuple = (0.0, 1.0),
        cells: int = 4,
        levels: int | Sequence[float] = 4,
        max_jump: int | None = None,
        lipschitz: float | None = None,
        cap: int = DEFAULT_GRID_CAP,
        epsilon: float | None = None,
    ) -> "HypothesisGrid":
        """All level sequences on ``cells`` cells, in lexicographic order.

        ``levels`` is either q (giving {0, 1/q, ..., 1}) or an explicit list.
        A Lipschitz bound L limits adjacent level values to differ by at most
        L times the cell width; ``max_jump`` limits the index difference
        directly.
        """
        a, b = domain
        edges = np.linspace(a, b, cells + 1)
        if np.isscalar(levels):
            q = int(levels)
            if q < 1:
                raise UsageError("need at least two levels")
            lv = np.arange(q + 1) / q
        else:
            lv = np.asarray(levels, dtype=float)
        jump = max_jump
        if lipschitz is not None:
            width = (b - a) / cells
            spacing = np.min(np.diff(lv)) if lv.size > 1 else 1.0
            from_l = int(math.floor(lipschitz * width / spacing + 1e-12))
            jump = from_l if jump is None else min(jump, from_l)
        count = count_sequences(lv.size, cells, jump)
        if count > cap:
            raise CapExceeded(f"grid would hold {count} functions, cap is {cap}", size=count, cap=cap)
        index = _enumerate_sequences(lv.size, cells, jump)
        return cls(edges, lv, index, epsilon=epsilon, lipschitz_bound=lipschitz)

    @classmethod
    def explicit(cls, domain: tuple, values) -> "HypothesisGrid":
        """Grid from a user-supplied (N, m) array of cell values."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise UsageError("values must be a 2-D array (functions x cells)")
        lv, inv = np.unique(values, return_inverse=True)
        a, b = domain
        return cls(np.linspace(a, b, values.shape[1] + 1), lv, inv.reshape(values.shape))

    # -- access --------------------------------------------------------------

    def __len__(self) -> int:
        return self.index.shape[0]

    @property
    def cells(self) -> int:
        return self.edges.size - 1

    @property
    def domain(self) -> tuple:
        return float(self.edges[0]), float(self.edges[-1])

    @property
    def values(self) -> np.ndarray:
        return self.levels[self.index]

    def cell_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.cells - 1)

    def evaluate(self, i: int, x) -> np.ndarray:
        return self.levels[self.index[i]][self.cell_of(x)]

    def member(self, i: int) -> PiecewiseLinear:
        v = self.levels[self.index[i]]
        return PiecewiseLinear(self.edges, v, v)

    def find(self, values) -> int:
        """Index of the member with the given cell values, or -1."""
        target = np.asarray(values, dtype=float)
        hits = np.nonzero(np.all(np.isclose(self.values, target[None, :], atol=1e-12), axis=1))[0]
        return int(hits[0]) if hits.size else -1

    def to_json(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "levels": self.levels.tolist(),
            "index": self.index.tolist(),
            "epsilon": self.epsilon,
            "lipschitz_bound": self.lipschitz_bound,
        }

    @classmethod
    def from_json(cls, obj) -> "HypothesisGrid":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if "values" in obj:
            return cls.explicit(tuple(obj.get("domain", (0.0, 1.0))), obj["values"])
        if "index" in obj:
            return cls(obj["edges"], obj["levels"], obj["index"], obj.get("epsilon"), obj.get("lipschitz_bound"))
        return cls.lattice(
            tuple(obj.get("domain", (0.0, 1.0))),
            int(obj.get("cells", 4)),
            obj.get("levels", 4),
            obj.get("max_jump"),
            obj.get("lipschitz"),
        )


def count_sequences(k: int, m: int, jump: int | None) -> int:
    """Number of length-m sequences over k symbols with adjacent gaps <= jump (exact)."""
    if jump is None or jump >= k - 1:
        return k**m
    v = [1] * k
    for _ in range(m - 1):
        prefix = [0]
        for c in v:
            prefix.append(prefix[-1] + c)
        v = [prefix[min(k, i + jump + 1)] - prefix[max(0, i - jump)] for i in range(k)]
    return sum(v)


def _log2_count_sequences(k: int, m: int, jump: int | None) -> float:
    if jump is None or jump >= k - 1:
        return m * math.log2(k)
    v = np.ones(k)
    log_scale = 0.0
    kernel = np.ones(2 * jump + 1)
    for _ in range(m - 1):
        v = np.convolve(v, kernel, mode="same")
        top = v.max()
        v /= top
        log_scale += math.log2(top)
    return log_scale + math.log2(v.sum())


def _enumerate_sequences(k: int, m: int, jump: int | None) -> np.ndarray:
    seqs = np.arange(k, dtype=np.int64)[:, None]
    for _ in range(m - 1):
        last = seqs[:, -1]
        nxt = np.arange(k, dtype=np.int64)
        ok = np.ones((seqs.shape[0], k), dtype=bool) if jump is None else np.abs(last[:, None] - nxt[None, :]) <= jump
        rows, cols = np.nonzero(ok)
        seqs = np.concatenate([seqs[rows], nxt[cols][:, None]], axis=1)
    return seqs


# -- risks -------------------------------------------------------------------


def _as_callable(f, grid: HypothesisGrid | None = None):
    if isinstance(f, (int, np.integer)):
        if grid is None:
            raise UsageError("an integer hypothesis needs its grid")
        return lambda x: grid.evaluate(int(f), x)
    return f


def empirical_risk(f, x, y, loss: LossFunction, grid: HypothesisGrid | None = None) -> float:
    """Sample mean of loss(f(x_i), y_i)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise UsageError("empirical risk of an empty sample")
    f = _as_callable(f, grid)
    return float(np.mean(loss(f(x), y)))


def cell_loss_table(grid: HypothesisGrid, x, y, loss: LossFunction) -> np.ndarray:
    """Summed loss of each level against the outputs falling in each cell."""
    cell = grid.cell_of(x)
    per_sample = loss(grid.levels[None, :], np.asarray(y, dtype=float)[:, None])
    table = np.zeros((grid.cells, grid.levels.size))
    np.add.at(table, cell, per_sample)
    return table


def empirical_risks(grid: HypothesisGrid, x, y, loss: LossFunction) -> np.ndarray:
    """Empirical risk of every member of ``grid`` on the sample (x, y)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise UsageError("empirical risk of an empty sample")
    table = cell_loss_table(grid, x, y, loss)
    cols = np.arange(grid.cells)
    return table[cols[None, :], grid.index].sum(axis=1) / x.size


class ERMResult(NamedTuple):
    index: int
    risk: float
    risks: np.ndarray


def erm(grid: HypothesisGrid, x, y, loss: LossFunction) -> ERMResult:
    """Empirical risk minimizer over the grid; ties go to the lowest index."""
    risks = empirical_risks(grid, x, y, loss)
    i = int(np.argmin(risks))
    return ERMResult(i, float(risks[i]), risks)


def true_risk_regression(g, model: RegressionModel, loss: LossFunction | None = None) -> float:
    """L(g, P_f) = ||f0 - g||^2 + sigma^2 in closed form (squared loss only)."""
    if loss is not None and loss.kind != "squared":
        raise UsageError("closed-form regression risk needs squared loss")
    if not isinstance(g, PiecewiseLinear):
        raise UsageError("g must be a PiecewiseLinear function")
    return model.f0.sq_distance(g) + model.sigma**2


def true_risks_regression(grid: HypothesisGrid, model: RegressionModel, loss: LossFunction | None = None) -> np.ndarray:
    """Closed-form true risk of every grid member under the regression model."""
    if loss is not None and loss.kind != "squared":
        raise UsageError("closed-form regression risk needs squared loss")
    if not np.allclose(grid.domain, model.domain):
        raise UsageError("grid and model domains differ")
    w, m1, m2 = model.f0.cell_moments(grid.edges)
    c = grid.values
    per_cell = m2[None, :] - 2 * c * m1[None, :] + c * c * w[None, :]
    return per_cell.sum(axis=1) / model.volume + model.sigma**2


def max_risk_deviation(grid: HypothesisGrid, model: RegressionModel, x, y, loss: LossFunction) -> float:
    """sup over the grid of |empirical risk - true risk|."""
    return float(np.max(np.abs(empirical_risks(grid, x, y, loss) - true_risks_regression(grid, model, loss))))


def moment_condition(grid: HypothesisGrid, model: RegressionModel, loss: LossFunction, n: int, rng, y0: float = 0.0):
    """Sample E[l(Y, y0)^(1+delta)] under P_f for every member f of the grid."""
    out = np.empty(len(grid))
    a, b = model.domain
    for i in range(len(grid)):
        x = rng.uniform(a, b, n)
        y = grid.evaluate(i, x) + rng.normal(0.0, model.sigma, n)
        out[i] = loss.moment(y, y0)
    return out


# -- modulus soundness -------------------------------------------------------


def modulus_soundness_check(loss: LossFunction, grid: HypothesisGrid, trials: int, rng=None, u_range=(0.0, 1.0)) -> float:
    """Largest observed |l(f(x),u) - l(f(x),u')| - eta(l(u,u')) over random draws.

    Values <= 1e-12 mean no violation was found.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    a, b = grid.domain
    idx = rng.integers(0, len(grid), trials)
    x = rng.uniform(a, b, trials)
    fx = grid.levels[grid.index[idx, grid.cell_of(x)]]
    if loss.kind == "hamming":
        support = np.union1d(grid.levels, [0.0, 1.0])
        u = rng.choice(support, trials)
        u2 = rng.choice(support, trials)
    else:
        u = rng.uniform(*u_range, trials)
        u2 = rng.uniform(*u_range, trials)
    gap = np.abs(loss(fx, u) - loss(fx, u2)) - loss.eta(loss(u, u2))
    return float(gap.max())


# -- covering numbers --------------------------------------------------------


class Covering(NamedTuple):
    count: int
    log2_count: float
    cells: int
    levels: int
    max_jump: int
    epsilon: float
    grid: HypothesisGrid | None


def covering_number(
    lipschitz: float,
    epsilon: float,
    domain: tuple = (0.0, 1.0),
    norm: str = "sup",
    materialize: bool = True,
    cap: int = DEFAULT_GRID_CAP,
) -> Covering:
    """Constructive epsilon-net for L-Lipschitz functions from ``domain`` into [0, 1].

    Each net element is constant on m equal cells with values on the K
    midpoint levels (j + 1/2)/K. Sampling an L-Lipschitz f at cell centres
    costs at most L*w/2 and rounding to a level at most 1/(2K); adjacent
    rounded levels then differ by at most floor(L*w*K) + 1 indices, so the
    net keeps only sequences with that jump bound. The cell count is chosen
    to minimize the net size. The sup-norm net is also an L2(Q) net of the
    same radius.
    """
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    if lipschitz < 0:
        raise UsageError("Lipschitz constant must be nonnegative")
    if norm not in ("sup", "l2"):
        raise UsageError(f"unknown norm {norm!r}")
    a, b = domain
    V = b - a

    def levels_for(budget):
        return max(1, math.ceil(1.0 / (2.0 * budget) - 1e-12))

    if lipschitz == 0:
        best = (1, levels_for(epsilon), 0)
    else:
        best, best_log = None, math.inf
        m_lo = max(1, math.floor(lipschitz * V / (2 * epsilon)))
        m_hi = max(m_lo + 1, math.ceil(4 * lipschitz * V / epsilon) + 2)
        for m in range(m_lo, m_hi + 1):
            w = V / m
            budget = epsilon - lipschitz * w / 2
            if budget <= 0:
                continue
            k = levels_for(budget)
            jump = min(k - 1, math.floor(lipschitz * w * k + 1e-12) + 1)
            lg = _log2_count_sequences(k, m, jump)
            if lg < best_log - 1e-9:
                best, best_log = (m, k, jump), lg
    m, k, jump = best
    count = count_sequences(k, m, jump)
    grid = None
    if materialize:
        if count > cap:
            raise CapExceeded(f"epsilon-net has {count} elements, cap is {cap}", size=count, cap=cap)
        lv = (np.arange(k) + 0.5) / k
        grid = HypothesisGrid(
            np.linspace(a, b, m + 1), lv, _enumerate_sequences(k, m, jump), epsilon=epsilon, lipschitz_bound=lipschitz
        )
    return Covering(count, math.log2(count), m, k, jump, epsilon, grid)


class FamilyNetCertificate(NamedTuple):
    dv_radius: float
    checks: tuple
    worst_slack: float


def family_net_from_function_net(
    grid: HypothesisGrid,
    sigma: float,
    pairs: int = 0,
    rng=None,
    spec: DiscretizationSpec | None = None,
) -> FamilyNetCertificate:
    """Variational-distance radius of the induced family {P_f : f in grid}.

    A grid that is an epsilon'-net in L2(Q) induces an (epsilon'/sigma)-net of
    the Gaussian regression family in variational distance. ``pairs`` random
    member pairs are additionally checked on a discretization:
    d_V(P_f, P_g) <= ||f - g|| / sigma must hold up to discretization error.
    """
    if grid.epsilon is None:
        raise UsageError("grid does not certify a covering radius")
    if not sigma > 0:
        raise UsageError("sigma must be positive")
    radius = grid.epsilon / sigma
    rng = np.random.default_rng(rng)
    spec = spec or DiscretizationSpec(x_bins=grid.cells * 4, y_grid=2048)
    checks = []
    worst = math.inf
    for _ in range(pairs):
        i, j = (int(v) for v in rng.integers(0, len(grid), 2))
        f, g = grid.member(i), grid.member(j)
        pf = discretize_regression(RegressionModel(f, sigma, grid.domain), spec)
        pg = discretize_regression(RegressionModel(g, sigma, grid.domain), spec)
        dv = kl_and_variational(pf, pg).dv
        bound = math.sqrt(f.sq_distance(g)) / sigma
        checks.append((i, j, dv, bound))
        worst = min(worst, bound - dv)
    return FamilyNetCertificate(radius, tuple(checks), worst if checks else math.inf)
