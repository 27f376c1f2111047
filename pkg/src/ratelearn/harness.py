"""Seeded simulation sweeps of compressed-data learning in the regression model.

Each (rate, n, trial) cell draws its data from an independent counter-based
substream, so rows do not depend on scheduling. Rows are merged in key order
and written as one CSV plus one aggregate JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import proof_chain_check, theorem3_bound
from .codec import decode, encode, train_codec
from .errors import UsageError
from .learning import HypothesisGrid, erm, true_risk_regression
from .losses import LossFunction
from .probability import PiecewiseLinear, RegressionModel

__all__ = ["ExperimentConfig", "CSV_COLUMNS", "trial_rng", "run_trial", "run_sweep", "SweepResult", "OUTPUT_ENV"]

OUTPUT_ENV = "RATELEARN_OUTPUT"

CSV_COLUMNS = (
    "rate",
    "n",
    "trial",
    "status",
    "achieved_rate",
    "l_n",
    "fhat",
    "emp_risk_raw",
    "emp_risk_compressed",
    "true_risk",
    "sqrt_risk",
    "excess_risk",
    "slack_uniform",
    "slack_a",
    "slack_b",
    "slack_c",
    "chain_form",
    "error",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep configuration; keys mirror the JSON config file."""

    model: RegressionModel
    grid: HypothesisGrid
    loss: LossFunction = LossFunction("squared")
    codec_kind: str = "conditional-lloyd-max"
    rates: tuple = (1.0, 2.0, 3.0)
    x_bins: int = 8
    held_out: bool = False
    n_list: tuple = (4096,)
    trials: int = 64
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])) or self.n_list[0] < 1:
            raise UsageError("n_list must be nonempty, positive and strictly ascending")
        if any(not r >= 0 for r in self.rates) or not self.rates:
            raise UsageError("rates must be a nonempty list of nonnegative numbers")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        try:
            m = obj["model"]
            model = RegressionModel(PiecewiseLinear.from_json(m["f0"]), float(m["sigma"]), tuple(m.get("domain", (0.0, 1.0))))
            g = dict(obj["grid"])
            g.setdefault("domain", list(model.domain))
            grid = HypothesisGrid.from_json(g)
            codec = obj.get("codec", {})
            return cls(
                model=model,
                grid=grid,
                loss=LossFunction.from_json(obj.get("loss", "squared")),
                codec_kind=codec.get("kind", "conditional-lloyd-max"),
                rates=tuple(float(r) for r in codec.get("rates", (1, 2, 3))),
                x_bins=int(codec.get("x_bins", 8)),
                held_out=bool(codec.get("held_out", False)),
                n_list=tuple(int(n) for n in obj.get("n_list", (4096,))),
                trials=int(obj.get("trials", 64)),
                seed=int(obj.get("seed", 0)),
                output=obj.get("output"),
            )
        except KeyError as exc:
            raise UsageError(f"config is missing key {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(obj)

    def output_dir(self, override: str | None = None) -> Path:
        chosen = override or os.environ.get(OUTPUT_ENV) or self.output
        if not chosen:
            raise UsageError(f"no output directory: set it in the config, pass --output or set {OUTPUT_ENV}")
        return Path(chosen)


def trial_rng(seed: int, rate: float, n: int, trial: int) -> np.random.Generator:
    """Independent Philox substream keyed by (seed, rate, n, trial)."""
    key = [int(seed), int(round(rate * 1e6)), int(n), int(trial)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def run_trial(config: ExperimentConfig, rate: float, n: int, trial: int) -> dict:
    """One compress-then-learn realization; returns a CSV row as a dict."""
    rng = trial_rng(config.seed, rate, n, trial)
    model, grid, loss = config.model, config.grid, config.loss
    x, y = model.sample(rng, n)
    tx, ty = model.sample(rng, n) if config.held_out else (x, y)
    codec = train_codec(config.codec_kind, tx, ty, rate, loss, x_bins=config.x_bins,
                        x_range=model.domain, grid=grid)
    yhat = decode(codec, x, encode(codec, x, y))
    fit = erm(grid, x, yhat, loss)
    chain = proof_chain_check(x, y, yhat, grid, loss, fit.index)
    true = true_risk_regression(grid.member(fit.index), model, loss)
    slacks = {s.label: s.slack for s in chain.steps}
    return {
        "rate": float(rate),
        "n": int(n),
        "trial": int(trial),
        "status": "ok",
        "achieved_rate": codec.achieved_rate(n),
        "l_n": chain.extras["l_n"],
        "fhat": fit.index,
        "emp_risk_raw": float(np.mean(loss(grid.evaluate(fit.index, x), y))),
        "emp_risk_compressed": fit.risk,
        "true_risk": true,
        "sqrt_risk": math.sqrt(true),
        "excess_risk": true - model.sigma**2,
        "slack_uniform": slacks["uniform deviation"],
        "slack_a": slacks["(a)"],
        "slack_b": slacks["(b)"],
        "slack_c": slacks["(c)"],
        "chain_form": chain.extras["form"],
        "error": "",
    }


def _failed_row(rate, n, trial, exc) -> dict:
    row = {c: math.nan for c in CSV_COLUMNS}
    row.update(rate=float(rate), n=int(n), trial=int(trial), status="error", fhat=-1, chain_form="",
               error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return row


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def atomic_write(path: Path, data: str | bytes) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def aggregate(rows, config: ExperimentConfig) -> list:
    """Per (rate, n) means, standard errors and the comparison with sigma*(1 + 2^(1-R))."""
    cells = {}
    for r in rows:
        cells.setdefault((r["rate"], r["n"]), []).append(r)
    out = []
    for (rate, n), rs in cells.items():
        ok = [r for r in rs if r["status"] == "ok"]
        k = len(ok)
        sq = np.array([r["sqrt_risk"] for r in ok])
        ex = np.array([r["excess_risk"] for r in ok])
        se = lambda a: float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan  # noqa: E731
        mean_sq = float(sq.mean()) if k else math.nan
        bound = theorem3_bound(config.model.sigma, rate)
        se_sq = se(sq)
        out.append({
            "rate": rate,
            "n": n,
            "trials": len(rs),
            "failed": len(rs) - k,
            "mean_sqrt_risk": mean_sq,
            "se_sqrt_risk": se_sq,
            "mean_excess_risk": float(ex.mean()) if k else math.nan,
            "se_excess_risk": se(ex),
            "mean_l_n": float(np.mean([r["l_n"] for r in ok])) if k else math.nan,
            "mean_achieved_rate": float(np.mean([r["achieved_rate"] for r in ok])) if k else math.nan,
            "min_chain_slack": float(min(min(r["slack_uniform"], r["slack_a"], r["slack_b"], r["slack_c"]) for r in ok))
            if k else math.nan,
            "theorem3_bound": bound,
            "dominated": bool(k and mean_sq + 2 * (0.0 if math.isnan(se_sq) else se_sq) <= bound),
        })
    return out


@dataclass
class SweepResult:
    rows: list
    aggregates: list
    csv_text: str
    files: dict = field(default_factory=dict)


def run_sweep(
    config: ExperimentConfig,
    workers: int = 1,
    output: str | Path | None = None,
    write: bool = True,
    plots: bool = True,
    order=None,
) -> SweepResult:
    """Run every (rate, n, trial) cell and merge rows in key order.

    ``order`` optionally permutes task submission (used to test that the
    result does not depend on scheduling). Failed cells are recorded with
    status ``error`` and the sweep continues.
    """
    keys = [(r, n, t) for r in config.rates for n in config.n_list for t in range(config.trials)]
    submit = list(range(len(keys))) if order is None else list(order)
    if sorted(submit) != list(range(len(keys))):
        raise UsageError("order must be a permutation of the task list")

    def task(i):
        rate, n, t = keys[i]
        try:
            return i, run_trial(config, rate, n, t)
        except Exception as exc:  # recorded per row
            return i, _failed_row(rate, n, t, exc)

    results = [None] * len(keys)
    if workers <= 1:
        for i in submit:
            j, row = task(i)
            results[j] = row
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for j, row in pool.map(task, submit):
                results[j] = row
    aggs = aggregate(results, config)
    text = rows_to_csv(results)
    res = SweepResult(results, aggs, text)
    if write:
        out = config.output_dir(None if output is None else str(output))
        csv_path, json_path = out / "trials.csv", out / "aggregate.json"
        atomic_write(csv_path, text)
        summary = {"config": {"seed": config.seed, "rates": list(config.rates), "n_list": list(config.n_list),
                              "trials": config.trials, "codec": config.codec_kind, "sigma": config.model.sigma,
                              "grid_size": len(config.grid), "loss": config.loss.name},
                   "columns": list(CSV_COLUMNS), "aggregates": aggs}
        atomic_write(json_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        res.files = {"csv": str(csv_path), "json": str(json_path)}
        if plots:
            from .plotting import plot_sweep

            fig_path = out / "sweep.png"
            plot_sweep(aggs, fig_path)
            res.files["figure"] = str(fig_path)
    return res


def default_config_dict() -> dict:
    """The desk-scale Gaussian regression sweep used by the acceptance suite."""
    return {
        "model": {"f0": {"steps": [0.375, 0.5, 0.625, 0.5, 0.375, 0.25, 0.375, 0.5], "domain": [0, 1]},
                  "sigma": 0.5},
        "grid": {"cells": 8, "levels": 8, "lipschitz": 1.0},
        "loss": "squared",
        "codec": {"kind": "conditional-lloyd-max", "rates": [1, 2, 3], "x_bins": 8},
        "n_list": [4096],
        "trials": 64,
        "seed": 42,
    }
