"""Loss functions and their generalized-Lipschitz moduli."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

KINDS = ("squared", "absolute", "ppower", "hamming")


@dataclass(frozen=True)
class LossFunction:
    """A metric-power loss l(y, u) = d(y, u)**r with a concave modulus eta.

    ``kind`` is one of ``squared`` (|y-u|^2), ``absolute`` (|y-u|),
    ``ppower`` (|y-u|^p, intended for outputs in [0, 1]) and ``hamming``
    (indicator of y != u). Metric kinds use eta(t) = t; power kinds use
    eta(t) = p * t**(1/p), which is valid when both arguments lie in [0, 1].

    ``eta_scale`` multiplies the modulus. It exists so that deliberately
    wrong moduli can be fed to the soundness check; leave it at 1.
    """

    kind: str = "squared"
    p: float = 2.0
    moment_delta: float = 1.0
    eta_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "squared":
            object.__setattr__(self, "p", 2.0)
        elif self.kind in ("absolute", "hamming"):
            object.__setattr__(self, "p", 1.0)
        if self.p < 1:
            raise UsageError(f"power must be >= 1, got {self.p}")
        if self.moment_delta <= 0:
            raise UsageError("moment_delta must be positive")

    @property
    def name(self) -> str:
        return f"ppower{self.p:g}" if self.kind == "ppower" else self.kind

    @property
    def r(self) -> float:
        """Exponent of the underlying metric."""
        return self.p

    @property
    def eta_form(self) -> str:
        return "identity" if self.kind in ("absolute", "hamming") else "power"

    @property
    def eta_valid_on_reals(self) -> bool:
        """Whether the modulus bound holds for all real arguments, not just [0, 1]."""
        return self.eta_form == "identity"

    def __call__(self, y, u):
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.kind == "hamming":
            return (y != u).astype(float)
        diff = np.abs(y - u)
        if self.kind == "squared":
            return diff * diff
        if self.kind == "absolute":
            return diff
        return diff**self.p

    def matrix(self, ys, us) -> np.ndarray:
        """Loss table with rows indexed by ``ys`` and columns by ``us``."""
        return self(np.asarray(ys, dtype=float)[:, None], np.asarray(us, dtype=float)[None, :])

    def eta(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise UsageError("eta is defined on nonnegative reals only")
        if self.eta_form == "identity":
            out = self.eta_scale * t_arr
        else:
            out = self.eta_scale * self.p * t_arr ** (1.0 / self.p)
        return float(out) if out.ndim == 0 else out

    def centroid(self, values: np.ndarray) -> float:
        """Minimizer of the summed loss to a single reproduction value."""
        values = np.asarray(values, dtype=float)
        if self.kind == "squared":
            return float(values.mean())
        if self.kind == "absolute":
            return float(np.median(values))
        if self.kind == "hamming":
            uniq, counts = np.unique(values, return_counts=True)
            return float(uniq[np.argmax(counts)])
        # convex in the reproduction value; bracket by the data range
        from scipy.optimize import minimize_scalar

        lo, hi = float(values.min()), float(values.max())
        if hi - lo < 1e-15:
            return lo
        res = minimize_scalar(lambda c: float(np.sum(np.abs(values - c) ** self.p)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, hi - lo)})
        return float(res.x)

    def moment(self, y, y0: float = 0.0) -> float:
        """Sample mean of l(Y, y0)**(1 + delta)."""
        return float(np.mean(self(y, y0) ** (1.0 + self.moment_delta)))

    def to_json(self) -> dict:
        return {"kind": self.kind, "p": self.p, "moment_delta": self.moment_delta}

    @classmethod
    def from_json(cls, obj) -> "LossFunction":
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj.get("kind", "squared"), float(obj.get("p", 2.0)), float(obj.get("moment_delta", 1.0)))


def eval_eta(loss: LossFunction, t: float) -> float:
    return loss.eta(t)


def eta_concavity_violation(loss: LossFunction, t_max: float = 10.0, points: int = 200) -> float:
    """Largest midpoint-concavity violation of eta on a sample grid; <= 0 means concave."""
    t = np.linspace(0.0, t_max, points)
    a, b = np.meshgrid(t, t)
    gap = 0.5 * (loss.eta(a) + loss.eta(b)) - loss.eta(0.5 * (a + b))
    return float(gap.max())
