"""Fixed-rate scalar codecs with side information.

Every codec maps each sample to one of K reproduction levels, where K is a
fixed integer codebook size derived from the configured rate. Conditional
codecs keep one codebook per side-information bin; the pilot-shift codec
quantizes residuals around a hypothesis chosen at the encoder and sends that
hypothesis index once per block as a header.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .learning import HypothesisGrid, erm
from .losses import LossFunction

__all__ = [
    "KINDS",
    "Codec",
    "EncodedBlock",
    "LloydResult",
    "codebook_size",
    "lloyd_max",
    "train_codec",
    "encode",
    "decode",
    "measure_distortion",
]

KINDS = ("uniform", "lloyd-max", "conditional-lloyd-max", "pilot-shift")
LLOYD_TOL = 1e-8
LLOYD_MAX_ITER = 1000


def codebook_size(rate: float) -> int:
    """Integer codebook size for a configured per-sample rate.

    Rates that are log2 of an integer map to that integer; anything else is
    rounded up to 2**ceil(R).
    """
    if not np.isfinite(rate) or rate < 0:
        raise UsageError(f"rate must be a finite nonnegative number, got {rate}")
    k = round(2.0**rate)
    if k >= 1 and abs(math.log2(k) - rate) < 1e-9:
        return int(k)
    return 2 ** math.ceil(rate)


def _nearest(levels: np.ndarray, values: np.ndarray, loss: LossFunction) -> np.ndarray:
    """Index of the loss-nearest level for each value; ties go to the lower index."""
    return np.argmin(loss(values[:, None], levels[None, :]), axis=1)


@dataclass
class LloydResult:
    levels: np.ndarray
    distortion: float
    history: list = field(default_factory=list)
    iterations: int = 0


def lloyd_max(
    y,
    size: int,
    loss: LossFunction,
    init=None,
    tol: float = LLOYD_TOL,
    max_iter: int = LLOYD_MAX_ITER,
) -> LloydResult:
    """Alternate nearest-level partition and per-cell centroid updates.

    Starts from sample quantiles at (k + 1/2)/K unless ``init`` is given.
    Empty cells keep their previous level. Stops once the relative drop in
    training distortion falls below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise UsageError("cannot train a quantizer on no samples")
    uniq = np.unique(y)
    if uniq.size <= size:
        levels = np.concatenate([uniq, np.full(size - uniq.size, uniq[-1])])
        return LloydResult(levels, 0.0, [0.0], 0)
    if init is None:
        levels = np.quantile(y, (np.arange(size) + 0.5) / size, method="inverted_cdf")
    else:
        levels = np.array(init, dtype=float)
    history = []
    prev = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        idx = _nearest(levels, y, loss)
        dist = float(np.mean(loss(y, levels[idx])))
        history.append(dist)
        if dist == 0.0 or (math.isfinite(prev) and prev - dist <= tol * prev):
            break
        prev = dist
        new = levels.copy()
        for k in np.unique(idx):
            new[k] = loss.centroid(y[idx == k])
        levels = new
    return LloydResult(levels, history[-1], history, it)


@dataclass(frozen=True)
class Codec:
    """A trained fixed-rate codec.

    ``levels`` has shape (bins, K): one codebook per side-information bin
    (a single row for unconditional kinds). For pilot-shift the levels are
    residual levels and ``header`` indexes the encoder-side hypothesis in
    ``grid``.
    """

    kind: str
    rate: float
    loss: LossFunction
    levels: np.ndarray
    x_edges: np.ndarray | None = None
    fallback_bins: tuple = ()
    grid: HypothesisGrid | None = None
    header: int | None = None
    header_bits: int = 0
    training_distortion: float = math.nan

    @property
    def size(self) -> int:
        return self.levels.shape[1]

    @property
    def bits_per_index(self) -> int:
        return math.ceil(math.log2(self.size)) if self.size > 1 else 0

    def achieved_rate(self, n: int) -> float:
        """log2 of the codebook size plus the header amortized over n samples."""
        if n < 1:
            raise UsageError("block length must be positive")
        return math.log2(self.size) + self.header_bits / n

    def bin_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.x_edges is None:
            return np.zeros(x.shape, dtype=np.int64)
        return np.clip(np.searchsorted(self.x_edges, x, side="right") - 1, 0, self.levels.shape[0] - 1)

    def offset(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind != "pilot-shift":
            return np.zeros(x.shape)
        return self.grid.evaluate(self.header, x)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "rate": self.rate,
            "loss": self.loss.to_json(),
            "levels": self.levels.tolist(),
            "x_edges": None if self.x_edges is None else self.x_edges.tolist(),
            "fallback_bins": list(self.fallback_bins),
            "grid": None if self.grid is None else self.grid.to_json(),
            "header": self.header,
            "header_bits": self.header_bits,
            "training_distortion": self.training_distortion,
        }

    @classmethod
    def from_json(cls, obj) -> "Codec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            obj["kind"],
            float(obj["rate"]),
            LossFunction.from_json(obj["loss"]),
            np.asarray(obj["levels"], dtype=float),
            None if obj.get("x_edges") is None else np.asarray(obj["x_edges"], dtype=float),
            tuple(obj.get("fallback_bins", ())),
            None if obj.get("grid") is None else HypothesisGrid.from_json(obj["grid"]),
            obj.get("header"),
            int(obj.get("header_bits", 0)),
            float(obj.get("training_distortion", math.nan)),
        )


@dataclass(frozen=True)
class EncodedBlock:
    """Transmitted indices for one block, plus the pilot-shift header."""

    indices: np.ndarray
    n: int
    bits_per_index: int
    header: int | None = None

    def to_bytes(self) -> bytes:
        """u32 n, u8 bits-per-index, MSB-first packed indices, optional u32 header."""
        out = struct.pack(">IB", self.n, self.bits_per_index)
        b = self.bits_per_index
        if b:
            idx = np.asarray(self.indices, dtype=np.uint64)
            shifts = np.arange(b - 1, -1, -1, dtype=np.uint64)
            bits = ((idx[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
            out += np.packbits(bits.ravel()).tobytes()
        if self.header is not None:
            out += struct.pack(">I", self.header)
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncodedBlock":
        if len(data) < 5:
            raise UsageError("encoded block is truncated")
        n, b = struct.unpack(">IB", data[:5])
        body = (n * b + 7) // 8
        rest = data[5 + body :]
        if len(data) < 5 + body or len(rest) not in (0, 4):
            raise UsageError("encoded block has an inconsistent length")
        if b:
            bits = np.unpackbits(np.frombuffer(data[5 : 5 + body], dtype=np.uint8))[: n * b].reshape(n, b)
            weights = (np.uint64(1) << np.arange(b - 1, -1, -1, dtype=np.uint64))
            indices = (bits.astype(np.uint64) * weights).sum(axis=1).astype(np.int64)
        else:
            indices = np.zeros(n, dtype=np.int64)
        header = struct.unpack(">I", rest)[0] if rest else None
        return cls(indices, n, b, header)


def _uniform_levels(y: np.ndarray, size: int) -> np.ndarray:
    lo, hi = float(y.min()), float(y.max())
    width = (hi - lo) / size
    return lo + (np.arange(size) + 0.5) * width


def train_codec(
    kind: str,
    x,
    y,
    rate: float,
    loss: LossFunction | None = None,
    *,
    x_bins: int = 8,
    x_range: tuple | None = None,
    grid: HypothesisGrid | None = None,
    tol: float = LLOYD_TOL,
    max_iter: int = LLOYD_MAX_ITER,
) -> Codec:
    """Train a codec of the given kind on the samples (x, y).

    Parameters
    ----------
    kind : str
        One of ``uniform``, ``lloyd-max``, ``conditional-lloyd-max`` or
        ``pilot-shift``.
    rate : float
        Configured bits per sample; see :func:`codebook_size`.
    x_bins, x_range : int, tuple
        Side-information binning for the conditional kind. The range
        defaults to the sample range of x.
    grid : HypothesisGrid
        Hypotheses searched by the pilot-shift encoder.
    """
    loss = loss or LossFunction("squared")
    if kind not in KINDS:
        raise UsageError(f"unknown codec kind {kind!r}; expected one of {KINDS}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0 or x.shape != y.shape:
        raise UsageError("codec training needs equally long, nonempty x and y")
    size = codebook_size(rate)

    if kind == "uniform":
        levels = _uniform_levels(y, size)[None, :]
        dist = float(np.mean(loss(y, levels[0][_nearest(levels[0], y, loss)])))
        return Codec(kind, rate, loss, levels, training_distortion=dist)

    if kind == "lloyd-max":
        res = lloyd_max(y, size, loss, tol=tol, max_iter=max_iter)
        return Codec(kind, rate, loss, res.levels[None, :], training_distortion=res.distortion)

    if kind == "pilot-shift":
        if grid is None:
            raise UsageError("pilot-shift needs a hypothesis grid")
        header = erm(grid, x, y, loss).index
        resid = y - grid.evaluate(header, x)
        res = lloyd_max(resid, size, loss, tol=tol, max_iter=max_iter)
        bits = math.ceil(math.log2(len(grid))) if len(grid) > 1 else 0
        return Codec(kind, rate, loss, res.levels[None, :], grid=grid, header=header, header_bits=bits,
                     training_distortion=res.distortion)

    if x_bins < 1:
        raise UsageError("x_bins must be >= 1")
    lo, hi = x_range if x_range is not None else (float(x.min()), float(x.max()))
    if not hi > lo:
        raise UsageError("side-information range is empty")
    edges = np.linspace(lo, hi, x_bins + 1)
    glob = lloyd_max(y, size, loss, tol=tol, max_iter=max_iter)
    bins = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, x_bins - 1)
    levels = np.empty((x_bins, size))
    fallback = []
    total = 0.0
    for b in range(x_bins):
        yb = y[bins == b]
        if yb.size == 0:
            levels[b] = glob.levels
            fallback.append(b)
            continue
        # starting from the global codebook too guarantees no bin does worse than it
        cands = [lloyd_max(yb, size, loss, tol=tol, max_iter=max_iter),
                 lloyd_max(yb, size, loss, init=glob.levels, tol=tol, max_iter=max_iter)]
        best = min(cands, key=lambda r: r.distortion)
        levels[b] = best.levels
        total += best.distortion * yb.size
    return Codec(kind, rate, loss, levels, x_edges=edges, fallback_bins=tuple(fallback),
                 training_distortion=total / y.size)


def encode(codec: Codec, x, y) -> EncodedBlock:
    """Nearest-level index per sample, using only the codebook of its x-bin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError("x and y blocks must be 1-D and equally long")
    target = y - codec.offset(x)
    bins = codec.bin_of(x)
    idx = np.empty(y.size, dtype=np.int64)
    for b in np.unique(bins):
        sel = bins == b
        idx[sel] = _nearest(codec.levels[b], target[sel], codec.loss)
    return EncodedBlock(idx, int(y.size), codec.bits_per_index, codec.header)


def decode(codec: Codec, x, block: EncodedBlock) -> np.ndarray:
    """Reproductions from the index stream and the side information alone."""
    x = np.asarray(x, dtype=float)
    if x.size != block.n:
        raise UsageError(f"side information has {x.size} samples, block has {block.n}")
    idx = np.asarray(block.indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= codec.size):
        raise UsageError("index outside the codebook")
    if codec.kind == "pilot-shift":
        if block.header is None:
            raise UsageError("pilot-shift block is missing its header")
        base = codec.grid.evaluate(block.header, x)
    else:
        base = 0.0
    return codec.levels[codec.bin_of(x), idx] + base


def measure_distortion(codec: Codec, x, y, loss: LossFunction | None = None) -> float:
    """Normalized cumulative loss between y and its reproduction."""
    loss = loss or codec.loss
    yhat = decode(codec, x, encode(codec, x, y))
    return float(np.mean(loss(np.asarray(y, dtype=float), yhat)))
