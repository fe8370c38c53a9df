"""Forward propagation of signal pairs through random networks.

Three linear-layer families share the update
``z = sigma_w * (W x) + sigma_b * b``, ``x_next = f(z)``:

* ``mlp``        -- dense i.i.d. Gaussian matrix, entries N(0, 1/N);
* ``conv``       -- circular 1D convolution with a Gaussian kernel
                    N(0, 1/K), applied in Fourier space;
* ``structured`` -- products of unitary DFTs and random unit-modulus
                    diagonal matrices (FDF / FDFD); the real part is taken
                    once after the full product and rescaled by sqrt(2) to
                    preserve the expected squared norm.

All base randomness is unit-variance and a pure function of
(master_seed, layer_index); the sigma scales enter only as multipliers,
so an entire (sigma_w, sigma_b) landscape is determined by one seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import erf

from .kernels import erf32_inplace
from .rand import StreamKey, StreamKind, gaussian_stream, unit_circle_stream

__all__ = [
    "TopologyConfig", "LayerDraws", "PairTrace", "DrawProvider",
    "dft_unitary", "forward_layer", "divergence", "propagate_pair",
    "propagate_cells", "layer_draws", "NonFiniteError",
]

_KINDS = ("mlp", "conv", "structured")
_ACTIVATIONS = ("erf", "tanh")


class NonFiniteError(FloatingPointError):
    """A propagated value became non-finite; carries the offending depth."""

    def __init__(self, depth: int):
        super().__init__(f"non-finite divergence value at depth {depth}")
        self.depth = depth


@dataclass(frozen=True)
class TopologyConfig:
    """Which linear layer family to use, plus its shape parameters."""

    kind: str
    width: int
    kernel_size: int | None = None          # conv only; None -> width
    num_diagonal_stages: int = 1            # structured only
    final_fourier: bool = True              # structured only
    activation: str = "erf"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.width < 2:
            raise ValueError("width must be >= 2")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "conv":
            k = self.width if self.kernel_size is None else self.kernel_size
            if not 1 <= k <= self.width:
                raise ValueError("kernel_size must satisfy 1 <= K <= width")
            object.__setattr__(self, "kernel_size", k)
        elif self.kernel_size is not None:
            raise ValueError("kernel_size only applies to conv topologies")
        if self.kind == "structured" and self.num_diagonal_stages not in (1, 2):
            raise ValueError("num_diagonal_stages must be 1 or 2")

    @classmethod
    def mlp(cls, width: int, activation: str = "erf") -> "TopologyConfig":
        return cls("mlp", width, activation=activation)

    @classmethod
    def conv(cls, width: int, kernel_size: int | None = None,
             activation: str = "erf") -> "TopologyConfig":
        return cls("conv", width, kernel_size=kernel_size,
                   activation=activation)

    @classmethod
    def fdf(cls, width: int, activation: str = "erf") -> "TopologyConfig":
        """One diagonal stage with a final Fourier transform."""
        return cls("structured", width, num_diagonal_stages=1,
                   final_fourier=True, activation=activation)

    @classmethod
    def fdfd(cls, width: int, activation: str = "erf") -> "TopologyConfig":
        """Two diagonal stages, no final Fourier transform."""
        return cls("structured", width, num_diagonal_stages=2,
                   final_fourier=False, activation=activation)

    @property
    def is_reference_structured_case(self) -> bool:
        """True when a structured config matches one of the two named
        FDF/FDFD cases (1 stage with final transform, or 2 without)."""
        if self.kind != "structured":
            return True
        return (self.num_diagonal_stages, self.final_fourier) in (
            (1, True), (2, False))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "width": self.width,
                "kernel_size": self.kernel_size,
                "num_diagonal_stages": self.num_diagonal_stages,
                "final_fourier": self.final_fourier,
                "activation": self.activation}

    @classmethod
    def from_dict(cls, d: dict) -> "TopologyConfig":
        return cls(kind=d["kind"], width=int(d["width"]),
                   kernel_size=d.get("kernel_size"),
                   num_diagonal_stages=int(d.get("num_diagonal_stages", 1)),
                   final_fourier=bool(d.get("final_fourier", True)),
                   activation=d.get("activation", "erf"))


@dataclass(frozen=True)
class LayerDraws:
    """Unit-variance base randomness for one layer (no sigma scaling).

    Dense weights already carry the 1/sqrt(N) factor (entries N(0, 1/N)),
    kernels the 1/sqrt(K) factor; biases are N(0, 1).
    """

    bias: np.ndarray
    weights: np.ndarray | None = None
    kernel: np.ndarray | None = None
    diagonals: tuple[np.ndarray, ...] = ()
    kernel_fft: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PairTrace:
    """Per-depth divergence L(d) of one propagated input pair."""

    divergences: np.ndarray
    depth: int


def layer_draws(cfg: TopologyConfig, master_seed: int,
                layer_index: int) -> LayerDraws:
    """Regenerate the base draws of one layer from the counter streams."""
    n = cfg.width
    bias = gaussian_stream(
        StreamKey(master_seed, layer_index, StreamKind.BIAS), n)
    if cfg.kind == "mlp":
        w = gaussian_stream(
            StreamKey(master_seed, layer_index, StreamKind.WEIGHTS), n * n)
        w = w.reshape(n, n) / np.sqrt(n)
        return LayerDraws(bias=bias, weights=w)
    if cfg.kind == "conv":
        k = cfg.kernel_size
        h = gaussian_stream(
            StreamKey(master_seed, layer_index, StreamKind.KERNEL), k)
        h = h / np.sqrt(k)
        h_ext = np.zeros(n, dtype=np.float64)
        h_ext[:k] = h
        return LayerDraws(bias=bias, kernel=h,
                          kernel_fft=np.fft.rfft(h_ext))
    s = cfg.num_diagonal_stages
    diag = unit_circle_stream(
        StreamKey(master_seed, layer_index, StreamKind.DIAGONAL), s * n)
    return LayerDraws(bias=bias,
                      diagonals=tuple(diag[i * n:(i + 1) * n]
                                      for i in range(s)))


def _draw_bytes(cfg: TopologyConfig, depth: int) -> int:
    n = cfg.width
    per = n * 8                              # bias
    if cfg.kind == "mlp":
        per += n * n * 8
    elif cfg.kind == "conv":
        per += cfg.kernel_size * 8 + (n // 2 + 1) * 16
    else:
        per += cfg.num_diagonal_stages * n * 16
    return per * depth


class DrawProvider:
    """Serves per-layer draws, cached when they fit in the memory budget,
    regenerated from the counter streams otherwise. Both paths produce
    identical values. Read-only after construction; safe to share."""

    def __init__(self, cfg: TopologyConfig, master_seed: int, depth: int,
                 mem_budget: int = 2 << 30):
        self.cfg = cfg
        self.master_seed = master_seed
        self.depth = depth
        self.cached = _draw_bytes(cfg, depth) <= mem_budget
        self._cache = ([layer_draws(cfg, master_seed, d)
                        for d in range(1, depth + 1)] if self.cached else None)

    def __call__(self, d: int) -> LayerDraws:
        if not 1 <= d <= self.depth:
            raise IndexError(f"layer index {d} outside 1..{self.depth}")
        if self._cache is not None:
            return self._cache[d - 1]
        return layer_draws(self.cfg, self.master_seed, d)


def dft_unitary(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary discrete Fourier transform (1/sqrt(N) both directions)."""
    x = np.asarray(x)
    n = x.shape[-1]
    root = np.sqrt(n)
    if inverse:
        return np.fft.ifft(x, axis=-1) * root
    return np.fft.fft(x, axis=-1) / root


def _linear_batch(x: np.ndarray, draws: LayerDraws,
                  cfg: TopologyConfig) -> np.ndarray:
    """Apply the unscaled linear operator row-wise to a (C, N) batch."""
    n = cfg.width
    if x.shape[-1] != n:
        raise ValueError(f"input length {x.shape[-1]} != width {n}")
    if cfg.kind == "mlp":
        w = draws.weights
        if w is None or w.shape != (n, n):
            raise ValueError("draws do not match an MLP of this width")
        return x @ w.T.astype(x.dtype, copy=False)
    if cfg.kind == "conv":
        hf = draws.kernel_fft
        if hf is None:
            raise ValueError("draws do not match a conv topology")
        spec = np.fft.rfft(x, axis=-1)
        spec *= hf.astype(spec.dtype, copy=False)
        return np.fft.irfft(spec, n=n, axis=-1)
    if not draws.diagonals or draws.diagonals[0].shape != (n,):
        raise ValueError("draws do not match a structured topology")
    cplx = np.complex64 if x.dtype == np.float32 else np.complex128
    v = x.astype(cplx)
    root = np.asarray(np.sqrt(n), dtype=v.real.dtype)
    if cfg.final_fourier:
        v = np.fft.fft(v, axis=-1)
        v /= root
    for i in range(cfg.num_diagonal_stages - 1, -1, -1):
        v *= draws.diagonals[i].astype(cplx, copy=False)
        v = np.fft.fft(v, axis=-1)
        v /= root
    # The complex product is unitary, but generic random phases spread its
    # energy evenly over real and imaginary parts, so the real projection
    # keeps only half the squared norm on average. The sqrt(2) gain
    # restores E||z||^2 = ||x||^2, matching the dense and convolutional
    # cases so that all topologies share one order-to-chaos boundary.
    out = np.ascontiguousarray(v.real)
    out *= np.asarray(np.sqrt(2.0), dtype=out.dtype)
    return out


def _activate_inplace(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z, out=z)
    if z.dtype == np.float32:
        return erf32_inplace(z)
    return erf(z, out=z)


def forward_layer(x: np.ndarray, draws: LayerDraws, sigma_w: float,
                  sigma_b: float, cfg: TopologyConfig):
    """One layer update: returns (z, x_next)."""
    x = np.asarray(x, dtype=np.float64)
    z = _linear_batch(x[None, :], draws, cfg)[0]
    z *= sigma_w
    z += sigma_b * draws.bias
    x_next = _activate_inplace(z.copy(), cfg.activation)
    return z, x_next


def divergence(z1: np.ndarray, z2: np.ndarray) -> float:
    """Squared Euclidean distance between two pre-activation vectors."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if z1.shape != z2.shape:
        raise ValueError(f"length mismatch: {z1.shape} vs {z2.shape}")
    d = z1 - z2
    return float(np.dot(d.ravel(), d.ravel()))


def _pair_inputs(cfg: TopologyConfig, master_seed: int, input_mode: str,
                 epsilon: float | None):
    n = cfg.width
    i1 = gaussian_stream(StreamKey(master_seed, 0, StreamKind.INPUT_1), n)
    i1 = i1 / np.linalg.norm(i1)
    if input_mode == "independent":
        i2 = gaussian_stream(StreamKey(master_seed, 0, StreamKind.INPUT_2), n)
        i2 = i2 / np.linalg.norm(i2)
    elif input_mode == "perturbed":
        if epsilon is None or not epsilon > 0:
            raise ValueError("perturbed mode requires epsilon > 0")
        g = gaussian_stream(
            StreamKey(master_seed, 0, StreamKind.PERTURBATION), n)
        g = g / np.linalg.norm(g)
        i2 = i1 + epsilon * g
        i2 = i2 / np.linalg.norm(i2)
    else:
        raise ValueError(f"unknown input_mode {input_mode!r}")
    return i1, i2


def propagate_cells(cfg: TopologyConfig, sigma_w: np.ndarray,
                    sigma_b: np.ndarray, depth: int, master_seed: int,
                    *, input_mode: str = "independent",
                    epsilon: float | None = None, avg_last: int = 1,
                    record_depths: Iterable[int] = (),
                    dtype=np.float64,
                    provider: DrawProvider | None = None) -> dict:
    """Propagate one input pair through many (sigma_w, sigma_b) cells at
    once, sharing the same base draws across all cells.

    Returns ``{"mean_last": (C,) float64, "recorded": {d: (C,) float64}}``
    where ``mean_last`` is the mean of L(d) over the final `avg_last`
    layers.
    """
    sigma_w = np.atleast_1d(np.asarray(sigma_w, dtype=np.float64))
    sigma_b = np.atleast_1d(np.asarray(sigma_b, dtype=np.float64))
    if sigma_w.shape != sigma_b.shape or sigma_w.ndim != 1:
        raise ValueError("sigma_w and sigma_b must be 1-D of equal length")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not 1 <= avg_last <= depth:
        raise ValueError("avg_last must satisfy 1 <= avg_last <= depth")
    record = sorted(set(int(d) for d in record_depths))
    if record and (record[0] < 1 or record[-1] > depth):
        raise ValueError("record_depths outside 1..depth")
    record_set = frozenset(record)

    dtype = np.dtype(dtype)
    if provider is None:
        provider = DrawProvider(cfg, master_seed, depth)

    i1, i2 = _pair_inputs(cfg, master_seed, input_mode, epsilon)
    c = sigma_w.size
    x1 = np.repeat(i1[None, :].astype(dtype), c, axis=0)
    x2 = np.repeat(i2[None, :].astype(dtype), c, axis=0)
    sw_col = sigma_w.astype(dtype)[:, None]
    sb_col = sigma_b.astype(dtype)[:, None]

    first_avg = depth - avg_last + 1
    acc = np.zeros(c, dtype=np.float64)
    recorded: dict[int, np.ndarray] = {}

    for d in range(1, depth + 1):
        draws = provider(d)
        bias = draws.bias.astype(dtype, copy=False)
        z1 = _linear_batch(x1, draws, cfg)
        z1 *= sw_col
        z1 += sb_col * bias
        z2 = _linear_batch(x2, draws, cfg)
        z2 *= sw_col
        z2 += sb_col * bias
        if d >= first_avg or d in record_set:
            diff = (z1 - z2).astype(np.float64, copy=False)
            ell = np.einsum("ij,ij->i", diff, diff)
            if not np.all(np.isfinite(ell)):
                raise NonFiniteError(d)
            if d >= first_avg:
                acc += ell
            if d in record_set:
                recorded[d] = ell
        x1 = _activate_inplace(z1, cfg.activation)
        x2 = _activate_inplace(z2, cfg.activation)

    return {"mean_last": acc / avg_last, "recorded": recorded}


def propagate_pair(cfg: TopologyConfig, sigma_w: float, sigma_b: float,
                   depth: int, master_seed: int,
                   input_mode: str = "independent",
                   epsilon: float | None = None,
                   provider: DrawProvider | None = None) -> PairTrace:
    """Full per-depth divergence trace for a single (sigma_w, sigma_b)."""
    out = propagate_cells(
        cfg, [sigma_w], [sigma_b], depth, master_seed,
        input_mode=input_mode, epsilon=epsilon,
        record_depths=range(1, depth + 1), provider=provider)
    trace = np.array([out["recorded"][d][0] for d in range(1, depth + 1)])
    return PairTrace(divergences=trace, depth=depth)
