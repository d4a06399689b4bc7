"""Exact arithmetic over Z_2^64 and the limb-decomposed bilinear engine.

Tensors are numpy uint64 arrays with wrapping (mod 2^64) arithmetic. Reals
are carried in fixed point with t fractional bits. Bilinear ops (matmul,
conv2d) are evaluated through double-precision float kernels: each operand
splits into four 16-bit limbs, the 10 limb-product pairs whose shift is
below 64 are computed as float matmuls, and the products are recombined with
wrapping integer shifts. Every float intermediate is an integer below 2^53,
so BLAS routines return it exactly as long as no output element accumulates
more than 2^20 products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ExactnessError, RangeError, ShapeError

RING_BITS = 64
LIMB_BITS = 16
NUM_LIMBS = 4
MAX_ACCUMULATION = 1 << 20

_U64 = np.uint64
_LIMB_MASK = _U64(0xFFFF)

# (i, j) limb index pairs with 16*(i+j) < 64; products above that shift
# vanish mod 2^64.
LIMB_PAIRS: tuple[tuple[int, int], ...] = tuple(
    (i, j) for i in range(NUM_LIMBS) for j in range(NUM_LIMBS) if i + j < NUM_LIMBS
)
assert len(LIMB_PAIRS) == 10


def as_ring(x: Any) -> np.ndarray:
    """Coerce x to a uint64 ring tensor (python ints are reduced mod 2^64)."""
    if isinstance(x, np.ndarray) and x.dtype == _U64:
        return x
    if isinstance(x, (int, np.integer)):
        return np.asarray(int(x) & ((1 << 64) - 1), dtype=_U64)
    arr = np.asarray(x)
    if arr.dtype == object or arr.dtype.kind not in "ui":
        raise ShapeError(f"cannot interpret dtype {arr.dtype} as ring tensor")
    return arr.astype(_U64)


def to_signed(a: np.ndarray) -> np.ndarray:
    """Two's-complement view of a ring tensor as int64."""
    return np.asarray(a, dtype=_U64).view(np.int64)


def ring_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_ring(a), as_ring(b)
    _check_broadcast(a, b)
    return a + b


def ring_sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_ring(a), as_ring(b)
    _check_broadcast(a, b)
    return a - b


def ring_neg(a: np.ndarray) -> np.ndarray:
    return _U64(0) - as_ring(a)


def ring_scalar_mul(a: np.ndarray, c: int) -> np.ndarray:
    return as_ring(a) * _U64(int(c) & ((1 << 64) - 1))


def ring_shift_arith(a: np.ndarray, bits: int) -> np.ndarray:
    """Sign-extending right shift of the two's-complement interpretation."""
    if not 0 <= bits < 64:
        raise RangeError(f"shift amount {bits} outside [0, 64)")
    return (to_signed(as_ring(a)) >> np.int64(bits)).view(_U64)


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(str(e)) from None


@dataclass(frozen=True)
class FixedPointConfig:
    """Fixed-point encoding with t fractional bits."""

    t: int = 20

    def __post_init__(self) -> None:
        if not 0 < self.t < 32:
            raise RangeError(f"fractional bits t={self.t} outside (0, 32)")

    @property
    def scale(self) -> int:
        return 1 << self.t


DEFAULT_FP = FixedPointConfig()


def fx_encode(x: Any, cfg: FixedPointConfig = DEFAULT_FP) -> np.ndarray:
    """Encode reals as ring elements: round-half-away-from-zero of x * 2^t."""
    arr = np.asarray(x, dtype=np.float64)
    bound = float(1 << (63 - cfg.t))
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) >= bound):
        raise RangeError(f"encodable range is |x| < 2^{63 - cfg.t}")
    mag = np.floor(np.abs(arr) * cfg.scale + 0.5).astype(_U64)
    with np.errstate(over="ignore"):  # two's complement wrap is intended
        return np.where(arr >= 0, mag, _U64(0) - mag)


def fx_decode(v: Any, cfg: FixedPointConfig = DEFAULT_FP) -> np.ndarray:
    """Interpret ring elements as signed fixed point and return floats."""
    return to_signed(as_ring(v)).astype(np.float64) / cfg.scale


def limb_decompose(a: np.ndarray) -> np.ndarray:
    """Split ring elements into 4 little-endian 16-bit limbs stored as floats.

    Returns an array of shape (4,) + a.shape; limb i carries bits
    [16*i, 16*i+16).
    """
    a = as_ring(a)
    out = np.empty((NUM_LIMBS,) + a.shape, dtype=np.float64)
    for i in range(NUM_LIMBS):
        out[i] = ((a >> _U64(LIMB_BITS * i)) & _LIMB_MASK).astype(np.float64)
    return out


def limb_recombine(limbs: np.ndarray) -> np.ndarray:
    """Inverse of limb_decompose (wrapping mod 2^64)."""
    acc = np.zeros(limbs.shape[1:], dtype=_U64)
    for i in range(NUM_LIMBS):
        acc = acc + (limbs[i].astype(_U64) << _U64(LIMB_BITS * i))
    return acc


@dataclass(frozen=True)
class BilinearOpSpec:
    """Geometry and exactness budget of one bilinear op."""

    kind: str  # "matmul" | "conv2d" | "sum-pool"
    geometry: dict = field(default_factory=dict)
    accumulation_count: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("matmul", "conv2d", "sum-pool"):
            raise ShapeError(f"unknown bilinear op kind {self.kind!r}")


def matmul_spec(m: int, k: int, n: int) -> BilinearOpSpec:
    return BilinearOpSpec("matmul", {"m": m, "k": k, "n": n}, accumulation_count=k)


def conv2d_spec(
    in_channels: int,
    kernel: tuple[int, int],
    stride: tuple[int, int] = (1, 1),
    padding: tuple[int, int] = (0, 0),
) -> BilinearOpSpec:
    kh, kw = kernel
    geometry = {
        "in_channels": in_channels,
        "kernel": (kh, kw),
        "stride": tuple(stride),
        "padding": tuple(padding),
    }
    return BilinearOpSpec("conv2d", geometry, accumulation_count=in_channels * kh * kw)


def sumpool_spec(window: tuple[int, int], stride: tuple[int, int] | None = None) -> BilinearOpSpec:
    kh, kw = window
    geometry = {"window": (kh, kw), "stride": tuple(stride or (kh, kw))}
    return BilinearOpSpec("sum-pool", geometry, accumulation_count=kh * kw)


def bilinear_exact(a: np.ndarray, b: np.ndarray | None, spec: BilinearOpSpec) -> np.ndarray:
    """Evaluate a bilinear op exactly over Z_2^64 through float kernels.

    matmul: a (m, k) @ b (k, n). conv2d: a (N, C, H, W) cross-correlated
    with kernels b (O, C, kh, kw) under the spec's stride/padding. sum-pool:
    window sums of a (N, C, H, W) (b ignored; plain ring addition is already
    exact). Refuses ops whose per-output accumulation exceeds 2^20.
    """
    if spec.accumulation_count > MAX_ACCUMULATION:
        raise ExactnessError(
            f"accumulation_count {spec.accumulation_count} exceeds 2^20; "
            "float limb products would no longer be exact"
        )
    if spec.kind == "matmul":
        return _matmul_exact(as_ring(a), as_ring(b), spec)
    if spec.kind == "conv2d":
        return _conv2d_exact(as_ring(a), as_ring(b), spec)
    return _sumpool_exact(as_ring(a), spec)


def _limb_products(fa: np.ndarray, fb: np.ndarray, kernel) -> np.ndarray:
    """Run the 10-product schedule; kernel is a float bilinear map."""
    out: np.ndarray | None = None
    for i, j in LIMB_PAIRS:
        prod = kernel(fa[i], fb[j])
        if prod.size and float(prod.max(initial=0.0)) >= float(1 << 53):
            raise ExactnessError("float intermediate exceeded 2^53")
        term = prod.astype(_U64) << _U64(LIMB_BITS * (i + j))
        out = term if out is None else out + term
    assert out is not None
    return out


def _matmul_exact(a: np.ndarray, b: np.ndarray, spec: BilinearOpSpec) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} x {b.shape}")
    if a.shape[1] != spec.accumulation_count:
        raise ShapeError("spec accumulation_count does not match inner dimension")
    fa, fb = limb_decompose(a), limb_decompose(b)
    return _limb_products(fa, fb, lambda x, y: x @ y)


def _im2col(x: np.ndarray, kernel: tuple[int, int], stride: tuple[int, int]) -> np.ndarray:
    """(N, C, H, W) float -> (N, H', W', C, kh, kw) patch view."""
    kh, kw = kernel
    sh, sw = stride
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]  # (N, C, H', W', kh, kw)
    return win.transpose(0, 2, 3, 1, 4, 5)


def _conv2d_exact(a: np.ndarray, b: np.ndarray, spec: BilinearOpSpec) -> np.ndarray:
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("conv2d expects input (N,C,H,W) and kernel (O,C,kh,kw)")
    kh, kw = spec.geometry["kernel"]
    sh, sw = spec.geometry["stride"]
    ph, pw = spec.geometry["padding"]
    n, c, h, w = a.shape
    o, ck, bkh, bkw = b.shape
    if (bkh, bkw) != (kh, kw) or ck != c or spec.geometry["in_channels"] != c:
        raise ShapeError(f"kernel {b.shape} incompatible with input {a.shape} and spec")
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ShapeError("kernel larger than padded input")
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    fa = limb_decompose(a)
    if ph or pw:
        fa = np.pad(fa, ((0, 0), (0, 0), (0, 0), (ph, ph), (pw, pw)))
    fb = limb_decompose(b).reshape(NUM_LIMBS, o, c * kh * kw)
    cols = np.empty((NUM_LIMBS, n * oh * ow, c * kh * kw), dtype=np.float64)
    for i in range(NUM_LIMBS):
        cols[i] = _im2col(fa[i], (kh, kw), (sh, sw)).reshape(n * oh * ow, c * kh * kw)
    flat = _limb_products(cols, fb, lambda x, y: x @ y.T)
    return flat.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)


def _sumpool_exact(a: np.ndarray, spec: BilinearOpSpec) -> np.ndarray:
    if a.ndim != 4:
        raise ShapeError("sum-pool expects (N,C,H,W)")
    kh, kw = spec.geometry["window"]
    sh, sw = spec.geometry["stride"]
    if a.shape[2] < kh or a.shape[3] < kw:
        raise ShapeError("window larger than input")
    win = np.lib.stride_tricks.sliding_window_view(a, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    return win.sum(axis=(-1, -2), dtype=_U64)
