"""Interactive three-party protocols on replicated shares.

Multiplication and the bilinear ops use the local cross-term identity
z_i = x_i y_i + x_{i+1} y_i + x_i y_{i+1}, rerandomized with a zero share
and reshared to the successor in one round. Truncation is a two-round
protocol on bounded helper randomness. Sign extraction converts to XOR
shares and runs one 64-bit Kogge-Stone adder, costing exactly 7 AND rounds
plus one share-conversion round; ReLU multiplies by the injected sign mask
and is exact (no approximation beyond the fixed-point encoding).

Round labels: "and.*" marks binary AND reshares, "share.*" share
conversions, "mul.*" arithmetic reshares, "trunc.*" truncation rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RangeError, ShapeError
from .prf import (
    PURPOSE_ARITH_ZERO,
    PURPOSE_BIN_INPUT,
    PURPOSE_TRUNC_R,
    PURPOSE_TRUNC_RHO,
    PURPOSE_XOR_ZERO,
)
from .ring import (
    as_ring,
    bilinear_exact,
    conv2d_spec,
    fx_encode,
    matmul_spec,
    ring_shift_arith,
    sumpool_spec,
)
from .sharing import (
    ArithmeticShare,
    BinaryShare,
    PartyContext,
    arithmetic_trivial,
    binary_trivial,
    const_share,
    pairwise_random,
    zero_share,
    zero_share_xor,
)

_U64 = np.uint64


# ---------------------------------------------------------------------------
# local (non-interactive) share arithmetic with public values


def add_const(x: ArithmeticShare, c) -> ArithmeticShare:
    """x + public c: the constant lives in component 0."""
    c = np.broadcast_to(as_ring(c), x.shape)
    lo = x.lo + c if x.owner == 0 else x.lo
    hi = x.hi + c if x.owner == 2 else x.hi
    return ArithmeticShare(x.owner, lo, hi, x.fp)


def sub_from_const(c, x: ArithmeticShare) -> ArithmeticShare:
    return add_const(-x, c)


def mul_const(x: ArithmeticShare, c: int) -> ArithmeticShare:
    """x times a public ring scalar (both components scale)."""
    c = _U64(int(c) & ((1 << 64) - 1))
    return x.map(lambda v: v * c)


# ---------------------------------------------------------------------------
# multiplication and bilinear ops


def mul(ctx: PartyContext, x: ArithmeticShare, y: ArithmeticShare, label: str = "mul.reshare") -> ArithmeticShare:
    """Element-wise product, one resharing round, 8 payload bytes/element."""
    shape = np.broadcast_shapes(x.shape, y.shape)
    xlo, xhi = np.broadcast_to(x.lo, shape), np.broadcast_to(x.hi, shape)
    ylo, yhi = np.broadcast_to(y.lo, shape), np.broadcast_to(y.hi, shape)
    z = xlo * ylo + xhi * ylo + xlo * yhi
    return _reshare(ctx, z, shape, x.fp, label)


def _reshare(ctx: PartyContext, z: np.ndarray, shape, fp, label: str) -> ArithmeticShare:
    """Additive piece -> replicated share: mask, send to successor."""
    z = z + zero_share(ctx, PURPOSE_ARITH_ZERO, ctx.take(PURPOSE_ARITH_ZERO), shape)
    ctx.transport.round_mark(label)
    ctx.transport.send(ctx.succ, z)
    prev = ctx.transport.recv(ctx.pred).reshape(shape)
    return ArithmeticShare(ctx.party, prev, z, fp)


def matmul_shares(
    ctx: PartyContext, x: ArithmeticShare, y: ArithmeticShare, bits: int | None = None
) -> ArithmeticShare:
    """Shared fixed-point matmul: 3 exact bilinear kernels, reshare, truncate.

    bits overrides the truncation amount (default t); passing t + k also
    divides the result by 2^k, which folds public power-of-two divisions
    (batch averaging, for one) into the single rescaling truncation.
    """
    m, k = x.shape
    k2, n = y.shape
    if k != k2:
        raise ShapeError(f"matmul shapes {x.shape} x {y.shape}")
    spec = matmul_spec(m, k, n)
    z = (
        bilinear_exact(x.lo, y.lo, spec)
        + bilinear_exact(x.hi, y.lo, spec)
        + bilinear_exact(x.lo, y.hi, spec)
    )
    out = _reshare(ctx, z, (m, n), x.fp, "mul.reshare")
    return truncate(ctx, out, bits)


def conv2d_shares(
    ctx: PartyContext,
    x: ArithmeticShare,
    k: ArithmeticShare,
    stride: tuple[int, int] = (1, 1),
    padding: tuple[int, int] = (0, 0),
    bits: int | None = None,
) -> ArithmeticShare:
    """Shared fixed-point convolution (cross-correlation), NCHW."""
    spec = conv2d_spec(x.shape[1], k.shape[2:], stride, padding)
    z = (
        bilinear_exact(x.lo, k.lo, spec)
        + bilinear_exact(x.hi, k.lo, spec)
        + bilinear_exact(x.lo, k.hi, spec)
    )
    out = _reshare(ctx, z, z.shape, x.fp, "mul.reshare")
    return truncate(ctx, out, bits)


def avgpool_shares(
    ctx: PartyContext,
    x: ArithmeticShare,
    window: tuple[int, int],
    stride: tuple[int, int] | None = None,
) -> ArithmeticShare:
    """Average pooling: local window sums, then division by the area.

    Power-of-two areas divide with a single truncation by log2(area);
    otherwise multiply by the encoded reciprocal of the area and truncate
    by t.
    """
    spec = sumpool_spec(window, stride)
    summed = ArithmeticShare(
        x.owner, bilinear_exact(x.lo, None, spec), bilinear_exact(x.hi, None, spec), x.fp
    )
    area = window[0] * window[1]
    if area & (area - 1) == 0:
        return truncate(ctx, summed, area.bit_length() - 1)
    scaled = mul_const(summed, int(fx_encode(1.0 / area, x.fp)))
    return truncate(ctx, scaled)


# ---------------------------------------------------------------------------
# truncation


def truncation_offset(raw: np.ndarray) -> np.ndarray:
    """Map uniform 64-bit words to offsets uniform over [-2^61, 2^61)."""
    return (raw >> _U64(2)) - _U64(1 << 61)


def truncate(ctx: PartyContext, x: ArithmeticShare, bits: int | None = None) -> ArithmeticShare:
    """Divide a shared value by 2^bits, two rounds, within one ulp.

    Requires |value| < 2^62. Party 0 and party 2 share a bounded offset rho
    uniform over [-2^61, 2^61); party 0 opens its component minus rho to
    party 1, which holds the other two components and can therefore shift
    value - rho in the clear, reblinded by a party-1/party-2 mask r. Both
    shifts add 2^(bits-1) first, so the reconstruction lands on
    floor(value / 2^bits) + {0, 1} (stochastic rounding around the nearest
    integer; the residual error is one unit of the last place at most).
    Party 1's view of value - rho leaks at most |value| / 2^61 statistical
    distance; the other parties' views stay uniform.
    """
    bits = ctx.fp.t if bits is None else bits
    if not 1 <= bits <= 61:
        raise RangeError(f"truncation by {bits} bits outside [1, 61]")
    shape = x.shape
    half = _U64(1 << (bits - 1))
    tr = ctx.transport
    p = ctx.party

    if p in (0, 2):
        peer = 2 if p == 0 else 0
        raw = pairwise_random(ctx, peer, PURPOSE_TRUNC_RHO, ctx.take(PURPOSE_TRUNC_RHO), shape)
        rho = truncation_offset(raw)
        z0 = ring_shift_arith(rho + half, bits)
    if p in (1, 2):
        peer = 2 if p == 1 else 1
        r = pairwise_random(ctx, peer, PURPOSE_TRUNC_R, ctx.take(PURPOSE_TRUNC_R), shape)

    tr.round_mark("trunc.mask")
    if p == 0:
        tr.send(1, x.lo - rho)
    elif p == 1:
        u0 = tr.recv(0).reshape(shape)

    tr.round_mark("trunc.open")
    if p == 1:
        b = u0 + x.lo + x.hi  # = value - rho, in range for a signed shift
        z1 = ring_shift_arith(b + half, bits) - r
        tr.send(0, z1)
        return ArithmeticShare(1, z1, r, x.fp)
    if p == 0:
        z1 = tr.recv(1).reshape(shape)
        return ArithmeticShare(0, z0, z1, x.fp)
    return ArithmeticShare(2, r, z0, x.fp)


# ---------------------------------------------------------------------------
# binary world: share conversion, Kogge-Stone adder, MSB


def _and_gate(ctx: PartyContext, a: BinaryShare, b: BinaryShare, label: str) -> BinaryShare:
    """Bitwise AND of two binary shares, one reshare round."""
    z = (a.lo & b.lo) ^ (a.hi & b.lo) ^ (a.lo & b.hi)
    z = z ^ zero_share_xor(ctx, PURPOSE_XOR_ZERO, ctx.take(PURPOSE_XOR_ZERO), z.shape)
    ctx.transport.round_mark(label)
    ctx.transport.send(ctx.succ, z)
    prev = ctx.transport.recv(ctx.pred).reshape(z.shape)
    return BinaryShare(ctx.party, prev, z)


def _ks_add(ctx: PartyContext, a: BinaryShare, b: BinaryShare) -> BinaryShare:
    """64-bit Kogge-Stone addition of two XOR-shared words.

    One leaf AND round plus 6 combine levels; each level fuses its two
    products (generate and propagate updates) into a single AND reshare.
    """
    p = a ^ b
    g = _and_gate(ctx, a, b, "and.ks.g")
    p_leaf = p
    n = int(np.prod(p.shape, dtype=np.int64)) if p.shape else 1
    for d in (1, 2, 4, 8, 16, 32):
        dd = _U64(d)
        gl = g.map(lambda v, s=dd: v << s)
        pl = p.map(lambda v, s=dd: v << s)
        lhs = BinaryShare(
            ctx.party,
            np.concatenate([p.lo.ravel(), p.lo.ravel()]),
            np.concatenate([p.hi.ravel(), p.hi.ravel()]),
        )
        rhs = BinaryShare(
            ctx.party,
            np.concatenate([gl.lo.ravel(), pl.lo.ravel()]),
            np.concatenate([gl.hi.ravel(), pl.hi.ravel()]),
        )
        prod = _and_gate(ctx, lhs, rhs, f"and.ks.{d}")
        g_term = BinaryShare(ctx.party, prod.lo[:n].reshape(p.shape), prod.hi[:n].reshape(p.shape))
        p_term = BinaryShare(ctx.party, prod.lo[n:].reshape(p.shape), prod.hi[n:].reshape(p.shape))
        g = g ^ g_term
        p = p_term
    carries = g.map(lambda v: v << _U64(1))
    return p_leaf ^ carries


def a2b(ctx: PartyContext, x: ArithmeticShare) -> BinaryShare:
    """Arithmetic share -> XOR share of the same 64-bit words.

    Party 0 holds both x_0 and x_1, so it forms w = x_0 + x_1 locally; w is
    XOR-shared with a party-0/party-1 mask (party 2 receives w ^ mask, one
    non-AND round), x_2 embeds trivially, and a single Kogge-Stone addition
    w + x_2 yields binary shares of the value. Exactly 7 AND rounds plus the
    one share round; exact for every ring element.
    """
    shape = x.shape
    zero = np.zeros(shape, dtype=_U64)
    p = ctx.party
    tr = ctx.transport

    if p in (0, 1):
        peer = 1 - p
        r = pairwise_random(ctx, peer, PURPOSE_BIN_INPUT, ctx.take(PURPOSE_BIN_INPUT), shape)
    tr.round_mark("share.a2b")
    if p == 0:
        masked = (x.lo + x.hi) ^ r
        tr.send(2, masked)
        w_share = BinaryShare(0, masked, r)
    elif p == 1:
        w_share = BinaryShare(1, r, zero)
    else:
        masked = tr.recv(0).reshape(shape)
        w_share = BinaryShare(2, zero, masked)

    x2 = binary_trivial(p, 2, x.hi if p == 1 else (x.lo if p == 2 else None), shape)
    return _ks_add(ctx, w_share, x2)


def msb(ctx: PartyContext, x: ArithmeticShare) -> BinaryShare:
    """XOR share of the sign bit (bit 63), one per element."""
    bits = a2b(ctx, x)
    return bits.map(lambda v: v >> _U64(63))


def bit_inject(ctx: PartyContext, b: BinaryShare) -> ArithmeticShare:
    """Binary share of a bit -> arithmetic share of the same 0/1 value.

    The three XOR components embed for free as trivial arithmetic shares;
    two multiply rounds compose x ^ y = x + y - 2xy. The output is the
    unscaled integer bit (not 2^t), so mask multiplications need no
    truncation afterwards.
    """
    shape = b.shape
    p = ctx.party
    fp = ctx.fp
    # component j is held by parties j (as lo) and j-1 (as hi)
    slots = []
    for j in range(3):
        if p == j:
            val = b.lo
        elif (p + 1) % 3 == j:
            val = b.hi
        else:
            val = None
        slots.append(arithmetic_trivial(p, j, val, shape, fp))
    u = _xor_arith(ctx, slots[0], slots[1])
    return _xor_arith(ctx, u, slots[2])


def _xor_arith(ctx: PartyContext, x: ArithmeticShare, y: ArithmeticShare) -> ArithmeticShare:
    prod = mul(ctx, x, y, label="mul.inject")
    return x + y - mul_const(prod, 2)


def drelu(ctx: PartyContext, x: ArithmeticShare) -> ArithmeticShare:
    """Unscaled {0,1} indicator of x >= 0 (sign convention: drelu(0) = 1)."""
    m = bit_inject(ctx, msb(ctx, x))
    return sub_from_const(np.uint64(1), m)


def relu(ctx: PartyContext, x: ArithmeticShare) -> ArithmeticShare:
    out, _ = relu_with_mask(ctx, x)
    return out


def relu_with_mask(ctx: PartyContext, x: ArithmeticShare) -> tuple[ArithmeticShare, ArithmeticShare]:
    """ReLU plus its mask (for backward passes). Exact; relu(0) = 0."""
    mask = drelu(ctx, x)
    return mul(ctx, x, mask, label="mul.mask"), mask


def compare(ctx: PartyContext, x: ArithmeticShare, y: ArithmeticShare) -> ArithmeticShare:
    """Unscaled {0,1} indicator of x >= y."""
    return drelu(ctx, x - y)


def max_tree(ctx: PartyContext, v: ArithmeticShare) -> ArithmeticShare:
    """Maximum over the last axis via a comparison tree.

    max(a, b) = b + relu(a - b) pairwise; ceil(log2 m) levels; ties take
    either operand (the value is identical). The reduced axis is dropped.
    """
    m = v.shape[-1] if v.shape else 0
    if m < 1:
        raise ShapeError("max_tree needs at least one element")
    while m > 1:
        k = m // 2
        a = v.map(lambda t: t[..., 0 : 2 * k : 2])
        b = v.map(lambda t: t[..., 1 : 2 * k : 2])
        mx = b + relu(ctx, a - b)
        if m % 2:
            tail = v.map(lambda t: t[..., -1:])
            mx = ArithmeticShare(
                v.owner,
                np.concatenate([mx.lo, tail.lo], axis=-1),
                np.concatenate([mx.hi, tail.hi], axis=-1),
                v.fp,
            )
        v = mx
        m = v.shape[-1]
    return v.map(lambda t: t[..., 0])


# ---------------------------------------------------------------------------
# fixed-point function approximations


@dataclass(frozen=True)
class ExpConfig:
    """e^x via the limit form (1 + x/m)^m, m a power of two."""

    m: int = 512

    def __post_init__(self) -> None:
        if self.m < 2 or self.m & (self.m - 1):
            raise ConfigError(f"m={self.m} must be a power of two >= 2")

    @property
    def squarings(self) -> int:
        return self.m.bit_length() - 1


@dataclass(frozen=True)
class ReciprocalConfig:
    """Newton's method for 1/y on [1, Y] from the fixed start z0 = 1/Y."""

    Y: float = 200.0
    iterations: int = 13

    def __post_init__(self) -> None:
        if self.Y < 1 or self.iterations < 0:
            raise ConfigError("need Y >= 1 and iterations >= 0")


def exp_approx(ctx: PartyContext, x: ArithmeticShare, cfg: ExpConfig = ExpConfig()) -> ArithmeticShare:
    """Approximate e^x for x <= 0: (1 + x/m)^m with log2(m) squarings.

    The division by m (a power of two) happens by truncation, folded into
    the first squaring: the first product is (m + x)^2 = m^2 (1 + x/m)^2 at
    scale 2t, so truncating by t + 2 log2(m) lands on (1 + x/m)^2 at scale
    t. Folding avoids a separate early truncation whose one-ulp error the
    remaining squarings would amplify m/2-fold.
    """
    s = cfg.squarings
    if ctx.fp.t + 2 * s > 61:
        raise ConfigError(f"m={cfg.m} too large for t={ctx.fp.t}")
    y = add_const(x, fx_encode(float(cfg.m), x.fp))
    y = truncate(ctx, mul(ctx, y, y), ctx.fp.t + 2 * s)
    for _ in range(s - 1):
        y = truncate(ctx, mul(ctx, y, y))
    return y


def reciprocal(ctx: PartyContext, y: ArithmeticShare, cfg: ReciprocalConfig = ReciprocalConfig()) -> ArithmeticShare:
    """Approximate 1/y for y in [1, Y]: z <- 2z - y z^2 from z0 = 1/Y."""
    z = const_share(ctx.party, fx_encode(1.0 / cfg.Y, y.fp), y.shape, y.fp)
    for _ in range(cfg.iterations):
        z2 = truncate(ctx, mul(ctx, z, z))
        yz2 = truncate(ctx, mul(ctx, y, z2))
        z = mul_const(z, 2) - yz2
    return z


def division(
    ctx: PartyContext,
    x: ArithmeticShare,
    y: ArithmeticShare,
    cfg: ReciprocalConfig = ReciprocalConfig(),
) -> ArithmeticShare:
    """x / y via x * reciprocal(y)."""
    return truncate(ctx, mul(ctx, x, reciprocal(ctx, y, cfg)))


def softmax(
    ctx: PartyContext,
    z: ArithmeticShare,
    cfg: ReciprocalConfig = ReciprocalConfig(),
) -> ArithmeticShare:
    """Softmax over the last axis: normalize by the max, exponentiate,
    divide by the sum (which lies in [1, d], within reciprocal's domain)."""
    d = z.shape[-1]
    if d > cfg.Y:
        raise ConfigError(f"class count {d} exceeds reciprocal domain Y={cfg.Y}")
    mx = max_tree(ctx, z)
    x = z - mx.map(lambda t: t[..., None])
    e = exp_approx(ctx, x)
    s = e.map(lambda t: t.sum(axis=-1, keepdims=True, dtype=_U64))
    r = reciprocal(ctx, s, cfg)
    return truncate(ctx, mul(ctx, e, r))
