"""2-of-3 replicated secret sharing over Z_2^64 and correlated randomness.

Parties are numbered 0, 1, 2; successor(i) = (i + 1) % 3. A secret x splits
into components x_0 + x_1 + x_2 = x mod 2^64 and party i holds the pair
(lo, hi) = (x_i, x_{i+1}), so any two parties jointly hold all three
components. Binary sharing is the XOR analog on 64-bit words.

PRF key k_i is generated by party i and handed to its successor, so the pair
(i, i+1) shares k_i and every unordered pair of parties shares exactly one
key. Zero shares z_i = F(k_i, j) - F(k_{i-1}, j) telescope to zero across
the three parties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FreshnessError, IntegrityError, ThresholdError, TopologyError
from .prf import PrfKey
from .ring import DEFAULT_FP, FixedPointConfig, as_ring

NUM_PARTIES = 3
_U64 = np.uint64


def successor(party: int) -> int:
    return (party + 1) % NUM_PARTIES


def predecessor(party: int) -> int:
    return (party - 1) % NUM_PARTIES


@dataclass
class ArithmeticShare:
    """Party `owner`'s replicated share: lo = x_owner, hi = x_{owner+1}."""

    owner: int
    lo: np.ndarray
    hi: np.ndarray
    fp: FixedPointConfig = DEFAULT_FP

    def __post_init__(self) -> None:
        self.lo = as_ring(self.lo)
        self.hi = as_ring(self.hi)

    @property
    def shape(self) -> tuple:
        return self.lo.shape

    def map(self, f) -> "ArithmeticShare":
        """Apply the same local linear transform to both components."""
        return ArithmeticShare(self.owner, f(self.lo), f(self.hi), self.fp)

    def __add__(self, other: "ArithmeticShare") -> "ArithmeticShare":
        _check_pair(self, other)
        return ArithmeticShare(self.owner, self.lo + other.lo, self.hi + other.hi, self.fp)

    def __sub__(self, other: "ArithmeticShare") -> "ArithmeticShare":
        _check_pair(self, other)
        return ArithmeticShare(self.owner, self.lo - other.lo, self.hi - other.hi, self.fp)

    def __neg__(self) -> "ArithmeticShare":
        return self.map(lambda v: _U64(0) - v)


@dataclass
class AdditiveShare:
    """Party `owner`'s 3-of-3 additive share (one summand)."""

    owner: int
    val: np.ndarray

    def __post_init__(self) -> None:
        self.val = as_ring(self.val)


@dataclass
class BinaryShare:
    """XOR-replicated share of 64-bit words."""

    owner: int
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        self.lo = as_ring(self.lo)
        self.hi = as_ring(self.hi)

    @property
    def shape(self) -> tuple:
        return self.lo.shape

    def map(self, f) -> "BinaryShare":
        return BinaryShare(self.owner, f(self.lo), f(self.hi))

    def __xor__(self, other: "BinaryShare") -> "BinaryShare":
        if self.owner != other.owner:
            raise TopologyError("cannot combine shares of different owners")
        return BinaryShare(self.owner, self.lo ^ other.lo, self.hi ^ other.hi)


def _check_pair(a: ArithmeticShare, b: ArithmeticShare) -> None:
    if a.owner != b.owner:
        raise TopologyError("cannot combine shares of different owners")
    if a.fp.t != b.fp.t:
        raise IntegrityError("mixed fixed-point configurations")


def share(x, rng: np.random.Generator, fp: FixedPointConfig = DEFAULT_FP) -> list[ArithmeticShare]:
    """Deal a replicated sharing: x_0, x_1 uniform, x_2 = x - x_0 - x_1."""
    x = as_ring(x)
    c = [rng.integers(0, 1 << 64, size=x.shape, dtype=_U64) for _ in range(2)]
    c.append(x - c[0] - c[1])
    return [ArithmeticShare(i, c[i], c[successor(i)], fp) for i in range(NUM_PARTIES)]


def reconstruct(shares: Sequence[ArithmeticShare]) -> np.ndarray:
    """Recover the secret from >= 2 shares, checking replication overlap."""
    comp = _gather_components(shares)
    return comp[0] + comp[1] + comp[2]


def xor_share(x, rng: np.random.Generator) -> list[BinaryShare]:
    x = as_ring(x)
    c = [rng.integers(0, 1 << 64, size=x.shape, dtype=_U64) for _ in range(2)]
    c.append(x ^ c[0] ^ c[1])
    return [BinaryShare(i, c[i], c[successor(i)]) for i in range(NUM_PARTIES)]


def xor_reconstruct(shares: Sequence[BinaryShare]) -> np.ndarray:
    comp = _gather_components(shares)
    return comp[0] ^ comp[1] ^ comp[2]


def _gather_components(shares) -> dict[int, np.ndarray]:
    owners = {s.owner for s in shares}
    if len(shares) < 2 or len(owners) < 2:
        raise ThresholdError("need shares from at least 2 distinct parties")
    if len(owners) != len(shares):
        raise IntegrityError("duplicate owner in share set")
    comp: dict[int, np.ndarray] = {}
    for s in shares:
        for slot, val in ((s.owner, s.lo), (successor(s.owner), s.hi)):
            if slot in comp:
                if not np.array_equal(comp[slot], val):
                    raise IntegrityError(f"replicated component {slot} disagrees across parties")
            else:
                comp[slot] = val
    if len(comp) != NUM_PARTIES:
        raise ThresholdError("shares do not cover all three components")
    return comp


def binary_trivial(party: int, slot: int, value: np.ndarray | None, shape: tuple) -> BinaryShare:
    """Party `party`'s share of the embedding (c_slot = v, others 0).

    Valid only when the holders of slot `slot` (parties slot and slot-1)
    supply the value; other parties pass value=None.
    """
    zero = np.zeros(shape, dtype=_U64)
    lo = value if party == slot else zero
    hi = value if successor(party) == slot else zero
    if (party == slot or successor(party) == slot) and value is None:
        raise TopologyError(f"party {party} must supply the value for slot {slot}")
    return BinaryShare(party, lo, hi)


def arithmetic_trivial(
    party: int, slot: int, value: np.ndarray | None, shape: tuple, fp: FixedPointConfig
) -> ArithmeticShare:
    """Arithmetic analog of binary_trivial: components (.., v at slot, ..)."""
    zero = np.zeros(shape, dtype=_U64)
    lo = value if party == slot else zero
    hi = value if successor(party) == slot else zero
    if (party == slot or successor(party) == slot) and value is None:
        raise TopologyError(f"party {party} must supply the value for slot {slot}")
    return ArithmeticShare(party, lo, hi, fp)


def const_share(party: int, value, shape: tuple, fp: FixedPointConfig) -> ArithmeticShare:
    """Replicated sharing of a public constant: components (c, 0, 0)."""
    c = np.broadcast_to(as_ring(value), shape)
    return arithmetic_trivial(party, 0, c if party in (0, 2) else None, shape, fp)


@dataclass
class PrfKeySet:
    """The two keys party i holds (k_i and k_{i-1}) plus freshness ledgers."""

    own_key: PrfKey
    pred_key: PrfKey
    counters: dict = field(default_factory=dict)

    def consume(self, key_tag: str, purpose: int, index: int) -> None:
        mark = self.counters.get((key_tag, purpose), 0)
        if index < mark:
            raise FreshnessError(
                f"counter {index} already used for key={key_tag} purpose={purpose:#06x}"
            )
        self.counters[(key_tag, purpose)] = index + 1


@dataclass
class PartyContext:
    """One party's protocol state: identity, channels, keys, encoding."""

    party: int
    transport: "object"
    keys: PrfKeySet
    fp: FixedPointConfig = DEFAULT_FP
    _seq: dict = field(default_factory=dict)

    @property
    def succ(self) -> int:
        return successor(self.party)

    @property
    def pred(self) -> int:
        return predecessor(self.party)

    def take(self, purpose: int) -> int:
        """Next stream counter for `purpose`; identical across parties when
        protocol invocations run in lockstep."""
        j = self._seq.get(purpose, 0)
        self._seq[purpose] = j + 1
        return j


def zero_share(ctx: PartyContext, purpose: int, j: int, shape: tuple) -> np.ndarray:
    """Arithmetic zero sharing: z_i = F(k_i, j) - F(k_{i-1}, j)."""
    ctx.keys.consume("own", purpose, j)
    ctx.keys.consume("pred", purpose, j)
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    own = ctx.keys.own_key.words(purpose, j, n).reshape(shape)
    pred = ctx.keys.pred_key.words(purpose, j, n).reshape(shape)
    return own - pred


def zero_share_xor(ctx: PartyContext, purpose: int, j: int, shape: tuple) -> np.ndarray:
    """XOR zero sharing: z_i = F(k_i, j) ^ F(k_{i-1}, j)."""
    ctx.keys.consume("own", purpose, j)
    ctx.keys.consume("pred", purpose, j)
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    own = ctx.keys.own_key.words(purpose, j, n).reshape(shape)
    pred = ctx.keys.pred_key.words(purpose, j, n).reshape(shape)
    return own ^ pred


def pairwise_random(ctx: PartyContext, peer: int, purpose: int, j: int, shape: tuple) -> np.ndarray:
    """Common randomness with a cyclic neighbor, from the one shared key.

    The pair (i, i+1) shares k_i: the successor link uses own_key, the
    predecessor link uses pred_key.
    """
    if peer == ctx.succ:
        key, tag = ctx.keys.own_key, "own"
    elif peer == ctx.pred:
        key, tag = ctx.keys.pred_key, "pred"
    else:
        raise TopologyError(f"party {peer} is not a neighbor of {ctx.party}")
    ctx.keys.consume(tag, purpose, j)
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    return key.words(purpose, j, n).reshape(shape)
