"""Session setup: key distribution, input dealing, output opening, runners.

Key distribution follows the sharing design: party i generates k_i and sends
it to its successor over the transport, so both backends pay the same setup
traffic. With a seed, keys and the session id derive deterministically so
that an in-process run and a three-process TCP run produce bit-identical
transcripts; without a seed, keys come from the OS entropy pool.
"""

from __future__ import annotations

import hashlib
import os
import threading
from typing import Callable

import numpy as np

from .errors import ProtocolError
from .prf import KEY_BYTES, PURPOSE_TRUNC_RHO, PrfKey, derive_key
from .protocols import truncation_offset
from .ring import DEFAULT_FP, FixedPointConfig, as_ring
from .sharing import NUM_PARTIES, ArithmeticShare, PartyContext, PrfKeySet, share
from .transport import InProcessNetwork, Transport

_U64 = np.uint64


def make_session_id(seed: int | None) -> bytes:
    if seed is None:
        return os.urandom(16)
    return hashlib.sha256(f"mpc3-session|{seed}".encode()).digest()[:16]


def _key_to_words(key: PrfKey) -> np.ndarray:
    return np.frombuffer(key.key, dtype="<u8").astype(_U64, copy=False)


def _words_to_key(words: np.ndarray) -> PrfKey:
    return PrfKey(np.ascontiguousarray(words, dtype="<u8").tobytes()[:KEY_BYTES])


def setup_context(
    transport: Transport,
    fp: FixedPointConfig = DEFAULT_FP,
    seed: int | None = None,
    session_id: bytes | None = None,
) -> PartyContext:
    """Generate own key, exchange with neighbors, return a ready context."""
    party = transport.party
    session = session_id if session_id is not None else make_session_id(seed)
    if seed is None:
        own = PrfKey(os.urandom(KEY_BYTES))
    else:
        own = derive_key(f"seed{seed}".encode(), session, f"party{party}")
    transport.round_mark("setup.keys")
    transport.send((party + 1) % NUM_PARTIES, _key_to_words(own))
    pred = _words_to_key(transport.recv((party - 1) % NUM_PARTIES))
    return PartyContext(party, transport, PrfKeySet(own, pred), fp)


def distribute_input(
    ctx: PartyContext,
    x: np.ndarray | None,
    rng: np.random.Generator | None = None,
    owner: int = 0,
    shape: tuple | None = None,
) -> ArithmeticShare:
    """Owner deals a replicated sharing of x and sends each party its pair.

    Non-owners pass x=None. One frame per non-owner carrying (lo, hi).
    Shape travels out of band: non-owners pass the shape they expect, or
    accept a flat array.
    """
    ctx.transport.round_mark("share.input")
    if ctx.party == owner:
        if x is None or rng is None:
            raise ProtocolError("input owner must supply data and randomness")
        x = as_ring(x)
        parts = share(x, rng, ctx.fp)
        for p in range(NUM_PARTIES):
            if p != owner:
                packed = np.concatenate([parts[p].lo.ravel(), parts[p].hi.ravel()])
                ctx.transport.send(p, packed)
        return parts[owner]
    packed = ctx.transport.recv(owner)
    half = packed.size // 2
    lo, hi = packed[:half], packed[half:]
    if shape is not None:
        lo, hi = lo.reshape(shape), hi.reshape(shape)
    return ArithmeticShare(ctx.party, lo, hi, ctx.fp)


class TruncationRandomness:
    """Replays the truncation offsets of a seeded session, in draw order.

    Truncation is the one protocol step whose result depends on session
    randomness (each call rounds within one ulp, steered by a bounded
    offset from the party-2/party-0 key). A plaintext run that mirrors the
    protocol's operation schedule can therefore reproduce a seeded private
    run bit-exactly by drawing the same offsets from the same stream.
    """

    def __init__(self, seed: int, session_id: bytes | None = None):
        session = session_id if session_id is not None else make_session_id(seed)
        self._key = derive_key(f"seed{seed}".encode(), session, "party2")
        self._index = 0

    def draw(self, shape: tuple) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self._key.words(PURPOSE_TRUNC_RHO, self._index, n).reshape(shape)
        self._index += 1
        return truncation_offset(raw)


def open_share(ctx: PartyContext, x: ArithmeticShare) -> np.ndarray:
    """Reveal a shared value to all parties (each sends lo to its successor)."""
    ctx.transport.round_mark("open")
    ctx.transport.send((ctx.party + 1) % NUM_PARTIES, x.lo)
    missing = ctx.transport.recv((ctx.party - 1) % NUM_PARTIES).reshape(x.shape)
    return x.lo + x.hi + missing


def run_in_process(
    party_fn: Callable[[PartyContext], object],
    fp: FixedPointConfig = DEFAULT_FP,
    seed: int | None = 0,
    timeout: float = 600.0,
) -> list:
    """Run all three parties as threads over in-process queues.

    Returns the three return values in party order; re-raises the first
    party failure. timeout bounds each thread join; pass a larger value
    for long workloads such as training runs.
    """
    net = InProcessNetwork()
    session = make_session_id(seed)
    results: list = [None] * NUM_PARTIES
    errors: list = [None] * NUM_PARTIES

    def runner(p: int) -> None:
        try:
            ctx = setup_context(net.transport(p), fp, seed, session)
            results[p] = party_fn(ctx)
        except BaseException as e:  # noqa: BLE001 - surfaced to caller below
            errors[p] = e

    threads = [threading.Thread(target=runner, args=(p,), daemon=True) for p in range(NUM_PARTIES)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=timeout)
    for p, e in enumerate(errors):
        if e is not None:
            raise ProtocolError(f"party {p} failed: {e!r}") from e
    if any(th.is_alive() for th in threads):
        raise ProtocolError("party thread hung")
    return results
