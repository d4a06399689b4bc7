"""Shared drivers for three-party test runs."""

import numpy as np

from mpc3.ring import DEFAULT_FP, fx_decode, fx_encode
from mpc3.session import distribute_input, open_share, run_in_process


def run3(fn, seed=0, fp=DEFAULT_FP, timeout=600.0):
    return run_in_process(fn, fp=fp, seed=seed, timeout=timeout)


def agree(outs):
    """All parties opened the same value; return party 0's copy."""
    for o in outs[1:]:
        assert np.array_equal(np.asarray(outs[0]), np.asarray(o))
    return outs[0]


def private_eval(op, *xs, seed=0, fp=DEFAULT_FP, encode=True, decode=True, **kw):
    """Share inputs from party 0, apply op, open everywhere, decode."""
    arrs = [np.asarray(x) for x in xs]

    def job(ctx):
        rng = np.random.default_rng(4242)
        shares = []
        for a in arrs:
            v = fx_encode(a, fp) if encode else a.astype(np.uint64)
            shares.append(
                distribute_input(ctx, v if ctx.party == 0 else None, rng, shape=a.shape)
            )
        return open_share(ctx, op(ctx, *shares, **kw))

    out = agree(run3(job, seed=seed, fp=fp))
    return fx_decode(out, fp) if decode else out
