"""Replicated sharing and the core protocols, end to end in one process.

Deals a vector into 2-of-3 replicated shares, reconstructs it, multiplies
two shared fixed-point vectors, and prints the exact communication bill
for each protocol.
"""

import numpy as np

import mpc3.protocols as P
from mpc3.ring import DEFAULT_FP, fx_decode, fx_encode
from mpc3.session import distribute_input, open_share, run_in_process
from mpc3.sharing import reconstruct, share

rng = np.random.default_rng(1)
x = rng.uniform(-2, 2, 6)
y = rng.uniform(-2, 2, 6)

shares = share(fx_encode(x), rng)
print("secret      :", np.round(x, 4))
print("party 0 view:", shares[0].lo[:3], "...")
print("any two parties reconstruct:", np.allclose(fx_decode(reconstruct(shares[:2])), x, atol=1e-6))


def job(ctx):
    rin = np.random.default_rng(7)
    xs = distribute_input(ctx, fx_encode(x) if ctx.party == 0 else None, rin, shape=x.shape)
    ys = distribute_input(ctx, fx_encode(y) if ctx.party == 0 else None, rin, shape=y.shape)

    base = ctx.transport.stats.copy()
    z = P.truncate(ctx, P.mul(ctx, xs, ys))
    mul_cost = ctx.transport.stats.since(base)

    base = ctx.transport.stats.copy()
    r = P.relu(ctx, z)
    relu_cost = ctx.transport.stats.since(base)

    return open_share(ctx, r), mul_cost, relu_cost


results = run_in_process(job, DEFAULT_FP, seed=0)
opened, mul_cost, relu_cost = results[0]

print()
print("x * y       :", np.round(x * y, 4))
print("relu(x * y) :", np.round(fx_decode(opened), 4))
print()
print("fixed-point multiply (mul + truncate per party):")
print(f"  bytes={mul_cost.payload_bytes_sent()} rounds={mul_cost.rounds} labels={mul_cost.round_labels}")
print("relu per party:")
print(f"  bytes={relu_cost.payload_bytes_sent()} rounds={relu_cost.rounds} and_rounds={relu_cost.and_rounds()}")
