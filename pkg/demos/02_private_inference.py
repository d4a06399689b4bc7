"""Private CNN inference on synthetic digits.

Trains a small digit model with the plaintext fixed-point trainer, then
runs the same model privately: party 0 deals model and images as shares,
all three parties evaluate the network without ever seeing either, and
only the final logits are opened.
"""

import numpy as np

from mpc3.data import generate_digits
from mpc3.nn import (
    ModelGraph,
    TrainConfig,
    avgpool,
    conv2d,
    flatten,
    fully_connected,
    infer_plain_float,
    infer_private,
    relu,
    share_model,
    train_plain_fixed,
)
from mpc3.ring import DEFAULT_FP, fx_decode, fx_encode
from mpc3.session import distribute_input, open_share, run_in_process

model = ModelGraph(
    layers=[conv2d(4, 5, stride=2), relu(), avgpool(2), flatten(), fully_connected(10)],
    input_shape=(1, 28, 28),
)

raw, labels = generate_digits(512, seed=3)
images = raw[:, None].astype(np.float64) / 255.0

cfg = TrainConfig(learning_rate=0.5, batch_size=32, iterations=60, seed=1)
trained = train_plain_fixed(model, cfg, (images, labels), DEFAULT_FP)
print(f"plaintext training: ce {trained.ce_history[0]:.3f} -> {trained.ce_history[-1]:.3f}")

test = images[500:510]
fitted = model.with_params(trained.weights)


def job(ctx):
    rng = np.random.default_rng(7) if ctx.party == 0 else None
    shared = share_model(ctx, fitted if ctx.party == 0 else model.with_params(None), rng)
    xs = distribute_input(
        ctx,
        fx_encode(test, DEFAULT_FP) if ctx.party == 0 else None,
        rng,
        shape=test.shape,
    )
    logits = infer_private(ctx, shared, xs)
    return open_share(ctx, logits), ctx.transport.stats.payload_bytes_sent()


results = run_in_process(job, DEFAULT_FP, seed=0)
private_logits = fx_decode(results[0][0], DEFAULT_FP)
float_logits = infer_plain_float(model.with_params([fx_decode(w) for w in trained.weights]), test)

print()
print("image  private  float  true")
for i in range(len(test)):
    a, b = private_logits[i].argmax(), float_logits[i].argmax()
    print(f"  {i}      {a}       {b}     {labels[500 + i]}")
print()
print("max |private - float| logit gap:", f"{np.max(np.abs(private_logits - float_logits)):.2e}")
for p, (_, sent) in enumerate(results):
    print(f"party {p} sent {sent} payload bytes")
