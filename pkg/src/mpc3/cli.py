"""Command-line entry points: in-process simulation, single-party TCP runs,
protocol benchmarks, and precision sweeps.

Metrics print as CSV-like lines on stdout; --log additionally writes one
JSON object per line (config, per-party communication counters, results)
so runs can be compared across modes exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from .data import load_mnist
from .errors import Mpc3Error
from .models import load_model_float
from .nn import (
    ModelGraph,
    TrainConfig,
    infer_plain_float,
    infer_private,
    mean_relative_error,
    share_model,
    train_private,
)
from .protocols import conv2d_shares, relu
from .ring import FixedPointConfig, fx_decode, fx_encode
from .session import distribute_input, make_session_id, open_share, run_in_process, setup_context
from .sharing import NUM_PARTIES, PartyContext
from .transport import TcpTransport


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mpc3",
        description="Three-party private CNN inference and training over Z_2^64.",
    )
    p.add_argument("--mode", choices=("simulate", "party"), default="simulate")
    p.add_argument("--party", type=int, help="party id (0, 1, or 2) for party mode")
    p.add_argument(
        "--peers",
        help="three host:port entries, comma separated, indexed by party id",
    )
    p.add_argument("--model", help="model spec file (JSON)")
    p.add_argument("--data", help="dataset directory (IDX files)")
    p.add_argument("--t", type=int, default=20, help="fixed-point fractional bits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", choices=("infer", "train", "bench", "sweep"), default="infer")
    p.add_argument("--iterations", type=int, default=10, help="train steps / sweep sample count")
    p.add_argument("--batch", type=int, default=128, help="train batch size / infer image count")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--log", help="write JSON-lines metrics to this path")
    return p


class _Log:
    def __init__(self, path: str | None):
        self._f = open(path, "w") if path else None

    def write(self, **obj) -> None:
        if self._f:
            self._f.write(json.dumps(obj, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._f:
            self._f.close()


def _comm_fields(stats) -> dict:
    return {
        "bytes_sent": stats.total_bytes_sent(),
        "payload_bytes": stats.payload_bytes_sent(),
        "messages": stats.messages,
        "rounds": stats.rounds,
        "and_rounds": stats.and_rounds(),
    }


def _print_comm(party: int, fields: dict) -> None:
    print(
        f"comm,party={party},bytes={fields['bytes_sent']},"
        f"payload_bytes={fields['payload_bytes']},messages={fields['messages']},"
        f"rounds={fields['rounds']},and_rounds={fields['and_rounds']}"
    )


def _input_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0x1A9]))


def _infer_run(ctx: PartyContext, model: ModelGraph, images: np.ndarray, fp: FixedPointConfig, seed: int):
    """The criterion workload: share the model, share a batch, run forward,
    open the logits. Party 0 owns model and data; peers see only shapes."""
    n = len(images)
    rng = _input_rng(seed) if ctx.party == 0 else None
    ring_params = [fx_encode(w, fp) for w in model.params]
    shared = share_model(ctx, model.with_params(ring_params if ctx.party == 0 else None), rng)
    xs = distribute_input(
        ctx,
        fx_encode(images, fp) if ctx.party == 0 else None,
        rng,
        0,
        shape=(n,) + model.input_shape,
    )
    logits = infer_private(ctx, shared, xs)
    opened = open_share(ctx, logits)
    return opened, _comm_fields(ctx.transport.stats)


def _report_infer(opened: np.ndarray, fp: FixedPointConfig, log: _Log) -> None:
    logits = fx_decode(opened, fp)
    preds = logits.argmax(axis=-1)
    for i, a in enumerate(preds):
        print(f"pred,i={i},argmax={a}")
    log.write(
        event="result",
        task="infer",
        argmax=[int(a) for a in preds],
        logits_sha256=hashlib.sha256(np.ascontiguousarray(opened, dtype="<u8").tobytes()).hexdigest(),
    )


def _load_infer_batch(args, parser) -> np.ndarray:
    images, _ = load_mnist(args.data, split="test")
    n = min(args.batch, len(images))
    if n < 1:
        parser.error("empty dataset")
    return images[:n]


def cmd_simulate(args, parser) -> int:
    fp = FixedPointConfig(args.t)
    log = _Log(args.log)
    t0 = time.perf_counter()
    if args.task == "infer":
        model = load_model_float(args.model)
        images = _load_infer_batch(args, parser)
        results = run_in_process(lambda ctx: _infer_run(ctx, model, images, fp, args.seed), fp, args.seed)
        _report_infer(results[0][0], fp, log)
        for p in range(NUM_PARTIES):
            _print_comm(p, results[p][1])
            log.write(event="comm", party=p, **results[p][1])
    else:
        model = load_model_float(args.model)
        images, labels = load_mnist(args.data, split="train")
        if len(images) < 1:
            parser.error("empty dataset")
        cfg = TrainConfig(args.lr, args.batch, args.iterations, args.seed)
        arch = model.with_params(None)

        def fn(ctx):
            res = train_private(ctx, arch, cfg, (images, labels) if ctx.party == 0 else None)
            return res, _comm_fields(ctx.transport.stats)

        results = run_in_process(fn, fp, args.seed)
        for i, ce in enumerate(results[0][0].ce_history):
            print(f"train,iter={i},ce={ce:.4f}")
        log.write(event="result", task="train", ce=[round(c, 6) for c in results[0][0].ce_history])
        for p in range(NUM_PARTIES):
            _print_comm(p, results[p][1])
            log.write(event="comm", party=p, **results[p][1])
    print(f"total,time_ms={(time.perf_counter() - t0) * 1e3:.1f}")
    log.close()
    return 0


def cmd_party(args, parser) -> int:
    if args.party is None or args.party not in range(NUM_PARTIES):
        parser.error("party mode needs --party 0|1|2")
    if not args.peers:
        parser.error("party mode needs --peers host:port,host:port,host:port")
    entries = args.peers.split(",")
    if len(entries) != NUM_PARTIES:
        parser.error("--peers needs exactly three host:port entries")
    addresses = {}
    for i, e in enumerate(entries):
        host, _, port = e.rpartition(":")
        if not host or not port.isdigit():
            parser.error(f"bad peer address {e!r}")
        addresses[i] = (host, int(port))

    fp = FixedPointConfig(args.t)
    log = _Log(args.log)
    session = make_session_id(args.seed)
    transport = TcpTransport(args.party, addresses, session)
    try:
        ctx = setup_context(transport, fp, args.seed, session)
        t0 = time.perf_counter()
        if args.task == "infer":
            model = load_model_float(args.model)
            images = _load_infer_batch(args, parser)
            opened, comm = _infer_run(ctx, model, images, fp, args.seed)
            if args.party == 0:
                _report_infer(opened, fp, log)
        else:
            model = load_model_float(args.model)
            images, labels = load_mnist(args.data, split="train")
            if len(images) < 1:
                parser.error("empty dataset")
            cfg = TrainConfig(args.lr, args.batch, args.iterations, args.seed)
            res = train_private(
                ctx, model.with_params(None), cfg, (images, labels) if ctx.party == 0 else None
            )
            if args.party == 0:
                for i, ce in enumerate(res.ce_history):
                    print(f"train,iter={i},ce={ce:.4f}")
                log.write(event="result", task="train", ce=[round(c, 6) for c in res.ce_history])
            comm = _comm_fields(ctx.transport.stats)
        _print_comm(args.party, comm)
        log.write(event="comm", party=args.party, **comm)
        print(f"total,time_ms={(time.perf_counter() - t0) * 1e3:.1f}")
    finally:
        transport.close()
        log.close()
    return 0


def cmd_bench(args, parser) -> int:
    fp = FixedPointConfig(args.t)
    log = _Log(args.log)
    rng = np.random.default_rng(args.seed)

    for n in (16, 32, 64):
        x = rng.uniform(-1, 1, (1, 3, n, n))
        k = rng.uniform(-1, 1, (64, 3, 11, 11)) / 19.0

        def conv_fn(ctx, x=x, k=k):
            dealer = _input_rng(args.seed) if ctx.party == 0 else None
            xs = distribute_input(
                ctx, fx_encode(x, fp) if ctx.party == 0 else None, dealer, 0, shape=x.shape
            )
            ks = distribute_input(
                ctx, fx_encode(k, fp) if ctx.party == 0 else None, dealer, 0, shape=k.shape
            )
            base = ctx.transport.stats.copy()
            t0 = time.perf_counter()
            conv2d_shares(ctx, xs, ks, (4, 4), (0, 0))
            dt = (time.perf_counter() - t0) * 1e3
            return dt, ctx.transport.stats.since(base)

        dt, delta = run_in_process(conv_fn, fp, args.seed)[0]
        print(f"conv,n={n},time_ms={dt:.1f},bytes={delta.payload_bytes_sent()},rounds={delta.rounds}")
        log.write(event="bench", op="conv", n=n, time_ms=round(dt, 1), bytes=delta.payload_bytes_sent(), rounds=delta.rounds)

    for m in (50_000, 100_000, 200_000):
        v = rng.uniform(-8, 8, m)

        def relu_fn(ctx, v=v):
            dealer = _input_rng(args.seed) if ctx.party == 0 else None
            xs = distribute_input(
                ctx, fx_encode(v, fp) if ctx.party == 0 else None, dealer, 0, shape=v.shape
            )
            base = ctx.transport.stats.copy()
            t0 = time.perf_counter()
            relu(ctx, xs)
            dt = (time.perf_counter() - t0) * 1e3
            return dt, ctx.transport.stats.since(base)

        dt, delta = run_in_process(relu_fn, fp, args.seed)[0]
        print(f"relu,n={m},time_ms={dt:.1f},bytes={delta.payload_bytes_sent()},rounds={delta.rounds}")
        log.write(event="bench", op="relu", n=m, time_ms=round(dt, 1), bytes=delta.payload_bytes_sent(), rounds=delta.rounds)

    log.close()
    return 0


def cmd_sweep(args, parser) -> int:
    if args.iterations < 1:
        return 0
    model = load_model_float(args.model)
    images, _ = load_mnist(args.data, split="test")
    n = min(args.iterations, len(images))
    if n < 1:
        parser.error("empty dataset")
    images = images[:n]
    ref = infer_plain_float(model, images.astype(np.float64))
    log = _Log(args.log)
    for t in (10, 12, 14, 16, 18, 20):
        fp = FixedPointConfig(t)
        results = run_in_process(lambda ctx: _infer_run(ctx, model, images, fp, args.seed), fp, args.seed)
        err = mean_relative_error(fx_decode(results[0][0], fp), ref)
        print(f"sweep,t={t},rel_err={err:.6f}")
        log.write(event="sweep", t=t, rel_err=err)
    log.close()
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.task == "bench":
            if args.mode != "simulate":
                parser.error("bench runs in simulate mode")
            return cmd_bench(args, parser)
        if args.task == "sweep":
            if args.mode != "simulate":
                parser.error("sweep runs in simulate mode")
            if not args.model or not args.data:
                parser.error("sweep needs --model and --data")
            return cmd_sweep(args, parser)
        if not args.model or not args.data:
            parser.error(f"{args.task} needs --model and --data")
        if args.mode == "party":
            return cmd_party(args, parser)
        return cmd_simulate(args, parser)
    except Mpc3Error as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
