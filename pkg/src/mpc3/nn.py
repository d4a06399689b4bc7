"""Layer graphs with private, plaintext fixed-point, and float engines.

One forward/backward schedule drives three interchangeable engines: shares
moved through the interactive protocols, a plaintext fixed-point mirror
that performs the identical ring arithmetic with deterministic
round-to-nearest truncation, and a float64 reference. The fixed mirror is
what private training is measured against (the two differ only by the one
ulp of truncation rounding); the float engine anchors both to real
arithmetic.

Layout conventions: batch is the leading axis, images are NCHW,
convolution kernels are (out_channels, in_channels, kh, kw), and fully
connected weights are (out_features, in_features). Layers carry no bias
terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ProtocolError, ShapeError
from .ring import DEFAULT_FP, FixedPointConfig, as_ring, fx_decode, fx_encode, ring_shift_arith, to_signed
from .sharing import ArithmeticShare, PartyContext
from .protocols import (
    ExpConfig,
    ReciprocalConfig,
    avgpool_shares,
    conv2d_shares,
    matmul_shares,
    mul,
    mul_const,
    relu_with_mask,
    softmax,
    truncate,
)
from .session import distribute_input, open_share

_U64 = np.uint64

CONV2D = "Conv2d"
FULLY_CONNECTED = "FullyConnected"
AVGPOOL = "AvgPool"
RELU = "ReLU"
FLATTEN = "Flatten"


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return (int(a), int(b))
    return (int(v), int(v))


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    out_features: int = 0
    kernel: tuple = ()
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    window: tuple = ()


def conv2d(out_channels: int, kernel, stride=1, padding=0) -> LayerSpec:
    return LayerSpec(
        CONV2D,
        out_channels=int(out_channels),
        kernel=_pair(kernel),
        stride=_pair(stride),
        padding=_pair(padding),
    )


def fully_connected(out_features: int) -> LayerSpec:
    return LayerSpec(FULLY_CONNECTED, out_features=int(out_features))


def avgpool(window, stride=None) -> LayerSpec:
    w = _pair(window)
    return LayerSpec(AVGPOOL, window=w, stride=_pair(stride) if stride is not None else w)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def flatten() -> LayerSpec:
    return LayerSpec(FLATTEN)


@dataclass
class ModelGraph:
    """An ordered layer list plus (engine-typed) parameter tensors.

    params entries align with the parameterized layers in order; they hold
    ArithmeticShare tensors for the private engine, uint64 ring arrays for
    the fixed engine, or float arrays for the float engine.
    """

    layers: tuple
    input_shape: tuple
    params: list | None = None

    def __post_init__(self) -> None:
        self.layers = tuple(self.layers)
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self._shapes = self._infer_shapes()

    def _infer_shapes(self) -> list[tuple]:
        shape = self.input_shape
        out = []
        for spec in self.layers:
            if spec.kind == CONV2D:
                if len(shape) != 3:
                    raise ShapeError(f"Conv2d needs (C,H,W), got {shape}")
                c, h, w = shape
                kh, kw = spec.kernel
                sh, sw = spec.stride
                ph, pw = spec.padding
                ho = (h + 2 * ph - kh) // sh + 1
                wo = (w + 2 * pw - kw) // sw + 1
                if h + 2 * ph < kh or w + 2 * pw < kw or ho < 1 or wo < 1:
                    raise ShapeError(f"Conv2d kernel {spec.kernel} does not fit {shape}")
                shape = (spec.out_channels, ho, wo)
            elif spec.kind == AVGPOOL:
                if len(shape) != 3:
                    raise ShapeError(f"AvgPool needs (C,H,W), got {shape}")
                c, h, w = shape
                wh, ww = spec.window
                sh, sw = spec.stride
                ho = (h - wh) // sh + 1
                wo = (w - ww) // sw + 1
                if ho < 1 or wo < 1:
                    raise ShapeError(f"AvgPool window {spec.window} does not fit {shape}")
                shape = (c, ho, wo)
            elif spec.kind == FULLY_CONNECTED:
                if len(shape) != 1:
                    raise ShapeError(f"FullyConnected needs a flat input, got {shape}")
                shape = (spec.out_features,)
            elif spec.kind == FLATTEN:
                shape = (int(np.prod(shape)),)
            elif spec.kind == RELU:
                pass
            else:
                raise ConfigError(f"unknown layer kind {spec.kind!r}")
            out.append(shape)
        return out

    @property
    def output_shapes(self) -> list[tuple]:
        return list(self._shapes)

    @property
    def num_classes(self) -> int:
        last = self._shapes[-1]
        if len(last) != 1:
            raise ShapeError(f"model output {last} is not a logit vector")
        return last[0]

    def param_shapes(self) -> list[tuple]:
        shape = self.input_shape
        out = []
        for spec, nxt in zip(self.layers, self._shapes):
            if spec.kind == CONV2D:
                out.append((spec.out_channels, shape[0]) + spec.kernel)
            elif spec.kind == FULLY_CONNECTED:
                out.append((spec.out_features, shape[0]))
            shape = nxt
        return out

    def validate(self, recip: ReciprocalConfig = ReciprocalConfig()) -> None:
        if self.num_classes > recip.Y:
            raise ConfigError(f"{self.num_classes} classes exceed the reciprocal domain")
        if self.params is not None:
            want = self.param_shapes()
            if len(self.params) != len(want):
                raise ShapeError(f"expected {len(want)} parameter tensors, got {len(self.params)}")
            for p, w in zip(self.params, want):
                if tuple(p.shape) != w:
                    raise ShapeError(f"parameter shape {tuple(p.shape)} != {w}")

    def with_params(self, params: list | None) -> "ModelGraph":
        return ModelGraph(self.layers, self.input_shape, params)


def init_params_float(model: ModelGraph, seed: int = 0) -> list[np.ndarray]:
    """Fan-in-scaled uniform initializer, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    out = []
    for shape in model.param_shapes():
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / np.sqrt(fan_in)
        out.append(rng.uniform(-bound, bound, shape))
    return out


def init_params(model: ModelGraph, fp: FixedPointConfig = DEFAULT_FP, seed: int = 0) -> list[np.ndarray]:
    return [fx_encode(w, fp) for w in init_params_float(model, seed)]


# ---------------------------------------------------------------------------
# engines


class PrivateEngine:
    """Drives the interactive protocols on a party context."""

    def __init__(self, ctx: PartyContext):
        self.ctx = ctx
        self.fp = ctx.fp

    def shape(self, x):
        return x.shape

    def map_structural(self, x, f):
        return x.map(f)

    def conv2d(self, x, k, stride, padding, bits=None):
        return conv2d_shares(self.ctx, x, k, stride, padding, bits=bits)

    def matmul(self, a, b, bits=None):
        return matmul_shares(self.ctx, a, b, bits=bits)

    def avgpool(self, x, window, stride):
        return avgpool_shares(self.ctx, x, window, stride)

    def relu_mask(self, x):
        return relu_with_mask(self.ctx, x)

    def apply_mask(self, g, mask):
        return mul(self.ctx, g, mask, label="mul.mask")

    def sub(self, a, b):
        return a - b

    def truncate(self, x, bits=None):
        return truncate(self.ctx, x, bits)

    def mul_ring_const(self, x, c: int):
        return mul_const(x, c)

    def div_area(self, x, area: int):
        if area & (area - 1) == 0:
            return truncate(self.ctx, x, area.bit_length() - 1)
        scaled = mul_const(x, int(fx_encode(1.0 / area, self.fp)))
        return truncate(self.ctx, scaled)

    def softmax(self, z):
        return softmax(self.ctx, z)


def _wrap_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ik,kj->ij", a, b, dtype=_U64, casting="unsafe")


def _wrap_conv2d(x, k, stride, padding) -> np.ndarray:
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, k.shape[2:], axis=(2, 3))[:, :, ::sh, ::sw]
    return np.einsum("ncxyuv,ocuv->noxy", win, k, dtype=_U64, casting="unsafe")


def _wrap_sumpool(x, window, stride) -> np.ndarray:
    sh, sw = stride
    win = sliding_window_view(x, window, axis=(2, 3))[:, :, ::sh, ::sw]
    return np.einsum("ncxyuv->ncxy", win, dtype=_U64, casting="unsafe")


class FixedEngine:
    """Plaintext mirror of the private pipeline on uint64 ring tensors.

    Identical operation order and truncation amounts. By default truncation
    rounds to nearest deterministically where the protocol rounds
    stochastically within one ulp; passing `offsets` (an object whose
    draw(shape) yields the same bounded offsets a seeded session draws,
    see TruncationRandomness) makes the mirror reproduce a private run
    bit-exactly.
    """

    def __init__(self, fp: FixedPointConfig = DEFAULT_FP, offsets=None):
        self.fp = fp
        self.offsets = offsets

    def shape(self, x):
        return x.shape

    def map_structural(self, x, f):
        return f(x)

    def truncate(self, x, bits=None):
        bits = self.fp.t if bits is None else bits
        half = _U64(1 << (bits - 1))
        if self.offsets is None:
            return ring_shift_arith(x + half, bits)
        rho = self.offsets.draw(np.shape(x))
        return ring_shift_arith(rho + half, bits) + ring_shift_arith(x - rho + half, bits)

    def conv2d(self, x, k, stride, padding, bits=None):
        return self.truncate(_wrap_conv2d(x, k, stride, padding), bits)

    def matmul(self, a, b, bits=None):
        return self.truncate(_wrap_matmul(a, b), bits)

    def div_area(self, x, area: int):
        if area & (area - 1) == 0:
            return self.truncate(x, area.bit_length() - 1)
        return self.truncate(x * _U64(int(fx_encode(1.0 / area, self.fp))))

    def avgpool(self, x, window, stride):
        return self.div_area(_wrap_sumpool(x, window, stride), window[0] * window[1])

    def relu_mask(self, x):
        mask = _U64(1) - (x >> _U64(63))
        return x * mask, mask

    def apply_mask(self, g, mask):
        return g * mask

    def sub(self, a, b):
        return a - b

    def mul_ring_const(self, x, c: int):
        return x * _U64(c & ((1 << 64) - 1))

    def exp_approx(self, x, cfg: ExpConfig = ExpConfig()):
        s = cfg.squarings
        if self.fp.t + 2 * s > 61:
            raise ConfigError(f"m={cfg.m} too large for t={self.fp.t}")
        y = x + fx_encode(float(cfg.m), self.fp)
        y = self.truncate(y * y, self.fp.t + 2 * s)
        for _ in range(s - 1):
            y = self.truncate(y * y)
        return y

    def reciprocal(self, y, cfg: ReciprocalConfig = ReciprocalConfig()):
        z = np.broadcast_to(fx_encode(1.0 / cfg.Y, self.fp), y.shape).copy()
        for _ in range(cfg.iterations):
            z2 = self.truncate(z * z)
            yz2 = self.truncate(y * z2)
            z = z * _U64(2) - yz2
        return z

    def softmax(self, z, cfg: ReciprocalConfig = ReciprocalConfig()):
        d = z.shape[-1]
        if d > cfg.Y:
            raise ConfigError(f"class count {d} exceeds reciprocal domain Y={cfg.Y}")
        mx = np.max(to_signed(z), axis=-1, keepdims=True).view(_U64)
        x = z - mx
        e = self.exp_approx(x)
        s = e.sum(axis=-1, keepdims=True, dtype=_U64)
        r = self.reciprocal(s, cfg)
        return self.truncate(e * r)


class FloatEngine:
    """float64 reference (forward only)."""

    fp = None

    def shape(self, x):
        return x.shape

    def map_structural(self, x, f):
        return f(x)

    def conv2d(self, x, k, stride, padding, bits=None):
        sh, sw = stride
        ph, pw = padding
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        win = sliding_window_view(xp, k.shape[2:], axis=(2, 3))[:, :, ::sh, ::sw]
        return np.einsum("ncxyuv,ocuv->noxy", win, k)

    def matmul(self, a, b, bits=None):
        return a @ b

    def avgpool(self, x, window, stride):
        sh, sw = stride
        win = sliding_window_view(x, window, axis=(2, 3))[:, :, ::sh, ::sw]
        return win.mean(axis=(-2, -1))

    def relu_mask(self, x):
        mask = (x >= 0).astype(np.float64)
        return x * mask, mask

    def apply_mask(self, g, mask):
        return g * mask

    def sub(self, a, b):
        return a - b

    def softmax(self, z, cfg=None):
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# forward / backward schedule (engine-generic)


def _forward(eng, model: ModelGraph, x, record: bool):
    if model.params is None:
        raise ProtocolError("model has no parameters")
    acts = []
    h = x
    pi = 0
    for spec in model.layers:
        if spec.kind == CONV2D:
            k = model.params[pi]
            pi += 1
            acts.append((h, k) if record else None)
            h = eng.conv2d(h, k, spec.stride, spec.padding)
        elif spec.kind == FULLY_CONNECTED:
            w = model.params[pi]
            pi += 1
            acts.append((h, w) if record else None)
            h = eng.matmul(h, eng.map_structural(w, lambda a: a.T))
        elif spec.kind == AVGPOOL:
            acts.append((eng.shape(h),) if record else None)
            h = eng.avgpool(h, spec.window, spec.stride)
        elif spec.kind == RELU:
            h, mask = eng.relu_mask(h)
            acts.append((mask,) if record else None)
        elif spec.kind == FLATTEN:
            shape = eng.shape(h)
            acts.append((shape,) if record else None)
            h = eng.map_structural(h, lambda a: a.reshape(shape[0], -1))
    return h, acts


def _dilate(a: np.ndarray, stride) -> np.ndarray:
    sh, sw = stride
    if sh == 1 and sw == 1:
        return a
    n, c, h, w = a.shape
    out = np.zeros((n, c, (h - 1) * sh + 1, (w - 1) * sw + 1), dtype=a.dtype)
    out[:, :, ::sh, ::sw] = a
    return out


def _conv_grad_kernel(eng, x, g, spec: LayerSpec, bits):
    """d(loss)/d(kernel) as one exact convolution plus one truncation.

    Correlating the (channel, batch)-transposed input with the
    stride-dilated transposed output gradient yields the kernel gradient;
    when the stride does not divide the input evenly the raw result
    carries extra rows/cols that no forward window touched, cropped here.
    """
    kh, kw = spec.kernel
    a = eng.map_structural(x, lambda v: v.transpose(1, 0, 2, 3))
    b = eng.map_structural(g, lambda v: _dilate(v, spec.stride).transpose(1, 0, 2, 3))
    full = eng.conv2d(a, b, (1, 1), spec.padding, bits=bits)
    return eng.map_structural(full, lambda v: v[:, :, :kh, :kw].transpose(1, 0, 2, 3))


def _conv_grad_input(eng, g, k, spec: LayerSpec, in_shape, bits):
    """d(loss)/d(input): full correlation with the rotated kernel.

    The dilated output gradient, padded by kernel-1, correlates with the
    kernel transposed on its channel axes and flipped spatially. Input
    positions past the last forward window receive zero gradient.
    """
    kh, kw = spec.kernel
    ph, pw = spec.padding
    h, w = in_shape[-2:]

    def pad_dilated(v):
        vd = _dilate(v, spec.stride)
        return np.pad(vd, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))

    gp = eng.map_structural(g, pad_dilated)
    kf = eng.map_structural(k, lambda v: v.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    full = eng.conv2d(gp, kf, (1, 1), (0, 0), bits=bits)

    def embed(v):
        canvas = np.zeros(v.shape[:2] + (h + 2 * ph, w + 2 * pw), dtype=v.dtype)
        canvas[:, :, : v.shape[2], : v.shape[3]] = v
        return canvas[:, :, ph : ph + h, pw : pw + w]

    return eng.map_structural(full, embed)


def _avgpool_backward(eng, g, window, stride, in_shape):
    wh, ww = window
    sh, sw = stride
    ho, wo = eng.shape(g)[-2:]

    def up(a):
        out = np.zeros(in_shape, dtype=a.dtype)
        for u in range(wh):
            for v in range(ww):
                out[:, :, u : u + sh * (ho - 1) + 1 : sh, v : v + sw * (wo - 1) + 1 : sw] += a
        return out

    return eng.div_area(eng.map_structural(g, up), wh * ww)


def _backward(eng, model: ModelGraph, acts, grad_out, batch_bits: int = 0):
    if acts is None or len(acts) != len(model.layers) or any(
        a is None for a in acts
    ):
        raise ProtocolError("missing activation cache; run the forward pass with recording")
    t = eng.fp.t
    param_layers = [i for i, s in enumerate(model.layers) if s.kind in (CONV2D, FULLY_CONNECTED)]
    grads = [None] * len(param_layers)
    pi = len(param_layers)
    g = grad_out
    for li in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[li]
        cached = acts[li]
        if spec.kind == FULLY_CONNECTED:
            x, w = cached
            pi -= 1
            gt = eng.map_structural(g, lambda a: a.T)
            grads[pi] = eng.matmul(gt, x, bits=t + batch_bits)
            if li == param_layers[0]:
                break
            g = eng.matmul(g, w)
        elif spec.kind == CONV2D:
            x, k = cached
            pi -= 1
            grads[pi] = _conv_grad_kernel(eng, x, g, spec, bits=t + batch_bits)
            if li == param_layers[0]:
                break
            g = _conv_grad_input(eng, g, k, spec, eng.shape(x), bits=t)
        elif spec.kind == AVGPOOL:
            g = _avgpool_backward(eng, g, spec.window, spec.stride, cached[0])
        elif spec.kind == RELU:
            g = eng.apply_mask(g, cached[0])
        elif spec.kind == FLATTEN:
            g = eng.map_structural(g, lambda a, s=cached[0]: a.reshape(s))
    return grads


def _sgd_step(eng, params, grads, lr: float):
    c = int(fx_encode(lr, eng.fp))
    if c == 0:
        return list(params)
    return [eng.sub(p, eng.truncate(eng.mul_ring_const(g, c))) for p, g in zip(params, grads)]


# ---------------------------------------------------------------------------
# public entry points


def infer_private(ctx: PartyContext, model: ModelGraph, x: ArithmeticShare) -> ArithmeticShare:
    """Forward pass on shares; logits stay secret-shared."""
    logits, _ = _forward(PrivateEngine(ctx), model, x, record=False)
    return logits


def forward_private(ctx: PartyContext, model: ModelGraph, x: ArithmeticShare):
    """Forward pass that records the activation cache for backward."""
    return _forward(PrivateEngine(ctx), model, x, record=True)


def loss_grad_output(ctx: PartyContext, logits: ArithmeticShare, y: ArithmeticShare) -> ArithmeticShare:
    """Cross-entropy gradient at the logits: softmax(logits) - y.

    Works entirely on shares; the loss value itself is never computed.
    """
    if logits.shape[-1] != y.shape[-1]:
        raise ShapeError(f"logit/label length mismatch {logits.shape} vs {y.shape}")
    return softmax(ctx, logits) - y


def backward(
    ctx: PartyContext, model: ModelGraph, acts, grad_out: ArithmeticShare, batch_bits: int = 0
) -> list:
    """Parameter gradients from the recorded activation cache.

    batch_bits extra truncation bits divide every parameter gradient by
    2^batch_bits, folding power-of-two batch averaging into the one
    rescaling truncation each gradient already needs.
    """
    return _backward(PrivateEngine(ctx), model, acts, grad_out, batch_bits)


def sgd_step(ctx: PartyContext, params: list, grads: list, lr: float) -> list:
    """W <- W - lr*grad with lr a public fixed-point constant."""
    return _sgd_step(PrivateEngine(ctx), params, grads, lr)


def infer_plain_fixed(model: ModelGraph, x: np.ndarray, fp: FixedPointConfig = DEFAULT_FP) -> np.ndarray:
    """Fixed-point reference forward pass on ring tensors."""
    logits, _ = _forward(FixedEngine(fp), model, as_ring(x), record=False)
    return logits


def infer_plain_float(model: ModelGraph, x: np.ndarray) -> np.ndarray:
    """float64 reference forward pass."""
    logits, _ = _forward(FloatEngine(), model, np.asarray(x, dtype=np.float64), record=False)
    return logits


def share_model(ctx: PartyContext, model: ModelGraph, rng=None, owner: int = 0) -> ModelGraph:
    """Deal the owner's plaintext ring parameters out as replicated shares."""
    shapes = model.param_shapes()
    params = [
        distribute_input(
            ctx, model.params[i] if ctx.party == owner else None, rng, owner, shape=shapes[i]
        )
        for i in range(len(shapes))
    ]
    return model.with_params(params)


def mean_relative_error(test: np.ndarray, ref: np.ndarray) -> float:
    """Mean over rows of max|test - ref| / max|ref| (the logit error metric)."""
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    num = np.abs(test - ref).max(axis=-1)
    den = np.abs(ref).max(axis=-1)
    return float((num / den).mean())


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    iterations: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")


@dataclass
class TrainResult:
    weights: list
    ce_history: list = field(default_factory=list)


def batch_indices(iteration: int, batch_size: int, n: int) -> np.ndarray:
    """Deterministic schedule: consecutive wraparound slices of the dataset."""
    return (np.arange(batch_size) + iteration * batch_size) % n


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of float logits against integer labels."""
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def moving_average(values, window: int = 20) -> np.ndarray:
    """Centered moving average: entry i averages values[i-w/2 : i+w/2]."""
    values = np.asarray(values, dtype=np.float64)
    half = window // 2
    return np.array(
        [values[max(0, i - half) : i + window - half].mean() for i in range(len(values))]
    )


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((len(labels), num_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _batch_bits(batch_size: int) -> int:
    if batch_size & (batch_size - 1) == 0:
        return batch_size.bit_length() - 1
    return 0


def train_private(
    ctx: PartyContext,
    model: ModelGraph,
    cfg: TrainConfig,
    data: tuple[np.ndarray, np.ndarray] | None = None,
    owner: int = 0,
) -> TrainResult:
    """Minibatch SGD on shares; weights are opened only at the end.

    The owner party supplies data=(images float [N,C,H,W], labels int [N])
    and deals every batch; other parties pass data=None. The cross-entropy
    history (reconstructed logits scored against the owner's labels, for
    testing and progress reporting only) is filled in on the owner.
    """
    model.validate()
    d = model.num_classes
    fp = ctx.fp
    is_owner = ctx.party == owner
    if is_owner:
        if data is None:
            raise ProtocolError("owner must supply the training data")
        images, labels = data
        n = len(images)
        if n < 1:
            raise ConfigError("empty training set")
        rng = np.random.default_rng(cfg.seed)
        plain = init_params(model, fp, cfg.seed)
    else:
        rng = None
        plain = None

    shapes = model.param_shapes()
    params = [
        distribute_input(ctx, plain[i] if is_owner else None, rng, owner, shape=shapes[i])
        for i in range(len(shapes))
    ]
    priv = model.with_params(None)
    bbits = _batch_bits(cfg.batch_size)
    inv_b = int(fx_encode(1.0 / cfg.batch_size, fp)) if bbits == 0 else 0
    ce_history: list[float] = []

    for it in range(cfg.iterations):
        if is_owner:
            idx = batch_indices(it, cfg.batch_size, n)
            yb = one_hot(labels[idx], d)
        xs = distribute_input(
            ctx,
            fx_encode(images[idx], fp) if is_owner else None,
            rng,
            owner,
            shape=(cfg.batch_size,) + model.input_shape,
        )
        ys = distribute_input(
            ctx,
            fx_encode(yb, fp) if is_owner else None,
            rng,
            owner,
            shape=(cfg.batch_size, d),
        )
        priv.params = params
        logits, acts = forward_private(ctx, priv, xs)
        g = loss_grad_output(ctx, logits, ys)
        if bbits == 0:
            g = truncate(ctx, mul_const(g, inv_b))
        grads = backward(ctx, priv, acts, g, batch_bits=bbits)
        params = sgd_step(ctx, params, grads, cfg.learning_rate)

        opened = open_share(ctx, logits)
        if is_owner:
            ce_history.append(cross_entropy(fx_decode(opened, fp), labels[idx]))

    weights = [open_share(ctx, p) for p in params]
    return TrainResult(weights=weights, ce_history=ce_history)


def train_plain_fixed(
    model: ModelGraph,
    cfg: TrainConfig,
    data: tuple[np.ndarray, np.ndarray],
    fp: FixedPointConfig = DEFAULT_FP,
    offsets=None,
) -> TrainResult:
    """Plaintext twin of train_private: same schedule and arithmetic.

    With offsets=None truncations round to nearest; with a
    TruncationRandomness for the session seed the run tracks the private
    trainer bit for bit.
    """
    model.validate()
    eng = FixedEngine(fp, offsets)
    d = model.num_classes
    images, labels = data
    n = len(images)
    if n < 1:
        raise ConfigError("empty training set")
    params = list(init_params(model, fp, cfg.seed))
    plain = model.with_params(None)
    bbits = _batch_bits(cfg.batch_size)
    inv_b = int(fx_encode(1.0 / cfg.batch_size, fp)) if bbits == 0 else 0
    ce_history: list[float] = []

    for it in range(cfg.iterations):
        idx = batch_indices(it, cfg.batch_size, n)
        xs = fx_encode(images[idx], fp)
        ys = fx_encode(one_hot(labels[idx], d), fp)
        plain.params = params
        logits, acts = _forward(eng, plain, xs, record=True)
        g = eng.softmax(logits) - ys
        if bbits == 0:
            g = eng.truncate(eng.mul_ring_const(g, inv_b))
        grads = _backward(eng, plain, acts, g, batch_bits=bbits)
        params = _sgd_step(eng, params, grads, cfg.learning_rate)
        ce_history.append(cross_entropy(fx_decode(logits, fp), labels[idx]))

    return TrainResult(weights=params, ce_history=ce_history)
