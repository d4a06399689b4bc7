"""Three-party private CNN inference and training over Z_2^64 with
replicated secret sharing and an exact float-limb bilinear engine."""

from .errors import (
    ConfigError,
    ExactnessError,
    FormatError,
    FrameError,
    FreshnessError,
    IntegrityError,
    Mpc3Error,
    ProtocolError,
    RangeError,
    ShapeError,
    ThresholdError,
    TopologyError,
    TransportError,
)
from .ring import (
    DEFAULT_FP,
    LIMB_PAIRS,
    MAX_ACCUMULATION,
    BilinearOpSpec,
    FixedPointConfig,
    as_ring,
    bilinear_exact,
    conv2d_spec,
    fx_decode,
    fx_encode,
    limb_decompose,
    limb_recombine,
    matmul_spec,
    ring_add,
    ring_neg,
    ring_shift_arith,
    ring_sub,
    sumpool_spec,
    to_signed,
)
from .prf import PrfKey, derive_key
from .sharing import (
    ArithmeticShare,
    BinaryShare,
    PartyContext,
    PrfKeySet,
    reconstruct,
    share,
    xor_reconstruct,
    xor_share,
)
from .transport import CommStats, InProcessNetwork, TcpTransport, Transport
from .session import (
    distribute_input,
    make_session_id,
    open_share,
    run_in_process,
    setup_context,
)
from .protocols import (
    ExpConfig,
    ReciprocalConfig,
    a2b,
    add_const,
    avgpool_shares,
    bit_inject,
    compare,
    conv2d_shares,
    division,
    drelu,
    exp_approx,
    matmul_shares,
    max_tree,
    msb,
    mul,
    mul_const,
    reciprocal,
    relu,
    softmax,
    sub_from_const,
    truncate,
)
from .nn import (
    LayerSpec,
    ModelGraph,
    TrainConfig,
    TrainResult,
    avgpool,
    backward,
    conv2d,
    flatten,
    forward_private,
    fully_connected,
    infer_plain_fixed,
    infer_plain_float,
    infer_private,
    init_params,
    init_params_float,
    loss_grad_output,
    mean_relative_error,
    sgd_step,
    share_model,
    train_plain_fixed,
    train_private,
)
from .models import (
    alexnet_cifar,
    lenet,
    load_model_float,
    load_model_spec,
    load_weights,
    save_model_spec,
    save_weights,
)
from .data import (
    generate_digits,
    load_idx_images,
    load_idx_labels,
    load_mnist,
    make_synthetic_mnist,
    write_idx_images,
    write_idx_labels,
)

__all__ = [name for name in dir() if not name.startswith("_")]
