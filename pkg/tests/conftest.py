import pytest

from mpc3.data import load_mnist, make_synthetic_mnist
from mpc3.models import lenet, save_model_spec, save_weights
from mpc3.nn import TrainConfig, train_plain_fixed
from mpc3.ring import DEFAULT_FP

TRAIN_RECIPE = TrainConfig(learning_rate=0.3, batch_size=128, iterations=100, seed=11)


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """Synthetic digit dataset: 1280 train / 128 test images as IDX files."""
    d = tmp_path_factory.mktemp("digits")
    make_synthetic_mnist(d, train=1280, test=128, seed=0)
    return d


@pytest.fixture(scope="session")
def trained_model_spec(digits_dir, tmp_path_factory):
    """Digit-recognition fixture: the plaintext fixed-point trainer run on
    the synthetic training split, weights and spec saved to disk. Takes
    around half a minute, shared across the whole session."""
    data = load_mnist(digits_dir, "train")
    res = train_plain_fixed(lenet(), TRAIN_RECIPE, data, DEFAULT_FP)
    d = tmp_path_factory.mktemp("model")
    save_weights(d / "lenet.bin", res.weights)
    save_model_spec(d / "lenet.json", lenet(), weights="lenet.bin", weights_t=DEFAULT_FP.t)
    return d / "lenet.json"
