import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpc3 import prf, sharing
from mpc3.errors import (
    ConfigError,
    FreshnessError,
    IntegrityError,
    RangeError,
    ThresholdError,
    TopologyError,
)
from mpc3.ring import FixedPointConfig
from mpc3.sharing import (
    ArithmeticShare,
    PartyContext,
    PrfKeySet,
    arithmetic_trivial,
    binary_trivial,
    const_share,
    pairwise_random,
    reconstruct,
    share,
    successor,
    xor_reconstruct,
    xor_share,
    zero_share,
    zero_share_xor,
)

U64 = np.uint64
FP = FixedPointConfig(20)


def rand_u64(rng, shape):
    return rng.integers(0, 1 << 64, size=shape, dtype=U64)


def make_contexts(session=b"\x07" * 16):
    keys = [prf.derive_key(b"seed", session, f"party{i}") for i in range(3)]
    return [
        PartyContext(i, None, PrfKeySet(keys[i], keys[(i - 1) % 3]), FP)
        for i in range(3)
    ]


class TestShareReconstruct:
    def test_roundtrip_tensor(self):
        rng = np.random.default_rng(0)
        x = rand_u64(rng, (4, 5))
        assert np.array_equal(reconstruct(share(x, rng, FP)), x)

    def test_any_two_shares_suffice(self):
        rng = np.random.default_rng(1)
        x = rand_u64(rng, (9,))
        shares = share(x, rng, FP)
        for drop in range(3):
            pair = [s for s in shares if s.owner != drop]
            assert np.array_equal(reconstruct(pair), x)

    def test_single_share_rejected(self):
        rng = np.random.default_rng(2)
        shares = share(rand_u64(rng, (3,)), rng, FP)
        with pytest.raises(ThresholdError):
            reconstruct(shares[:1])

    def test_duplicate_owner_rejected(self):
        rng = np.random.default_rng(3)
        shares = share(rand_u64(rng, (3,)), rng, FP)
        with pytest.raises(ThresholdError):
            reconstruct([shares[0], shares[0]])
        with pytest.raises(IntegrityError):
            reconstruct([shares[0], shares[0], shares[1]])

    def test_tampered_overlap_rejected(self):
        rng = np.random.default_rng(4)
        shares = share(rand_u64(rng, (3,)), rng, FP)
        shares[1].lo = shares[1].lo + U64(1)
        with pytest.raises(IntegrityError):
            reconstruct(shares)

    def test_replication_topology(self):
        # party i's hi component is party i+1's lo component
        rng = np.random.default_rng(5)
        shares = share(rand_u64(rng, (6,)), rng, FP)
        for i in range(3):
            assert np.array_equal(shares[i].hi, shares[successor(i)].lo)

    def test_shares_look_uniform(self):
        rng = np.random.default_rng(6)
        shares = share(np.zeros(20000, dtype=U64), rng, FP)
        for s in shares[:2]:
            mean = s.lo.astype(np.float64).mean()
            assert abs(mean - 2.0**63) < 2.0**63 * 0.05

    @given(st.integers(min_value=0, max_value=(1 << 64) - 1), st.integers(0, 2**32))
    def test_roundtrip_property(self, v, seed):
        rng = np.random.default_rng(seed)
        x = np.array([v], dtype=U64)
        assert int(reconstruct(share(x, rng, FP))[0]) == v


class TestShareAlgebra:
    def test_add_is_elementwise(self):
        rng = np.random.default_rng(7)
        x, y = rand_u64(rng, (8,)), rand_u64(rng, (8,))
        sx, sy = share(x, rng, FP), share(y, rng, FP)
        out = [sx[i] + sy[i] for i in range(3)]
        assert np.array_equal(reconstruct(out), x + y)

    def test_sub_and_neg(self):
        rng = np.random.default_rng(8)
        x, y = rand_u64(rng, (8,)), rand_u64(rng, (8,))
        sx, sy = share(x, rng, FP), share(y, rng, FP)
        assert np.array_equal(reconstruct([sx[i] - sy[i] for i in range(3)]), x - y)
        assert np.array_equal(reconstruct([-sx[i] for i in range(3)]), U64(0) - x)

    def test_mixed_owner_rejected(self):
        rng = np.random.default_rng(9)
        sx = share(rand_u64(rng, (2,)), rng, FP)
        with pytest.raises(TopologyError):
            sx[0] + sx[1]

    def test_mixed_fp_rejected(self):
        rng = np.random.default_rng(10)
        x = rand_u64(rng, (2,))
        a = share(x, rng, FixedPointConfig(20))[0]
        b = share(x, rng, FixedPointConfig(13))[0]
        with pytest.raises(IntegrityError):
            a + b


class TestXorSharing:
    def test_roundtrip(self):
        rng = np.random.default_rng(11)
        x = rand_u64(rng, (7, 3))
        assert np.array_equal(xor_reconstruct(xor_share(x, rng)), x)

    def test_xor_of_sharings(self):
        rng = np.random.default_rng(12)
        x, y = rand_u64(rng, (5,)), rand_u64(rng, (5,))
        sx, sy = xor_share(x, rng), xor_share(y, rng)
        assert np.array_equal(xor_reconstruct([sx[i] ^ sy[i] for i in range(3)]), x ^ y)

    def test_two_shares_reconstruct(self):
        rng = np.random.default_rng(13)
        x = rand_u64(rng, (4,))
        sx = xor_share(x, rng)
        assert np.array_equal(xor_reconstruct(sx[1:]), x)


class TestTrivialEmbeddings:
    def test_arithmetic_trivial_reconstructs(self):
        rng = np.random.default_rng(14)
        v = rand_u64(rng, (6,))
        for slot in range(3):
            shares = [
                arithmetic_trivial(
                    p, slot, v if p in (slot, (slot - 1) % 3) else None, v.shape, FP
                )
                for p in range(3)
            ]
            assert np.array_equal(reconstruct(shares), v)

    def test_binary_trivial_reconstructs(self):
        rng = np.random.default_rng(15)
        v = rand_u64(rng, (6,))
        shares = [
            binary_trivial(p, 2, v if p in (1, 2) else None, v.shape) for p in range(3)
        ]
        assert np.array_equal(xor_reconstruct(shares), v)

    def test_holder_must_supply_value(self):
        with pytest.raises(TopologyError):
            arithmetic_trivial(0, 0, None, (2,), FP)
        with pytest.raises(TopologyError):
            binary_trivial(2, 0, None, (2,))

    def test_const_share(self):
        shares = [const_share(p, U64(41), (3,), FP) for p in range(3)]
        assert reconstruct(shares).tolist() == [41, 41, 41]


class TestCorrelatedRandomness:
    def test_zero_shares_telescope(self):
        ctxs = make_contexts()
        parts = [
            zero_share(c, prf.PURPOSE_ARITH_ZERO, 0, (100,)) for c in ctxs
        ]
        assert np.all(parts[0] + parts[1] + parts[2] == 0)
        assert np.any(parts[0] != 0)

    def test_xor_zero_shares_telescope(self):
        ctxs = make_contexts()
        parts = [zero_share_xor(c, prf.PURPOSE_XOR_ZERO, 0, (100,)) for c in ctxs]
        assert np.all(parts[0] ^ parts[1] ^ parts[2] == 0)
        assert np.any(parts[0] != 0)

    def test_distinct_indices_give_distinct_masks(self):
        ctxs = make_contexts()
        a = zero_share(ctxs[0], prf.PURPOSE_ARITH_ZERO, 0, (50,))
        b = zero_share(ctxs[0], prf.PURPOSE_ARITH_ZERO, 1, (50,))
        assert not np.array_equal(a, b)

    def test_pairwise_random_agrees_with_neighbor(self):
        ctxs = make_contexts()
        for i in range(3):
            j = successor(i)
            a = pairwise_random(ctxs[i], j, prf.PURPOSE_TRUNC_R, 0, (16,))
            b = pairwise_random(ctxs[j], i, prf.PURPOSE_TRUNC_R, 0, (16,))
            assert np.array_equal(a, b)

    def test_pairwise_random_needs_neighbor(self):
        ctxs = make_contexts()
        with pytest.raises(TopologyError):
            pairwise_random(ctxs[0], 0, prf.PURPOSE_TRUNC_R, 0, (4,))

    def test_counter_reuse_rejected(self):
        ctxs = make_contexts()
        zero_share(ctxs[0], prf.PURPOSE_ARITH_ZERO, 0, (4,))
        with pytest.raises(FreshnessError):
            zero_share(ctxs[0], prf.PURPOSE_ARITH_ZERO, 0, (4,))

    def test_take_sequences_per_purpose(self):
        ctxs = make_contexts()
        assert [ctxs[0].take(1), ctxs[0].take(1), ctxs[0].take(2)] == [0, 1, 0]


class TestPrf:
    def test_words_deterministic(self):
        k = prf.PrfKey(b"k" * 16)
        assert np.array_equal(k.words(1, 0, 8), k.words(1, 0, 8))

    def test_purpose_and_index_separate_streams(self):
        k = prf.PrfKey(b"k" * 16)
        base = k.words(1, 0, 8)
        assert not np.array_equal(base, k.words(2, 0, 8))
        assert not np.array_equal(base, k.words(1, 1, 8))

    def test_prefix_consistency(self):
        k = prf.PrfKey(b"k" * 16)
        assert np.array_equal(k.words(1, 0, 64)[:8], k.words(1, 0, 8))

    def test_bad_key_length_rejected(self):
        with pytest.raises(ConfigError):
            prf.PrfKey(b"short")

    def test_range_checks(self):
        k = prf.PrfKey(b"k" * 16)
        with pytest.raises(RangeError):
            k.words(1 << 16, 0, 1)
        with pytest.raises(RangeError):
            k.words(1, 1 << 48, 1)

    def test_derive_key_deterministic_and_label_separated(self):
        a = prf.derive_key(b"s", b"\x00" * 16, "party0")
        b = prf.derive_key(b"s", b"\x00" * 16, "party0")
        c = prf.derive_key(b"s", b"\x00" * 16, "party1")
        d = prf.derive_key(b"s", b"\x01" + b"\x00" * 15, "party0")
        assert a == b
        assert a != c and a != d

    def test_repr_hides_key_material(self):
        assert "6b" not in repr(prf.PrfKey(b"k" * 16))
        assert "k" * 16 not in repr(prf.PrfKey(b"k" * 16))


class TestShareObject:
    def test_map_applies_to_both_components(self):
        rng = np.random.default_rng(16)
        x = rand_u64(rng, (3,))
        sx = share(x, rng, FP)
        doubled = [s.map(lambda v: v * U64(2)) for s in sx]
        assert np.array_equal(reconstruct(doubled), x * U64(2))

    def test_shape_property(self):
        s = ArithmeticShare(0, np.zeros((2, 3), U64), np.zeros((2, 3), U64), FP)
        assert s.shape == (2, 3)

    def test_module_exports(self):
        assert sharing.NUM_PARTIES == 3
