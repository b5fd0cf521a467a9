import math

import numpy as np
import pytest

from conftest import make_sentence, small_config
from digcnn import autodiff as ad
from digcnn.autodiff import INFER, TRAIN, Tensor
from digcnn.corpus import Vocabulary
from digcnn.errors import (
    ConfigError,
    ContractViolation,
    DivergenceError,
    NotACheckpointError,
    ShapeMismatchError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from digcnn.model import forward, init_params
from digcnn.train import (
    SGD,
    Adam,
    Checkpoint,
    TrainConfig,
    block_loss,
    clip_grads,
    load_checkpoint,
    save_checkpoint,
    sentence_gradients,
    sentence_loss,
    train,
)
from oracles import finite_difference, max_relative_error


def score_tensor(n, d, rng=None, fill=0.0):
    data = np.full((n, n, d), fill) if rng is None else rng.normal(size=(n, n, d))
    return Tensor(data, requires_grad=True)


def vocab_for(n_words=10, n_tags=5, n_labels=3):
    v = Vocabulary()
    for i in range(2, n_words):
        v.words[f"w{i}"] = i
    for i in range(2, n_tags):
        v.tags[f"t{i}"] = i
    for i in range(n_labels):
        v.labels[f"l{i}"] = i
    return v


class TestLoss:
    def test_saturates_at_large_margin(self):
        s = make_sentence(5, n_labels=3)
        scores = np.zeros((6, 6, 3))
        for d, (h, l) in enumerate(zip(s.gold_heads, s.gold_labels), start=1):
            scores[d, h, l] = 40.0
        assert float(block_loss(Tensor(scores), s).data) < 1e-6

    @pytest.mark.parametrize("n_tokens, d", [(1, 1), (3, 2), (6, 4)])
    def test_uniform_scores_give_log_support(self, n_tokens, d):
        s = make_sentence(n_tokens, n_labels=d)
        u = n_tokens * d  # legal heads per dependent (all but itself) times labels
        loss = sentence_loss([score_tensor(n_tokens + 1, d)], s)
        assert float(loss.data) == pytest.approx(math.log(u), abs=1e-12)

    def test_mean_over_three_blocks(self):
        rng = np.random.default_rng(0)
        s = make_sentence(4)
        blocks = [score_tensor(5, 3, rng) for _ in range(3)]
        each = [float(block_loss(b, s).data) for b in blocks]
        assert abs(float(sentence_loss(blocks, s).data) - sum(each) / 3) < 1e-12

    def test_block_gradients_are_scaled_by_count(self):
        rng = np.random.default_rng(1)
        s = make_sentence(4)
        blocks = [score_tensor(5, 3, rng) for _ in range(3)]
        ad.backward(sentence_loss(blocks, s))
        alone = Tensor(blocks[1].data.copy(), requires_grad=True)
        ad.backward(block_loss(alone, s))
        np.testing.assert_allclose(blocks[1].grad, alone.grad / 3, rtol=1e-12, atol=1e-15)

    def test_row_shift_invariance(self):
        rng = np.random.default_rng(2)
        s = make_sentence(5)
        scores = rng.normal(size=(6, 6, 3))
        base = float(block_loss(Tensor(scores), s).data)
        for d in range(1, 6):
            shifted = scores.copy()
            shifted[d] += 17.5
            assert float(block_loss(Tensor(shifted), s).data) == pytest.approx(base, abs=1e-12)

    def test_masked_cells_get_no_gradient(self):
        rng = np.random.default_rng(3)
        s = make_sentence(4)
        t = score_tensor(5, 3, rng)
        ad.backward(sentence_loss([t], s))
        assert np.all(t.grad[0] == 0)
        for d in range(5):
            assert np.all(t.grad[d, d] == 0)

    def test_needs_gold(self):
        s = make_sentence(3, gold=False)
        with pytest.raises(ContractViolation):
            sentence_loss([score_tensor(4, 3)], s)

    def test_rejects_unknown_label(self):
        s = make_sentence(3)
        s.gold_labels = [0, -1, 0]
        with pytest.raises(ContractViolation):
            sentence_loss([score_tensor(4, 3)], s)


class TestGradients:
    def test_full_model_matches_finite_differences(self):
        cfg = small_config(hidden_channels=5, num_labels=2)
        s = make_sentence(3, n_labels=2, seed=4)
        params = init_params(cfg, 10, 5, np.random.default_rng(4))
        _, grads = sentence_gradients(s, params, cfg, TRAIN, np.random.default_rng(0))

        def f():
            return float(sentence_loss(forward(s, params, cfg, INFER), s).data)

        for t, g in zip(params.tensors(), grads):
            assert max_relative_error(g, finite_difference(f, t.data)) < 1e-4, t.name

    def test_view_leaves_shared_params_untouched(self):
        cfg = small_config()
        params = init_params(cfg, 10, 5, np.random.default_rng(5))
        sentence_gradients(make_sentence(3), params, cfg, TRAIN, None)
        assert all(t.grad is None or not np.any(t.grad) for t in params.tensors())


class TestOptimizers:
    def test_sgd_step(self):
        params = init_params(small_config(), 10, 5, np.random.default_rng(0))
        before = [t.data.copy() for t in params.tensors()]
        grads = [np.ones_like(b) for b in before]
        SGD(params, 0.1).step(grads)
        for b, t in zip(before, params.tensors()):
            np.testing.assert_allclose(t.data, b - 0.1)

    def test_adam_first_step_is_lr_sign(self):
        params = init_params(small_config(), 10, 5, np.random.default_rng(0))
        before = [t.data.copy() for t in params.tensors()]
        grads = [np.full_like(b, -3.0) for b in before]
        Adam(params, 0.01).step(grads)
        for b, t in zip(before, params.tensors()):
            np.testing.assert_allclose(t.data, b + 0.01, rtol=0, atol=1e-9)

    def test_clip(self):
        grads, norm = clip_grads([np.array([3.0]), np.array([4.0])], 1.0)
        assert norm == 5.0
        assert np.sqrt(sum(float(g @ g) for g in grads)) == pytest.approx(1.0)
        same, _ = clip_grads([np.array([0.3])], 1.0)
        assert same[0][0] == 0.3


def tiny_setup(n_sentences=6):
    cfg = small_config()
    sentences = [make_sentence(3 + k % 3, seed=10 + k) for k in range(n_sentences)]
    return cfg, sentences, vocab_for()


class TestTrain:
    def test_zero_learning_rate_keeps_parameters(self):
        cfg, data, vocab = tiny_setup()
        tc = TrainConfig(epochs=2, batch_size=2, learning_rate=0.0, seed=3)
        start = init_params(cfg, vocab.n_words, vocab.n_tags, np.random.default_rng(3))
        ckpt, _ = train(data, [], cfg, tc, vocab, params=start.copy())
        for a, b in zip(start.tensors(), ckpt.params.tensors()):
            assert np.array_equal(a.data, b.data)

    def test_loss_decreases(self):
        cfg, data, vocab = tiny_setup()
        _, log = train(data, [], cfg, TrainConfig(epochs=30, batch_size=2, learning_rate=0.01), vocab)
        losses = [float(line.split("\t")[3]) for line in log if "\ttrain_loss\t" in line]
        assert np.mean(losses[-3:]) < 0.5 * np.mean(losses[:3])

    def test_same_seed_is_bitwise_reproducible(self):
        cfg, data, vocab = tiny_setup()
        cfg = small_config(input_dropout=0.2, block_dropout=0.3)
        tc = TrainConfig(epochs=3, batch_size=4, seed=11)
        a, log_a = train(data, data[:2], cfg, tc, vocab)
        b, log_b = train(data, data[:2], cfg, tc, vocab)
        assert log_a == log_b
        assert a.to_bytes() == b.to_bytes()

    def test_threads_do_not_change_the_result(self):
        cfg, data, vocab = tiny_setup()
        cfg = small_config(input_dropout=0.2)
        one, log1 = train(data, [], cfg, TrainConfig(epochs=2, batch_size=3, seed=2), vocab)
        two, log2 = train(data, [], cfg, TrainConfig(epochs=2, batch_size=3, seed=2, n_jobs=3), vocab)
        assert log1 == log2 and one.to_bytes() == two.to_bytes()

    def test_divergence_names_the_batch(self):
        cfg, data, vocab = tiny_setup()
        params = init_params(cfg, vocab.n_words, vocab.n_tags, np.random.default_rng(0))
        params.output_bias.data[:] = np.nan
        with pytest.raises(DivergenceError, match="batch 1"):
            train(data, [], cfg, TrainConfig(epochs=1), vocab, params=params)

    def test_empty_training_set(self):
        cfg, _, vocab = tiny_setup()
        with pytest.raises(ContractViolation):
            train([], [], cfg, TrainConfig(), vocab)

    def test_dev_metrics_logged(self):
        cfg, data, vocab = tiny_setup()
        _, log = train(data, data[:3], cfg, TrainConfig(epochs=2), vocab)
        metrics = [line.split("\t")[2] for line in log]
        assert metrics.count("dev_uas") == 2 and metrics.count("dev_las") == 2

    def test_time_budget(self):
        cfg, data, vocab = tiny_setup()
        _, log = train(data, [], cfg, TrainConfig(epochs=1000, batch_size=1, max_seconds=0.0), vocab)
        assert sum("\ttrain_loss\t" in line for line in log) == 1

    @pytest.mark.parametrize("bad", [dict(epochs=0), dict(batch_size=0), dict(learning_rate=-1),
                                     dict(optimizer="rmsprop"), dict(dtype="float16"), dict(clip_norm=0)])
    def test_config_validation(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


class TestCheckpoint:
    @pytest.fixture
    def ckpt(self):
        cfg, _, vocab = tiny_setup()
        return Checkpoint(cfg, vocab, init_params(cfg, vocab.n_words, vocab.n_tags, np.random.default_rng(0)))

    def test_save_load_save_identical(self, ckpt, tmp_path):
        save_checkpoint(ckpt, tmp_path / "a.bin")
        again = load_checkpoint(tmp_path / "a.bin")
        save_checkpoint(again, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
        assert again.vocab == ckpt.vocab and again.config == ckpt.config

    def test_float32_round_trip(self, tmp_path):
        cfg, _, vocab = tiny_setup()
        ckpt = Checkpoint(cfg, vocab, init_params(cfg, vocab.n_words, vocab.n_tags, np.random.default_rng(0), np.float32))
        again = Checkpoint.from_bytes(ckpt.to_bytes())
        assert all(t.dtype == np.float32 for t in again.params.tensors())
        assert again.to_bytes() == ckpt.to_bytes()

    def test_loaded_scores_match(self, ckpt):
        again = Checkpoint.from_bytes(ckpt.to_bytes())
        s = make_sentence(4)
        a = forward(s, ckpt.params, ckpt.config, INFER)[-1].data
        b = forward(s, again.params, again.config, INFER)[-1].data
        assert np.array_equal(a, b)

    def test_bad_magic(self, ckpt):
        with pytest.raises(NotACheckpointError):
            Checkpoint.from_bytes(b"NOPE" + ckpt.to_bytes()[4:])

    def test_unsupported_version(self, ckpt):
        data = bytearray(ckpt.to_bytes())
        data[4:8] = (2).to_bytes(4, "little")
        with pytest.raises(UnsupportedVersionError):
            Checkpoint.from_bytes(bytes(data))

    @pytest.mark.parametrize("cut", [3, 10, 200, -1])
    def test_truncated(self, ckpt, cut):
        with pytest.raises(TruncatedCheckpointError):
            Checkpoint.from_bytes(ckpt.to_bytes()[:cut])

    def test_shape_mismatch(self, ckpt):
        bigger = Checkpoint(small_config(hidden_channels=7), ckpt.vocab, ckpt.params)
        with pytest.raises(ShapeMismatchError):
            Checkpoint.from_bytes(bigger.to_bytes())

    def test_trailing_bytes(self, ckpt):
        with pytest.raises(ShapeMismatchError):
            Checkpoint.from_bytes(ckpt.to_bytes() + b"\0")
