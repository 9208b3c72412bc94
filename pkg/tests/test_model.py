"""Encoder/decoder contracts, joint loss, and whole-model gradients."""

import numpy as np
import pytest

from avsr.decoder import TransformerDecoder
from avsr.encoder import ConformerEncoder
from avsr.model import Recognizer, joint_loss
from avsr.tensor import Graph, Tensor, backward, layernorm, log_softmax

from conftest import central_diff, max_rel_err, tiny_setup

DIM = 8


class TestEncoder:
    def make(self, rng, positional=True):
        return ConformerEncoder(rng, dim=DIM, ff_dim=12, heads=2, kernel=3,
                                layers=2, positional=positional)

    @pytest.mark.parametrize("t", [1, 4, 9])
    def test_length_preserving(self, rng, t):
        enc = self.make(rng)
        assert enc(Tensor(rng.normal(size=(t, DIM)))).shape == (t, DIM)

    def test_zero_weights_reduce_to_layernorm(self, rng):
        enc = ConformerEncoder(rng, DIM, 12, 2, 3, layers=1, positional=False)
        block = enc.blocks[0]
        for name, p in block.params("b").items():
            if "norm" not in name:
                p.data[...] = 0.0
        x = rng.normal(size=(5, DIM))
        got = enc(Tensor(x)).data
        want = layernorm(Tensor(x), axis=-1).data
        assert np.allclose(got, want, atol=1e-12)

    def test_heads_must_divide_dim(self, rng):
        with pytest.raises(ValueError, match="divide"):
            ConformerEncoder(rng, dim=DIM, ff_dim=12, heads=3, kernel=3, layers=1)

    def test_block_gradients_match_fd(self, rng):
        enc = ConformerEncoder(rng, DIM, 12, 2, 3, layers=1)
        x = rng.normal(size=(4, DIM))
        w = rng.normal(size=(4, DIM))

        def loss():
            return float((enc(Tensor(x)).data * w).sum())

        with Graph():
            out = (enc(Tensor(x)) * Tensor(w)).sum()
        backward(out)
        for name, p in enc.params("enc").items():
            assert max_rel_err(p.grad, central_diff(loss, p.data)) < 1e-4, name


class TestDecoder:
    def make(self, rng, vocab_size=6):
        return TransformerDecoder(rng, vocab_size, dim=DIM, ff_dim=12, heads=2, layers=2)

    def test_causality_exact(self, rng):
        dec = self.make(rng)
        memory = Tensor(rng.normal(size=(5, DIM)))
        tokens = [1, 3, 4, 5, 3]
        base = dec.forward(memory, tokens).data
        for flip_pos in range(1, len(tokens)):
            altered = list(tokens)
            altered[flip_pos] = 2 if altered[flip_pos] != 2 else 4
            out = dec.forward(memory, altered).data
            assert np.array_equal(out[:flip_pos], base[:flip_pos])
            assert not np.array_equal(out[flip_pos:], base[flip_pos:])

    def test_empty_input_rejected(self, rng):
        dec = self.make(rng)
        with pytest.raises(ValueError, match="at least one"):
            dec.forward(Tensor(rng.normal(size=(3, DIM))), [])

    def test_gradients_match_fd(self, rng):
        dec = self.make(rng)
        memory = Tensor(rng.normal(size=(3, DIM)))
        targets = np.array([3, 4, 2])

        def forward():
            lp = log_softmax(dec.forward(memory, [1, 3, 4]), axis=-1)
            return lp

        def loss():
            lp = forward().data
            return float(-lp[np.arange(3), targets].sum())

        from avsr.tensor import pick, scale
        with Graph():
            out = scale(pick(forward(), targets).sum(), -1.0)
        backward(out)
        for name, p in dec.params("dec").items():
            assert max_rel_err(p.grad, central_diff(loss, p.data)) < 1e-4, name


class TestAttentionLoss:
    def test_uniform_distribution_entropy(self):
        cfg, vocab, alphabet, model, sample = tiny_setup()
        # zero output projection -> logits all zero -> uniform over the vocab
        model.decoder.proj.weight.data[...] = 0.0
        model.decoder.proj.bias.data[...] = 0.0
        target = vocab.encode(sample.transcript)
        memory = model.encode(sample)
        loss = model.attention_loss(memory, target)
        want = (len(target) + 1) * np.log(vocab.size)
        assert loss.item() == pytest.approx(want, rel=1e-12)

    def test_empty_target_rejected(self):
        cfg, vocab, alphabet, model, sample = tiny_setup()
        with pytest.raises(ValueError, match="nonempty"):
            model.attention_loss(model.encode(sample), [])


class TestJointLoss:
    def test_endpoints_and_convexity(self, rng):
        att = Tensor(3.0)
        ctc = Tensor(7.0)
        assert joint_loss(att, ctc, 1.0).item() == 3.0
        assert joint_loss(att, ctc, 0.0).item() == 7.0
        for w in np.linspace(0.0, 1.0, 7):
            val = joint_loss(att, ctc, float(w)).item()
            assert 3.0 - 1e-12 <= val <= 7.0 + 1e-12

    def test_weight_validated(self):
        with pytest.raises(ValueError, match="weight"):
            joint_loss(Tensor(1.0), Tensor(1.0), 1.5)


class TestCheckpointRoundTrip:
    def test_values_exact_after_reload(self, tmp_path):
        from avsr.model import build_model, load_checkpoint, save_checkpoint
        cfg, vocab, alphabet, model, sample = tiny_setup(seed=13)
        path = tmp_path / "ck.json"
        save_checkpoint(path, cfg, model.params())
        cfg2, weights = load_checkpoint(path)
        rebuilt = build_model(cfg2, vocab, weights)
        for name, p in model.params().items():
            assert np.array_equal(p.data, rebuilt.params()[name].data), name
        before = model.encode(sample).data
        after = rebuilt.encode(sample).data
        assert np.array_equal(before, after)

    def test_mismatched_weights_rejected(self, tmp_path):
        from avsr.model import build_model, load_checkpoint, save_checkpoint
        cfg, vocab, alphabet, model, sample = tiny_setup(seed=13)
        path = tmp_path / "ck.json"
        save_checkpoint(path, cfg, model.params())
        _, weights = load_checkpoint(path)
        weights.pop(next(iter(weights)))
        with pytest.raises(ValueError, match="do not match"):
            build_model(cfg, vocab, weights)

    def test_non_checkpoint_rejected(self, tmp_path):
        from avsr.model import load_checkpoint
        bad = tmp_path / "x.json"
        bad.write_text("{}")
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(bad)


class TestPaperScaleConfig:
    def test_large_settings_construct_and_run(self):
        # reference-scale hyperparameters stay expressible; one forward pass
        from avsr.config import ExperimentConfig
        from avsr.data import build_alphabet, generate_sample, substream
        from avsr.model import Recognizer
        from avsr.vocab import Vocab
        cfg = ExperimentConfig(d1=512, d2=256, enc_layers=1, enc_ff=2048,
                               enc_heads=8, enc_kernel=31, dec_layers=1,
                               dec_ff=2048, dec_heads=8, lr=1e-4, batch_size=32)
        alphabet = build_alphabet(cfg.seed, cfg.num_phonemes, cfg.num_visemes,
                                  cfg.audio_dim, cfg.visual_dim)
        model = Recognizer(cfg, Vocab(alphabet.phonemes))
        sample = generate_sample(alphabet, (3, 4), substream(0, "big", 0))
        fused, mask = model.features(sample)
        assert fused.shape == (len(sample.transcript), 512)
        assert mask.shape == (len(sample.transcript), 512)


class TestRecognizerModes:
    @pytest.mark.parametrize("mode", ["asr", "vsr", "avsr_baseline", "avsr_enhanced"])
    def test_loss_finite_and_mask_only_in_enhanced(self, mode):
        cfg, vocab, alphabet, model, sample = tiny_setup(mode=mode)
        fused, mask = model.features(sample)
        assert fused.shape == (len(sample.transcript), cfg.d1)
        if mode == "avsr_enhanced":
            assert mask is not None and (mask > 0).all() and (mask < 1).all()
        else:
            assert mask is None
        with Graph():
            loss = model.loss(sample)
        assert np.isfinite(loss.item())

    def test_vsr_ignores_audio(self):
        cfg, vocab, alphabet, model, sample = tiny_setup(mode="vsr")
        before = model.encode(sample).data
        noisy = sample
        noisy.audio = noisy.audio + 100.0
        after = model.encode(noisy).data
        assert np.array_equal(before, after)

    def test_param_names_disjoint_and_stable(self):
        cfg, vocab, alphabet, model, sample = tiny_setup()
        names = list(model.params())
        assert len(names) == len(set(names))
        again = Recognizer(cfg, vocab)
        assert list(again.params()) == names

    def test_full_model_gradients_match_fd(self):
        cfg, vocab, alphabet, model, sample = tiny_setup()

        def loss_value():
            return model.loss(sample).item()

        with Graph():
            loss = model.loss(sample)
        backward(loss)
        rng = np.random.default_rng(5)
        for name, p in model.params().items():
            flat = p.data.reshape(-1)
            gflat = p.grad.reshape(-1)
            take = rng.choice(flat.size, size=min(4, flat.size), replace=False)
            for idx in take:
                old = flat[idx]
                flat[idx] = old + 1e-5
                fp = loss_value()
                flat[idx] = old - 1e-5
                fm = loss_value()
                flat[idx] = old
                numeric = (fp - fm) / 2e-5
                assert max_rel_err(np.array([gflat[idx]]), np.array([numeric])) < 1e-4, name

    def test_every_parameter_reached_by_gradient(self):
        cfg, vocab, alphabet, model, sample = tiny_setup()
        with Graph():
            loss = model.loss(sample)
        backward(loss)
        for name, p in model.params().items():
            assert np.abs(p.grad).max() > 0.0, f"{name} got no gradient"
