import pytest
import torch

from emoalign.embedding import (
    EncoderConfig,
    TransformerEncoder,
    Vocabulary,
    parameter_checksum,
    tokenize,
)
from emoalign.errors import LengthError


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.build(["joy fear hope !", "the quick brown fox jumps", "punctuation, yes."])


@pytest.fixture(scope="module")
def encoder(vocab):
    return TransformerEncoder(vocab, EncoderConfig(vocab_size=len(vocab), hidden_size=8,
                                                   n_layers=2, n_heads=2, max_len=16, seed=3))


class TestTokenizer:
    def test_lowercase_and_punctuation_split(self):
        assert tokenize("Joy!") == ["joy", "!"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_runs(self):
        assert tokenize("a  b\tc\nd") == ["a", "b", "c", "d"]


class TestVocabulary:
    def test_encode_prepends_marker(self, vocab):
        ids = vocab.encode("Joy!")
        assert ids[0] == vocab.mark_id
        assert len(ids) == 3
        assert vocab.oov_id not in ids

    def test_empty_text_is_marker_only(self, vocab):
        assert vocab.encode("") == [vocab.mark_id]

    def test_unknown_maps_to_oov(self, vocab):
        assert vocab.encode("zebra") == [vocab.mark_id, vocab.oov_id]

    def test_build_order_deterministic(self):
        a = Vocabulary.build(["one two", "two three"])
        b = Vocabulary.build(["one two", "two three"])
        assert a.tokens == b.tokens
        assert a.tokens[3:] == ["one", "two", "three"]


class TestEncoderConfig:
    def test_heads_must_divide_hidden(self):
        with pytest.raises(ValueError):
            EncoderConfig(vocab_size=10, hidden_size=10, n_heads=4)

    def test_positive_fields(self):
        with pytest.raises(ValueError):
            EncoderConfig(vocab_size=10, n_layers=0)


class TestEncodeText:
    def test_shape_contract(self, encoder):
        states = encoder.encode_text("the quick brown fox")  # 4 tokens + marker
        assert states.states.shape == (5, 8)
        assert states.mask.all()

    def test_deterministic(self, encoder):
        first = encoder.encode_text("joy fear hope")
        second = encoder.encode_text("joy fear hope")
        assert torch.equal(first.states, second.states)

    def test_length_error(self, encoder):
        with pytest.raises(LengthError):
            encoder.encode_text("joy " * 16)  # 16 tokens + marker > max_len=16

    def test_mask_invariance_under_padding(self, encoder):
        text = "the quick brown"
        alone = encoder.encode_text(text)
        ids, mask = encoder.batch_ids([text, "joy fear hope the quick brown fox"])
        padded_states = encoder(ids, mask)
        n = alone.states.shape[0]
        assert torch.allclose(alone.states, padded_states[0, :n], atol=1e-6)


class TestEncodeLabel:
    def test_vector_shape(self, encoder):
        assert encoder.encode_label("joy").shape == (8,)

    def test_normalization_invariance(self, encoder):
        assert torch.equal(encoder.encode_label("joy"), encoder.encode_label("  Joy "))

    def test_is_first_position_state(self, encoder):
        full = encoder.encode_text("joy")
        assert torch.equal(encoder.encode_label("joy"), full.states[0])


class TestDeterminismAndFreeze:
    def test_same_seed_bit_identical(self, vocab):
        config = EncoderConfig(vocab_size=len(vocab), hidden_size=8, n_layers=1, n_heads=2,
                               max_len=16, seed=9)
        assert parameter_checksum(TransformerEncoder(vocab, config)) == parameter_checksum(
            TransformerEncoder(vocab, config)
        )

    def test_different_seed_differs(self, vocab):
        base = dict(vocab_size=len(vocab), hidden_size=8, n_layers=1, n_heads=2, max_len=16)
        a = TransformerEncoder(vocab, EncoderConfig(seed=1, **base))
        b = TransformerEncoder(vocab, EncoderConfig(seed=2, **base))
        assert parameter_checksum(a) != parameter_checksum(b)

    def test_frozen_copy_snapshot(self, encoder):
        snapshot = encoder.frozen_copy()
        assert parameter_checksum(snapshot) == parameter_checksum(encoder)
        assert all(not p.requires_grad for p in snapshot.parameters())
        # output of the snapshot ignores later mutation of the original
        before = snapshot.encode_label("joy")
        with torch.no_grad():
            encoder.token_emb.weight.add_(0.5)
        after = snapshot.encode_label("joy")
        assert torch.equal(before, after)
        with torch.no_grad():  # restore the module-scoped encoder
            encoder.token_emb.weight.sub_(0.5)
