import numpy as np
import pytest

from atelier import composer as cp
from atelier import embedding as emb
from atelier import labanstr as lb
from atelier.optim import finite_difference_gradient, pack


@pytest.fixture
def vocab():
    return emb.default_vocab()


@pytest.fixture
def enc(vocab):
    return emb.init_encoder_params(vocab, dim=16, seed=0)


@pytest.fixture
def comp(enc):
    return cp.init_composer_params(enc, seed=0)


class TestParseTextural:
    def test_verb_noun(self, vocab):
        elements = cp.parse_textural_elements(["lift", "arm_l"], vocab)
        assert elements == [cp.TexturalElement("lift", "arm_l", None)]

    def test_adverb_attaches_to_nearest_open_element(self, vocab):
        elements = cp.parse_textural_elements(["lift", "arm_l", "slowly", "step", "leg_r"], vocab)
        assert elements == [
            cp.TexturalElement("lift", "arm_l", "slowly"),
            cp.TexturalElement("step", "leg_r", None),
        ]

    def test_lone_adverb_rejected(self, vocab):
        with pytest.raises(cp.TexturalError):
            cp.parse_textural_elements(["slowly"], vocab)

    def test_verb_without_noun_rejected(self, vocab):
        with pytest.raises(cp.TexturalError):
            cp.parse_textural_elements(["lift"], vocab)

    def test_noun_without_verb_rejected(self, vocab):
        with pytest.raises(cp.TexturalError):
            cp.parse_textural_elements(["arm_l"], vocab)

    def test_out_of_vocab(self, vocab):
        with pytest.raises(emb.OutOfVocabularyError):
            cp.parse_textural_elements(["moonwalk"], vocab)


class TestComposeAttributes:
    def test_categoricals_sum_to_one(self, vocab, enc, comp):
        dist = cp.compose_attributes(cp.TexturalElement("lift", "arm_l"), enc, comp)
        for name in ("direction", "level", "rotation", "flexion"):
            assert abs(float(getattr(dist, name).sum()) - 1.0) < 1e-9

    def test_adverb_duration_scale_fixed(self, vocab, enc, comp):
        slow = cp.compose_attributes(cp.TexturalElement("lift", "arm_l", "slowly"), enc, comp)
        quick = cp.compose_attributes(cp.TexturalElement("lift", "arm_l", "quickly"), enc, comp)
        plain = cp.compose_attributes(cp.TexturalElement("lift", "arm_l"), enc, comp)
        assert slow.duration_scale == 2.0
        assert quick.duration_scale == 0.5
        assert plain.duration_scale == 1.0

    def test_column_from_lexicon(self, vocab, enc, comp):
        dist = cp.compose_attributes(cp.TexturalElement("lift", "head"), enc, comp)
        assert dist.column is lb.Column.HEAD

    def test_trained_argmax_matches_corpus_assignment(self, vocab):
        enc = emb.init_encoder_params(vocab, dim=16, seed=42)
        comp = cp.init_composer_params(enc, seed=42)
        corpus = cp.procedural_corpus(vocab, seed=42)
        assignment = cp.procedural_assignment(vocab, seed=42)
        trained, trace = cp.train_composer(corpus, enc, comp, steps=250, step_size=20.0)
        assert trace[-1] > trace[0]

        hits = 0
        combos = [
            (verb.text, noun.text)
            for verb in vocab.by_role("verb")
            for noun in vocab.by_role("noun")
        ]
        for verb, noun in combos:
            dist = cp.compose_attributes(cp.TexturalElement(verb, noun), enc, trained)
            if int(np.argmax(dist.direction)) == assignment["direction"][verb]:
                hits += 1
        assert hits / len(combos) >= 0.9

        lift_arm = cp.compose_attributes(cp.TexturalElement("lift", "arm_l"), enc, trained)
        assert int(np.argmax(lift_arm.direction)) == assignment["direction"]["lift"]


class TestTrainComposer:
    def test_zero_steps_identity(self, vocab, enc, comp):
        corpus = cp.procedural_corpus(vocab, seed=1)[:6]
        trained, trace = cp.train_composer(corpus, enc, comp, steps=0, step_size=0.1)
        for family in cp.COMPOSE_FAMILIES:
            assert np.array_equal(trained.heads[family][0], comp.heads[family][0])
        assert len(trace) == 1

    def test_empty_corpus_rejected(self, vocab, enc, comp):
        with pytest.raises(ValueError):
            cp.train_composer([], enc, comp, steps=1, step_size=0.1)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_finite_differences(self, vocab, seed):
        enc = emb.init_encoder_params(vocab, dim=3, seed=seed)
        comp = cp.init_composer_params(enc, seed=seed)
        corpus = cp.procedural_corpus(vocab, seed=seed, items_per_pair=1)[:5]
        theta0 = pack(cp._composer_arrays(comp))
        rng = np.random.default_rng(seed)
        theta = theta0 + rng.uniform(-0.05, 0.05, theta0.shape)

        def objective(v):
            return cp.composer_objective(cp._with_composer_vector(comp, v), corpus, enc)

        analytic = cp.composer_gradient(cp._with_composer_vector(comp, theta), corpus, enc)
        numeric = finite_difference_gradient(objective, theta)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        assert np.linalg.norm(analytic - numeric) / denom < 1e-4

    def test_loglik_strictly_increases_first_steps(self, vocab):
        enc = emb.init_encoder_params(vocab, dim=16, seed=42)
        comp = cp.init_composer_params(enc, seed=42)
        corpus = cp.procedural_corpus(vocab, seed=42)
        _, trace = cp.train_composer(corpus, enc, comp, steps=10, step_size=1.0)
        for a, b in zip(trace[:10], trace[1:11]):
            assert b > a


class TestGenerate:
    def cond(self, enc, words=("lift", "arm_l")):
        return emb.encode_text(list(words), enc)

    def test_zero_length(self, enc, comp):
        result = cp.generate_score(self.cond(enc), None, 0.0, 0, comp, seed=1)
        assert result.score.tokens == ()
        assert not result.exhausted
        assert lb.validate_score(result.score).ok

    def test_deterministic_given_seed(self, enc, comp):
        a = cp.generate_score(self.cond(enc), None, 0.0, 6, comp, seed=9)
        b = cp.generate_score(self.cond(enc), None, 0.0, 6, comp, seed=9)
        assert lb.serialize_score(a.score) == lb.serialize_score(b.score)

    def test_guidance_weight_zero_ignores_guidance(self, enc, comp):
        rng = np.random.default_rng(3)
        g1, g2 = rng.normal(size=16), rng.normal(size=16)
        a = cp.generate_score(self.cond(enc), g1, 0.0, 5, comp, seed=4)
        b = cp.generate_score(self.cond(enc), g2, 0.0, 5, comp, seed=4)
        assert lb.serialize_score(a.score) == lb.serialize_score(b.score)

    def test_conditioning_linearity(self, enc, comp):
        rng = np.random.default_rng(5)
        c = rng.normal(size=16)
        g = rng.normal(size=16)
        w = 0.75
        a = cp.generate_score(c, g, w, 5, comp, seed=6)
        b = cp.generate_score(c + w * g, None, 0.0, 5, comp, seed=6)
        assert lb.serialize_score(a.score) == lb.serialize_score(b.score)

    @pytest.mark.parametrize("seed", range(12))
    def test_output_always_valid(self, enc, comp, seed):
        result = cp.generate_score(self.cond(enc), None, 0.0, 10, comp, seed=seed)
        assert lb.validate_score(result.score).ok

    def test_grid_exhaustion_flagged(self, enc):
        # A 1-start, 1-duration grid in a single column fills up after 8 columns
        # x 1 slot each; request more tokens than slots.
        rng = np.random.default_rng(0)
        d = 16
        heads = {
            name: (rng.uniform(-0.1, 0.1, (d, card)), np.zeros(card))
            for name, card in cp.HEAD_FAMILIES.items()
        }
        # Restrict the start grid to a single half-beat slot.
        heads["start"] = (rng.uniform(-0.1, 0.1, (d, 1)), np.zeros(1))
        tiny = cp.ComposerParams(heads=heads, history=np.zeros((d, d)))
        result = cp.generate_score(np.zeros(d), None, 0.0, 30, tiny, seed=2)
        assert result.exhausted
        assert len(result.score.tokens) < 30
        assert lb.validate_score(result.score).ok

    def test_length_negative_rejected(self, enc, comp):
        with pytest.raises(ValueError):
            cp.generate_score(self.cond(enc), None, 0.0, -1, comp, seed=0)


class TestComposerSnapshot:
    def test_round_trip(self, comp):
        text = cp.save_composer_params(comp)
        loaded = cp.load_composer_params(text)
        for family in cp.HEAD_FAMILIES:
            assert np.array_equal(loaded.heads[family][0], comp.heads[family][0])
            assert np.array_equal(loaded.heads[family][1], comp.heads[family][1])
        assert np.array_equal(loaded.history, comp.history)
        assert loaded.temperature == comp.temperature
