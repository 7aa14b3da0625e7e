import math

import numpy as np
import pytest
import torch

from vlmattack.engine import AttackBudget, OptimizerConfig, run_attack
from vlmattack.errors import ConfigError, UnsupportedSurrogateError
from vlmattack.image import Image
from vlmattack.objectives import (
    DetectorEvasion,
    EmbeddingDivergence,
    TargetedCaption,
    TargetSentence,
    detector_evasion,
    embedding_divergence,
    make_objective,
    targeted_caption_loglik,
    toxicity_evasion,
)
from vlmattack.surrogates import (
    IdentityEncoder,
    SurrogateEnsemble,
    TinyCaptioner,
    TinyDetector,
    TinyEncoder,
    UniformCaptioner,
    white_square_image,
)
from vlmattack.surrogates.base import DetectorAdapter, as_pixel_tensor, preprocess

from helpers import grid_image, max_rel_grad_error

EPS = 16 / 255
PROMPT = "describe this image"


class TestEmbeddingDivergence:
    def test_zero_at_anchor_with_finite_gradient(self):
        nat = grid_image(seed=1)
        ens = SurrogateEnsemble([TinyEncoder("e", seed=0)])
        value, grad = embedding_divergence(nat, nat, ens)
        assert value == 0.0
        assert np.isfinite(grad).all()

    def test_identity_encoder_matches_squared_norm(self):
        anchor = grid_image((6, 6, 3), seed=2)
        delta = np.random.default_rng(3).integers(-10, 11, anchor.shape) / 255
        x = np.clip(anchor + delta, 0, 1)
        ens = SurrogateEnsemble([IdentityEncoder("id")])
        value, _ = embedding_divergence(x, anchor, ens)
        assert abs(value - ((x - anchor) ** 2).sum()) < 1e-6

    def test_two_encoder_value_is_sum_of_singles(self):
        anchor = grid_image(seed=4)
        x = np.clip(anchor + 8 / 255, 0, 1)
        a, b = TinyEncoder("a", seed=1), TinyEncoder("b", seed=2)
        v_both, _ = embedding_divergence(x, anchor, SurrogateEnsemble([a, b]))
        v_a, _ = embedding_divergence(x, anchor, SurrogateEnsemble([a]))
        v_b, _ = embedding_divergence(x, anchor, SurrogateEnsemble([b]))
        assert abs(v_both - (v_a + v_b)) <= 1e-6 * max(1.0, abs(v_both))

    def test_gradient_matches_finite_differences(self):
        anchor = grid_image((10, 10, 3), seed=5)
        x = np.clip(anchor + 6 / 255, 0, 1)
        obj = EmbeddingDivergence(
            SurrogateEnsemble([TinyEncoder("a", seed=1), TinyEncoder("b", seed=2)]), anchor
        )
        assert max_rel_grad_error(obj.value_and_grad, x) < 1e-3

    def test_rejects_non_encoder_ensemble(self):
        with pytest.raises(UnsupportedSurrogateError):
            EmbeddingDivergence(SurrogateEnsemble([TinyDetector("d")]), grid_image())

    def test_weights_scale_terms(self):
        anchor = grid_image(seed=6)
        x = np.clip(anchor + 4 / 255, 0, 1)
        ens = SurrogateEnsemble([TinyEncoder("a", seed=1)])
        v1, _ = embedding_divergence(x, anchor, ens)
        v2, _ = embedding_divergence(x, anchor, ens, weights={"a": 2.0})
        assert abs(v2 - 2.0 * v1) < 1e-9

    def test_unknown_weight_id_rejected(self):
        ens = SurrogateEnsemble([TinyEncoder("a", seed=1)])
        with pytest.raises(ConfigError):
            EmbeddingDivergence(ens, grid_image(), weights={"zzz": 1.0})


class TestTargetedCaption:
    def test_uniform_captioner_analytic_loglik(self):
        cap = UniformCaptioner("u")
        ens = SurrogateEnsemble([cap])
        target = TargetSentence.build("cat dog", PROMPT, ens)
        value, grad = targeted_caption_loglik(grid_image(seed=7), target, ens)
        v = cap.vocab_size
        assert value == 2 * math.log(1.0 / v)
        assert np.isfinite(grad).all()

    def test_value_is_log_of_probability_product(self):
        # independent oracle: multiply teacher-forced probabilities directly
        vocab = ("<bos>", "<sep>", "cat", "dog", "on")
        cap = TinyCaptioner("t", seed=4, vocab=vocab, dim=8)
        ens = SurrogateEnsemble([cap])
        target = TargetSentence.build("cat dog", "on", ens)
        x = grid_image(seed=8)

        with torch.no_grad():
            feats = cap._vision_features(preprocess(as_pixel_tensor(x), cap))
            prefix = cap._wrap_prompt("on")
            ids = target.token_ids["t"]
            seq = prefix + ids
            product = 1.0
            for pos in range(len(prefix), len(seq)):
                probs = torch.softmax(cap._next_logits(feats, seq[pos - 1]), dim=0)
                product *= float(probs[seq[pos]])
        value, _ = targeted_caption_loglik(x, target, ens)
        assert abs(value - math.log(product)) < 1e-9

    def test_gradient_matches_finite_differences(self):
        cap = TinyCaptioner("t", seed=9)
        ens = SurrogateEnsemble([cap])
        target = TargetSentence.build("stone castle", PROMPT, ens)
        obj = TargetedCaption(ens, target)
        assert max_rel_grad_error(obj.value_and_grad, grid_image((12, 12, 3), seed=10)) < 1e-3

    def test_untokenizable_target_names_surrogate(self):
        ens = SurrogateEnsemble([TinyCaptioner("capt-a", seed=0)])
        with pytest.raises(ConfigError, match="capt-a"):
            TargetSentence.build("xylophone zebra", PROMPT, ens)

    def test_log_prob_count_matches_target_length(self):
        cap = TinyCaptioner("t", seed=3)
        ens = SurrogateEnsemble([cap])
        target = TargetSentence.build("a red castle", PROMPT, ens)
        lp = cap.caption_loglik(grid_image(seed=11), PROMPT, target.token_ids["t"])
        assert lp.shape == (3,)

    @pytest.mark.parametrize("probe_seed", [300, 301])
    def test_whitebox_attack_flips_greedy_first_token(self, probe_seed):
        rng = np.random.default_rng(probe_seed)
        nat = Image(np.round(rng.random((12, 12, 3)) * 255) / 255, id="c")
        cap = TinyCaptioner("cap", seed=11)
        ens = SurrogateEnsemble([cap])
        with torch.no_grad():
            feats = cap._vision_features(preprocess(as_pixel_tensor(nat.pixels), cap))
            logits = cap._next_logits(feats, cap._wrap_prompt(PROMPT)[-1])
            order = torch.argsort(logits, descending=True)
            natural_argmax, runner_up = int(order[0]), int(order[1])
        target = TargetSentence.build(
            cap.tokenizer.vocab[runner_up] + " castle", PROMPT, ens
        )
        obj = TargetedCaption(ens, target)
        res = run_attack(
            nat,
            obj,
            AttackBudget(EPS, 100, EPS / 10),
            OptimizerConfig(
                spectrum_samples=1, spectrum_sigma=0.0, spectrum_rho=0.0,
                rng_seed=probe_seed - 300,
            ),
        )
        decoded = cap.greedy_decode(res.adversarial.pixels, PROMPT, max_len=1)
        assert natural_argmax != runner_up
        assert decoded[0] == target.token_ids["cap"][0]


class _EmptyDetector(DetectorAdapter):
    def __init__(self):
        super().__init__("empty")

    def candidate_scores(self, inputs):
        return (
            torch.zeros(0, dtype=inputs.dtype) + inputs.sum() * 0.0,
            torch.zeros((0, 4), dtype=torch.float64),
        )


class _HalfScoreDetector(DetectorAdapter):
    def __init__(self):
        super().__init__("half")

    def candidate_scores(self, inputs):
        score = torch.sigmoid(inputs.mean() * 0.0)  # exactly 0.5, graph-connected
        return score.reshape(1), torch.tensor([[0.0, 0.0, 2.0, 2.0]], dtype=torch.float64)


class TestDetectorEvasion:
    def test_no_candidates_gives_zero(self):
        value, grad = detector_evasion(grid_image(seed=12), SurrogateEnsemble([_EmptyDetector()]))
        assert value == 0.0
        assert np.isfinite(grad).all()

    def test_single_candidate_bce_at_half(self):
        value, _ = detector_evasion(grid_image(seed=13), SurrogateEnsemble([_HalfScoreDetector()]))
        assert abs(value - 0.6931) < 1e-4

    def test_gradient_matches_finite_differences(self):
        nat = Image(white_square_image(), id="f")
        obj = DetectorEvasion(SurrogateEnsemble([TinyDetector("d")]), anchor=nat)
        assert max_rel_grad_error(obj.value_and_grad, nat.pixels) < 1e-3

    def test_minimize_direction_is_negated_for_engine(self):
        nat = Image(white_square_image(), id="f")
        obj = DetectorEvasion(SurrogateEnsemble([TinyDetector("d")]), anchor=nat)
        raw = sum(obj.per_surrogate_values(nat.pixels).values())
        assert raw > 0
        assert obj.ascent_value(nat.pixels) == -raw

    def test_attack_suppresses_all_detections(self):
        det = TinyDetector("d")
        nat = Image(white_square_image(), id="f")
        assert any(d.score_value > det.decision_threshold for d in det.detect(nat.pixels))
        obj = DetectorEvasion(SurrogateEnsemble([det]), anchor=nat)
        res = run_attack(
            nat, obj, AttackBudget(EPS, 80, EPS / 10),
            OptimizerConfig(spectrum_samples=2, rng_seed=0),
        )
        scores = [d.score_value for d in det.detect(res.adversarial.pixels)]
        assert all(s <= det.decision_threshold for s in scores)
        # ascent trace rose as BCE fell
        assert res.loss_trace[-1] > res.loss_trace[0]

    def test_rejects_non_detector_ensemble(self):
        with pytest.raises(UnsupportedSurrogateError):
            DetectorEvasion(SurrogateEnsemble([TinyEncoder("e")]))


class TestToxicityEvasion:
    def test_is_the_same_function(self):
        assert toxicity_evasion is embedding_divergence

    def test_matches_embedding_divergence_bit_exact(self):
        anchor = grid_image(seed=14)
        x = np.clip(anchor + 5 / 255, 0, 1)
        ens = SurrogateEnsemble([TinyEncoder("clipish", seed=8)])
        v1, g1 = toxicity_evasion(x, anchor, ens)
        v2, g2 = embedding_divergence(x, anchor, ens)
        assert v1 == v2
        assert np.array_equal(g1, g2)

    def test_zero_at_anchor(self):
        anchor = grid_image(seed=15)
        ens = SurrogateEnsemble([TinyEncoder("clipish", seed=8)])
        assert toxicity_evasion(anchor, anchor, ens)[0] == 0.0


class TestFactoryInvariants:
    def test_embedding_divergence_requires_anchor(self):
        ens = SurrogateEnsemble([TinyEncoder("e", seed=0)])
        with pytest.raises(ConfigError, match="anchor"):
            make_objective("embedding_divergence", ens)

    def test_targeted_caption_requires_target(self):
        ens = SurrogateEnsemble([TinyCaptioner("c", seed=0)])
        with pytest.raises(ConfigError, match="target"):
            make_objective("targeted_caption", ens)

    def test_unknown_kind(self):
        ens = SurrogateEnsemble([TinyEncoder("e", seed=0)])
        with pytest.raises(ConfigError, match="kind"):
            make_objective("minimize_ground_truth", ens)

    def test_directions(self):
        enc = SurrogateEnsemble([TinyEncoder("e", seed=0)])
        det = SurrogateEnsemble([TinyDetector("d")])
        anchor = grid_image(seed=16)
        assert make_objective("embedding_divergence", enc, anchor=anchor).direction == "maximize"
        assert make_objective("detector_evasion", det, anchor=Image(white_square_image())).direction == "minimize"


class TestCaptionAttackIsAlwaysTargeted:
    def test_no_untargeted_caption_operation_exists(self):
        # the caption objective maximizes a chosen target's likelihood;
        # nothing in the module minimizes a ground-truth caption
        import vlmattack.objectives as mod

        assert TargetedCaption.direction == "maximize"
        assert set(mod.OBJECTIVE_KINDS) == {
            "embedding_divergence", "targeted_caption", "detector_evasion",
        }
        untargeted = [n for n in dir(mod) if "untargeted" in n.lower()
                      or "ground_truth" in n.lower()]
        assert untargeted == []


class TestAdditivity:
    def test_every_objective_sums_over_surrogates(self):
        x = grid_image(seed=17)
        anchor = np.clip(x - 4 / 255, 0, 1)

        enc_a, enc_b = TinyEncoder("a", seed=1), TinyEncoder("b", seed=2)
        obj = EmbeddingDivergence(SurrogateEnsemble([enc_a, enc_b]), anchor)
        per = obj.per_surrogate_values(x)
        total, _ = obj.value_and_grad(x)
        assert abs(total - sum(per.values())) <= 1e-6 * max(1.0, abs(total))

        cap_a, cap_b = TinyCaptioner("ca", seed=3), TinyCaptioner("cb", seed=4)
        ens = SurrogateEnsemble([cap_a, cap_b])
        target = TargetSentence.build("stone castle", PROMPT, ens)
        obj2 = TargetedCaption(ens, target)
        per2 = obj2.per_surrogate_values(x)
        total2, _ = obj2.value_and_grad(x)
        assert abs(total2 - sum(per2.values())) <= 1e-6 * max(1.0, abs(total2))

        natd = Image(white_square_image(), id="f")
        det_ens = SurrogateEnsemble([TinyDetector("da"), TinyDetector("db", gain=80.0, bias=-58.0)])
        obj3 = DetectorEvasion(det_ens, anchor=natd)
        per3 = obj3.per_surrogate_values(natd.pixels)
        total3, _ = obj3.value_and_grad(natd.pixels)
        assert abs(total3 - sum(per3.values())) <= 1e-6 * max(1.0, abs(total3))
