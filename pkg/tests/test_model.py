import numpy as np
import pytest

from igsc.errors import ShapeError, UsageError
from igsc.model import (
    ClassifierForm,
    HypernetParams,
    LinearClassifier,
    NonlinearClassifier,
    compatibility,
    generate_classifier,
    normalize_scores,
    pack,
    packed_size,
    predict_gzsl,
    predict_zsl,
    score_label,
    score_matrix,
    unpack,
)


def random_params(rng, v, h1, h2, form, hidden_activation="tanh"):
    p = packed_size(form)
    return HypernetParams(
        W1=rng.uniform(-1, 1, (h1, v)),
        b1=rng.uniform(-1, 1, h1),
        W2=rng.uniform(-1, 1, (h2, h1)),
        b2=rng.uniform(-1, 1, h2),
        Wout=rng.uniform(-1, 1, (p, h2)),
        bout=rng.uniform(-1, 1, p),
        form=form,
        hidden_activation=hidden_activation,
    )


class TestPackedSize:
    def test_linear(self):
        assert packed_size(ClassifierForm("linear", d=3)) == 4

    def test_nonlinear_small(self):
        assert packed_size(ClassifierForm("nonlinear", d=3, h=2)) == 11

    def test_nonlinear_reference_dims(self):
        # counted independently: 30*300 weights + 30 + 30 biases/weights + 1
        assert 30 * 300 + 30 + 30 + 1 == 9061
        assert packed_size(ClassifierForm("nonlinear", d=300, h=30)) == 9061


class TestUnpack:
    def test_linear_layout(self):
        clf = unpack([1.0, 2.0, 3.0], ClassifierForm("linear", d=2))
        assert isinstance(clf, LinearClassifier)
        assert np.array_equal(clf.weight, [1.0, 2.0])
        assert clf.bias == 3.0

    def test_nonlinear_layout(self):
        clf = unpack([4.0, 5.0, 6.0, 7.0, 8.0], ClassifierForm("nonlinear", d=2, h=1))
        assert isinstance(clf, NonlinearClassifier)
        assert np.array_equal(clf.hidden_weight, [[4.0, 5.0]])
        assert np.array_equal(clf.hidden_bias, [6.0])
        assert np.array_equal(clf.output_weight, [7.0])
        assert clf.output_bias == 8.0

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        flat = rng.uniform(-1, 1, 11)
        form = ClassifierForm("nonlinear", d=3, h=2)
        assert np.array_equal(pack(unpack(flat, form)), flat)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            unpack([1.0, 2.0], ClassifierForm("linear", d=2))


class TestGenerateClassifier:
    def test_zero_weights_yield_bout(self):
        form = ClassifierForm("linear", d=2)
        params = HypernetParams(
            W1=np.zeros((3, 4)), b1=np.zeros(3),
            W2=np.zeros((3, 3)), b2=np.zeros(3),
            Wout=np.zeros((3, 3)), bout=np.array([1.0, -2.0, 0.5]),
            form=form,
        )
        for image in (np.zeros(4), np.ones(4), np.full(4, -3.0)):
            clf = generate_classifier(image, params)
            assert np.array_equal(pack(clf), params.bout)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        params = random_params(rng, 4, 3, 3, ClassifierForm("nonlinear", d=2, h=2))
        image = rng.uniform(-1, 1, 4)
        a = pack(generate_classifier(image, params))
        b = pack(generate_classifier(image.copy(), params))
        assert np.array_equal(a, b)

    def test_matches_three_affine_composition_oracle(self):
        # oracle: explicit loop-based affine/tanh chain, scalar by scalar
        rng = np.random.default_rng(6)
        form = ClassifierForm("linear", d=2)
        params = random_params(rng, 4, 3, 3, form)
        image = rng.uniform(-1, 1, 4)

        def loop_affine(x, w, b):
            return np.array(
                [sum(w[i, j] * x[j] for j in range(len(x))) + b[i] for i in range(w.shape[0])]
            )

        z1 = np.tanh(loop_affine(image, params.W1, params.b1))
        z2 = np.tanh(loop_affine(z1, params.W2, params.b2))
        expected = loop_affine(z2, params.Wout, params.bout)
        assert np.allclose(pack(generate_classifier(image, params)), expected, atol=1e-12)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(1)
        params = random_params(rng, 4, 3, 3, ClassifierForm("linear", d=2))
        with pytest.raises(ShapeError):
            generate_classifier(np.zeros(5), params)


class TestScoreLabel:
    def test_linear_trivial(self):
        clf = LinearClassifier(weight=np.array([1.0, 0.0]), bias=0.0)
        assert score_label(clf, [0.5, 9.0]) == 0.5

    def test_zero_hidden_map_ignores_prototype(self):
        clf = NonlinearClassifier(
            hidden_weight=np.zeros((2, 3)),
            hidden_bias=np.array([0.3, -0.7]),
            output_weight=np.array([2.0, 1.0]),
            output_bias=0.25,
        )
        expected = float(clf.output_weight @ np.tanh(clf.hidden_bias) + 0.25)
        for proto in (np.zeros(3), np.ones(3), np.array([4.0, -1.0, 2.0])):
            assert score_label(clf, proto) == pytest.approx(expected, abs=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(12)
        form = ClassifierForm("nonlinear", d=3, h=2)
        flat = rng.uniform(-1, 1, packed_size(form))
        clf = unpack(flat, form)
        proto = rng.uniform(-1, 1, 3)
        # oracle: direct scalar evaluation of the two-layer formula
        score = 0.0
        for k in range(2):
            pre = sum(clf.hidden_weight[k, j] * proto[j] for j in range(3)) + clf.hidden_bias[k]
            score += clf.output_weight[k] * np.tanh(pre)
        score += clf.output_bias
        assert score_label(clf, proto) == pytest.approx(score, abs=1e-12)

    def test_dimension_mismatch(self):
        clf = LinearClassifier(weight=np.array([1.0, 2.0]), bias=0.0)
        with pytest.raises(ShapeError):
            score_label(clf, [1.0, 2.0, 3.0])


class TestCompatibility:
    def test_equal_scores_give_uniform(self):
        # zero generator weights, bias-only classifier scores every class alike
        form = ClassifierForm("linear", d=3)
        params = HypernetParams(
            W1=np.zeros((2, 4)), b1=np.zeros(2),
            W2=np.zeros((2, 2)), b2=np.zeros(2),
            Wout=np.zeros((4, 2)), bout=np.array([0.0, 0.0, 0.0, 1.7]),
            form=form,
        )
        protos = np.random.default_rng(0).uniform(-1, 1, (4, 3))
        out = compatibility(np.ones(4), protos, params, mode="softmax")
        assert np.allclose(out, [0.25] * 4, atol=1e-12)

    def test_sigmoid_of_zero_score(self):
        form = ClassifierForm("linear", d=2)
        params = HypernetParams(
            W1=np.zeros((2, 3)), b1=np.zeros(2),
            W2=np.zeros((2, 2)), b2=np.zeros(2),
            Wout=np.zeros((3, 2)), bout=np.zeros(3),
            form=form,
        )
        out = compatibility(np.ones(3), np.ones((5, 2)), params, mode="sigmoid")
        assert np.allclose(out, 0.5)

    def test_softmax_of_fixed_scores(self):
        out = normalize_scores(np.array([1.0, 2.0, 3.0]), "softmax")
        assert np.allclose(out, [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_unknown_mode(self):
        with pytest.raises(UsageError):
            normalize_scores(np.zeros(3), "linear")


class FixedScores:
    """Stub generator used by prediction tests: image[0] indexes a row of a
    preset score table."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def score_matrix(self, features, prototypes):
        rows = np.asarray(features)[:, 0].astype(int)
        return self.table[rows]


class TestPredict:
    def make_params(self, rng, v=4, d=3):
        return random_params(rng, v, 3, 3, ClassifierForm("linear", d=d))

    def test_single_candidate(self):
        rng = np.random.default_rng(3)
        params = self.make_params(rng)
        protos = rng.uniform(-1, 1, (4, 3))
        image = rng.uniform(-1, 1, 4)
        assert predict_zsl(image, protos, [2], params) == 2

    def test_picks_highest_score(self):
        rng = np.random.default_rng(4)
        params = self.make_params(rng)
        protos = rng.uniform(-1, 1, (2, 3))
        image = rng.uniform(-1, 1, 4)
        scores = score_matrix(image, protos, params)[0]
        assert predict_zsl(image, protos, [0, 1], params) == int(np.argmax(scores))

    def test_empty_candidates(self):
        rng = np.random.default_rng(5)
        params = self.make_params(rng)
        with pytest.raises(UsageError):
            predict_zsl(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, (2, 3)), [], params)

    def test_gzsl_zero_gamma_is_plain_argmax(self):
        rng = np.random.default_rng(6)
        params = self.make_params(rng)
        protos = rng.uniform(-1, 1, (5, 3))
        flags = np.array([True, True, True, False, False])
        for _ in range(20):
            image = rng.uniform(-1, 1, 4)
            assert predict_gzsl(image, protos, flags, 0.0, params) == predict_zsl(
                image, protos, range(5), params
            )

    def test_gzsl_huge_gamma_forces_unseen(self):
        rng = np.random.default_rng(7)
        params = self.make_params(rng)
        protos = rng.uniform(-1, 1, (5, 3))
        flags = np.array([True, True, True, False, False])
        for _ in range(20):
            image = rng.uniform(-1, 1, 4)
            scores = score_matrix(image, protos, params)[0]
            gamma = 10 * (scores.max() - scores.min()) + 1.0
            assert predict_gzsl(image, protos, flags, gamma, params) in (3, 4)

    def test_gzsl_penalty_arithmetic(self):
        # seen score 1.0, unseen score 0.8, penalty 0.3: unseen wins
        stub = FixedScores([[1.0, 0.8]])
        scores = stub.score_matrix(np.array([[0.0]]), None)[0]
        flags = np.array([True, False])
        adjusted = scores - 0.3 * flags
        assert int(np.argmax(adjusted)) == 1


class TestModelInvariants:
    def test_argmax_equivalence_with_compatibility(self):
        rng = np.random.default_rng(20)
        for _ in range(25):
            v, d, c = rng.integers(2, 6), rng.integers(1, 5), rng.integers(2, 6)
            form = ClassifierForm("nonlinear", d=int(d), h=int(rng.integers(1, 4)))
            params = random_params(rng, int(v), 3, 3, form)
            protos = rng.uniform(-1, 1, (int(c), int(d)))
            image = rng.uniform(-1, 1, int(v))
            compat = compatibility(image, protos, params, mode="softmax")
            assert predict_zsl(image, protos, range(int(c)), params) == int(np.argmax(compat))

    def test_prototype_permutation_permutes_scores(self):
        rng = np.random.default_rng(21)
        form = ClassifierForm("nonlinear", d=3, h=2)
        params = random_params(rng, 4, 3, 3, form)
        protos = rng.uniform(-1, 1, (6, 3))
        image = rng.uniform(-1, 1, 4)
        perm = rng.permutation(6)
        base = score_matrix(image, protos, params)[0]
        permuted = score_matrix(image, protos[perm], params)[0]
        assert np.allclose(permuted, base[perm], atol=1e-12)

    def test_generated_classifier_always_unpacks(self):
        rng = np.random.default_rng(22)
        for _ in range(30):
            v = int(rng.integers(1, 6))
            h1 = int(rng.integers(1, 5))
            h2 = int(rng.integers(1, 5))
            d = int(rng.integers(1, 5))
            variant = rng.choice(["linear", "nonlinear"])
            h = int(rng.integers(1, 4))
            form = ClassifierForm(str(variant), d=d, h=h)
            params = random_params(rng, v, h1, h2, form)
            clf = generate_classifier(rng.uniform(-1, 1, v), params)
            assert pack(clf).shape == (packed_size(form),)

    def test_monotone_switch_seen_to_unseen_only(self):
        rng = np.random.default_rng(23)
        form = ClassifierForm("linear", d=3)
        params = random_params(rng, 4, 3, 3, form)
        protos = rng.uniform(-1, 1, (6, 3))
        flags = np.array([True, True, True, True, False, False])
        for _ in range(10):
            image = rng.uniform(-1, 1, 4)
            was_unseen = False
            for gamma in np.linspace(0.0, 5.0, 60):
                pred = predict_gzsl(image, protos, flags, float(gamma), params)
                is_unseen = not flags[pred]
                if was_unseen:
                    assert is_unseen, "prediction moved back from unseen to seen as gamma grew"
                was_unseen = is_unseen
