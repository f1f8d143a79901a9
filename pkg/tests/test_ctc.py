import math
from itertools import product

import numpy as np
import pytest

from ctcfuse import ctc
from ctcfuse.ctc import CtcPosterior, collapse, ctc_loss, greedy_1best, prefix_beam_nbest
from ctcfuse.tensor import Tensor

from oracles import exhaustive_ctc_loss, exhaustive_ctc_scores, random_posterior

BLANK = 0
A, B, C = 1, 2, 3


def uniform_posterior(t_frames: int, vocab: int) -> CtcPosterior:
    lp = np.full((t_frames, vocab), -np.log(vocab))
    return CtcPosterior(lp, BLANK)


class TestCollapse:
    def test_merge_then_drop(self):
        assert collapse([A, A, BLANK, B], BLANK) == (A, B)

    def test_all_blank(self):
        assert collapse([BLANK, BLANK], BLANK) == ()

    def test_blank_separates_repeats(self):
        assert collapse([A, BLANK, A], BLANK) == (A, A)

    def test_empty(self):
        assert collapse([], BLANK) == ()


class TestCtcLoss:
    def test_two_frame_uniform(self):
        # paths aa, a-, -a out of {a,-}^2, each 0.25 -> P=0.75
        post = uniform_posterior(2, 2)
        res = ctc_loss(post, (1,))
        assert res.reachable
        assert np.isclose(res.loss, -math.log(0.75), rtol=1e-12)

    def test_empty_target_is_all_blank_path(self):
        rng = np.random.default_rng(0)
        lp = random_posterior(rng, 4, 3)
        res = ctc_loss(CtcPosterior(lp, BLANK), ())
        assert np.isclose(res.loss, -lp[:, BLANK].sum(), rtol=1e-12)

    def test_repeat_needs_separator(self):
        post = uniform_posterior(2, 2)
        res = ctc_loss(post, (1, 1))
        assert not res.reachable
        assert res.loss == math.inf
        assert np.all(res.grad == 0.0)

    def test_blank_in_target_rejected(self):
        with pytest.raises(ValueError, match="blank"):
            ctc_loss(uniform_posterior(3, 2), (BLANK,))

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_exhaustive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        t_frames = int(rng.integers(1, 7))
        vocab = int(rng.integers(2, 5))
        tgt_len = int(rng.integers(0, 4))
        target = tuple(int(x) for x in rng.integers(1, vocab, size=tgt_len))
        lp = random_posterior(rng, t_frames, vocab)
        ours = ctc_loss(CtcPosterior(lp, BLANK), target)
        ref = exhaustive_ctc_loss(lp, target, BLANK)
        if math.isinf(ref):
            assert not ours.reachable
        else:
            assert np.isclose(ours.loss, ref, rtol=1e-9), (ours.loss, ref)

    def test_total_probability_conserved(self):
        # collapse partitions paths: summing exp(-loss) over every possible
        # target of length <= T must give exactly 1
        rng = np.random.default_rng(42)
        for t_frames, vocab in [(2, 2), (3, 3), (4, 3)]:
            lp = random_posterior(rng, t_frames, vocab)
            post = CtcPosterior(lp, BLANK)
            total = 0.0
            for length in range(t_frames + 1):
                for target in product(range(1, vocab), repeat=length):
                    res = ctc_loss(post, target)
                    if res.reachable:
                        total += math.exp(-res.loss)
            assert abs(total - 1.0) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        lp = random_posterior(rng, 5, 3)
        target = (1, 2)
        res = ctc_loss(CtcPosterior(lp, BLANK), target)
        step = 1e-6
        for t in range(lp.shape[0]):
            for k in range(lp.shape[1]):
                up = lp.copy()
                up[t, k] += step
                down = lp.copy()
                down[t, k] -= step
                num = (
                    ctc_loss(CtcPosterior(up, BLANK), target).loss
                    - ctc_loss(CtcPosterior(down, BLANK), target).loss
                ) / (2 * step)
                denom = max(abs(num), abs(res.grad[t, k]), 1e-6)
                assert abs(num - res.grad[t, k]) / denom < 1e-5

    def test_gradient_rows_sum_to_minus_one(self):
        rng = np.random.default_rng(7)
        lp = random_posterior(rng, 6, 4)
        res = ctc_loss(CtcPosterior(lp, BLANK), (1, 3))
        np.testing.assert_allclose(res.grad.sum(axis=1), -1.0, rtol=1e-10)

    def test_autodiff_wrapper_backpropagates(self):
        rng = np.random.default_rng(8)
        lp = Tensor(random_posterior(rng, 4, 3), requires_grad=True)
        loss, res = ctc.ctc_loss_op(lp, (1,), BLANK)
        (loss * 2.0).backward()
        np.testing.assert_allclose(lp.grad, 2.0 * res.grad, rtol=1e-12)

    def test_autodiff_wrapper_rejects_unreachable(self):
        lp = Tensor(uniform_posterior(2, 2).log_probs, requires_grad=True)
        with pytest.raises(ValueError, match="unreachable"):
            ctc.ctc_loss_op(lp, (1, 1), BLANK)


class TestGreedy:
    @staticmethod
    def peaked(path, vocab):
        probs = np.full((len(path), vocab), 0.01 / (vocab - 1))
        for t, k in enumerate(path):
            probs[t, k] = 0.99
        return CtcPosterior(np.log(probs), BLANK)

    def test_composition_with_collapse(self):
        assert greedy_1best(self.peaked([A, A, BLANK, B], 3)) == (A, B)

    def test_blank_everywhere(self):
        assert greedy_1best(self.peaked([BLANK, BLANK, BLANK], 3)) == ()

    def test_tie_breaks_to_lowest_id(self):
        lp = np.full((1, 3), -np.log(3.0))
        assert greedy_1best(CtcPosterior(lp, BLANK)) == ()  # blank is id 0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_two_step_oracle(self, seed):
        rng = np.random.default_rng(seed)
        lp = random_posterior(rng, 4, 3)
        post = CtcPosterior(lp, BLANK)
        path = [int(np.argmax(row)) for row in lp]
        expected = []
        prev = None
        for tok in path:
            if tok != prev and tok != BLANK:
                expected.append(tok)
            prev = tok
        assert greedy_1best(post) == tuple(expected)


class TestPrefixBeam:
    @pytest.mark.parametrize("seed", range(15))
    def test_unbounded_beam_equals_exhaustive(self, seed):
        rng = np.random.default_rng(seed)
        t_frames = int(rng.integers(1, 4))
        vocab = int(rng.integers(2, 4))
        lp = random_posterior(rng, t_frames, vocab)
        nbest = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=None, n=50)
        ref = exhaustive_ctc_scores(lp, BLANK)
        ranked = sorted(ref.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))
        assert len(nbest) == len(ranked)
        for (seq, score), (ref_seq, ref_p) in zip(nbest.hypotheses, ranked):
            assert seq == ref_seq
            assert np.isclose(score, np.log(ref_p), rtol=1e-9)

    def test_single_frame_peaked(self):
        lp = np.log(np.array([[0.05, 0.9, 0.05]]))
        nbest = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=None, n=1)
        seq, score = nbest.hypotheses[0]
        assert seq == (1,)
        assert np.isclose(score, np.log(0.9), rtol=1e-12)

    def test_scores_exponentiate_to_at_most_one(self):
        rng = np.random.default_rng(5)
        lp = random_posterior(rng, 3, 3)
        nbest = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=None, n=100)
        total = sum(math.exp(s) for _, s in nbest.hypotheses)
        assert total <= 1.0 + 1e-9

    def test_incomplete_flag_when_few_prefixes(self):
        lp = np.log(np.array([[0.5, 0.5]]))  # only () and (1,) reachable
        nbest = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=None, n=10)
        assert nbest.incomplete
        assert len(nbest) == 2

    def test_beam_width_must_cover_n(self):
        lp = np.log(np.full((1, 2), 0.5))
        with pytest.raises(ValueError, match="beam_width"):
            prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=1, n=2)

    def test_divergence_from_greedy_exists(self):
        # beam sums path mass per collapsed sequence while greedy follows the
        # single best path; random search must expose a disagreement, and on
        # it the beam's answer must match the exhaustive ranking
        rng = np.random.default_rng(2024)
        found = None
        for _ in range(300):
            t_frames = int(rng.integers(2, 4))
            vocab = int(rng.integers(2, 4))
            lp = random_posterior(rng, t_frames, vocab)
            post = CtcPosterior(lp, BLANK)
            g = greedy_1best(post)
            b = prefix_beam_nbest(post, beam_width=None, n=1).hypotheses[0][0]
            if g != b:
                found = (lp, g, b)
                break
        assert found is not None, "no divergence instance found"
        lp, g, b = found
        ref = exhaustive_ctc_scores(lp, BLANK)
        best = max(ref.items(), key=lambda kv: kv[1])[0]
        assert b == best
        assert g != best

    def test_canonical_divergence_instance(self):
        # blank slightly dominant per frame: greedy yields the empty string,
        # but the summed mass of [a] (3 paths) beats the all-blank path
        lp = np.log(np.array([[0.6, 0.4], [0.6, 0.4]]))
        post = CtcPosterior(lp, BLANK)
        assert greedy_1best(post) == ()
        nbest = prefix_beam_nbest(post, beam_width=None, n=2)
        assert nbest.hypotheses[0][0] == (1,)
        assert np.isclose(math.exp(nbest.hypotheses[0][1]), 0.64, rtol=1e-12)
        assert np.isclose(math.exp(nbest.hypotheses[1][1]), 0.36, rtol=1e-12)

    def test_pruned_beam_deterministic(self):
        rng = np.random.default_rng(6)
        lp = random_posterior(rng, 5, 4)
        a = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=3, n=3)
        b = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=3, n=3)
        assert a.hypotheses == b.hypotheses

    def test_format_nbest(self):
        lp = np.log(np.array([[0.05, 0.9, 0.05]]))
        nbest = prefix_beam_nbest(CtcPosterior(lp, BLANK), beam_width=None, n=2)
        text = ctc.format_nbest("utt1", nbest, ["<b>", "a", "b"])
        lines = text.splitlines()
        assert lines[0].startswith("utt1\t1\t")
        assert lines[0].endswith("\ta")
