import numpy as np
import pytest
import torch

from jetseg.errors import InvalidInputError, InvalidSpecError, UndefinedMetricError
from jetseg.losses import (
    boundary_stats,
    class_weights,
    hard_confusion,
    jetloss,
    jetloss_components,
    miou,
    per_class_iou,
    soft_confusion,
)


# -- brute-force oracles ------------------------------------------------------

def brute_confusion(pred, target, num_classes, ignore=255):
    tp = [0] * num_classes
    fp = [0] * num_classes
    fn = [0] * num_classes
    for p, t in zip(pred.reshape(-1).tolist(), target.reshape(-1).tolist()):
        if t == ignore:
            continue
        if p == t:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    return tp, fp, fn


def brute_boundary_mask(labels, width):
    h, w = labels.shape
    mask = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            for di in range(-width, width + 1):
                for dj in range(-width, width + 1):
                    ni, nj = i + di, j + dj
                    if 0 <= ni < h and 0 <= nj < w and labels[ni, nj] != labels[i, j]:
                        mask[i, j] = True
    return mask


def brute_boundary_stats(pred, target, width, ignore=255):
    valid = target != ignore
    bp = brute_boundary_mask(pred, width) & valid
    bt = brute_boundary_mask(target, width) & valid
    agree = (pred == target) & bp & bt
    return int(agree.sum()), int((bp & ~agree).sum()), int((bt & ~agree).sum())


def brute_jetloss(probs, target, weights, eps=1e-6, width=1, ignore=255):
    """Scalar re-implementation from raw counts, all plain python loops."""
    n, c, h, w = probs.shape
    tp = [0.0] * c
    fp = [0.0] * c
    fn = [0.0] * c
    for b in range(n):
        for i in range(h):
            for j in range(w):
                t = int(target[b, i, j])
                if t == ignore:
                    continue
                for cls in range(c):
                    p = float(probs[b, cls, i, j])
                    if cls == t:
                        tp[cls] += p
                        fn[cls] += 1.0 - p
                    else:
                        fp[cls] += p
    recall = sum(weights[cl] * (tp[cl] + eps) / (tp[cl] + fn[cl] + eps) for cl in range(c))
    precision = sum(weights[cl] * (tp[cl] + eps) / (tp[cl] + fp[cl] + eps) for cl in range(c))
    tp_b = miss_b = 0.0
    pred = probs.argmax(axis=1)
    for b in range(n):
        bp = brute_boundary_mask(pred[b], width)
        bt = brute_boundary_mask(target[b], width)
        for i in range(h):
            for j in range(w):
                t = int(target[b, i, j])
                if t == ignore or not (bp[i, j] or bt[i, j]):
                    continue
                p_true = float(probs[b, t, i, j])
                tp_b += p_true
                miss_b += 1.0 - p_true
    iou_b = (tp_b + eps) / (tp_b + 2.0 * miss_b + eps)
    boundary = sum(weights) * iou_b
    return 3.0 * sum(weights) - (recall + precision + boundary)


def one_hot_probs(target, num_classes):
    return torch.nn.functional.one_hot(target.long(), num_classes).permute(0, 3, 1, 2).double()


# -- soft / hard confusion ----------------------------------------------------

class TestConfusion:
    def test_perfect_one_hot(self):
        target = torch.tensor([[[0, 0, 1], [2, 1, 1]]])
        stats = soft_confusion(one_hot_probs(target, 3), target)
        assert stats.tp.tolist() == [2.0, 3.0, 1.0]
        assert stats.fp.tolist() == [0.0, 0.0, 0.0]
        assert stats.fn.tolist() == [0.0, 0.0, 0.0]

    def test_uniform_probs_single_class_image(self):
        target = torch.zeros(1, 4, 4, dtype=torch.long)
        probs = torch.full((1, 4, 4, 4), 0.25)
        stats = soft_confusion(probs, target)
        assert abs(stats.tp[0].item() - 16 / 4) < 1e-6
        assert abs(stats.fn[0].item() - 16 * 0.75) < 1e-6
        for c in (1, 2, 3):
            assert abs(stats.fp[c].item() - 16 * 0.25) < 1e-6

    def test_hard_argmax_matches_bruteforce(self):
        g = torch.Generator().manual_seed(5)
        for trial in range(20):
            pred = torch.randint(0, 3, (1, 8, 8), generator=g)
            target = torch.randint(0, 3, (1, 8, 8), generator=g)
            stats = hard_confusion(pred, target, 3)
            tp, fp, fn = brute_confusion(pred, target, 3)
            assert stats.tp.tolist() == tp
            assert stats.fp.tolist() == fp
            assert stats.fn.tolist() == fn

    def test_soft_one_hot_equals_hard(self):
        g = torch.Generator().manual_seed(6)
        target = torch.randint(0, 4, (2, 6, 6), generator=g)
        pred = torch.randint(0, 4, (2, 6, 6), generator=g)
        soft = soft_confusion(one_hot_probs(pred, 4), target)
        hard = hard_confusion(pred, target, 4)
        assert torch.allclose(soft.tp.double(), hard.tp)
        assert torch.allclose(soft.fp.double(), hard.fp)
        assert torch.allclose(soft.fn.double(), hard.fn)

    def test_ignore_index_excluded(self):
        target = torch.tensor([[[0, 255], [255, 1]]])
        probs = one_hot_probs(torch.tensor([[[0, 0], [1, 0]]]), 2)
        stats = soft_confusion(probs, target)
        assert stats.tp.tolist() == [1.0, 0.0]
        assert stats.fp.tolist() == [1.0, 0.0]
        assert stats.fn.tolist() == [0.0, 1.0]

    def test_unnormalized_probs_rejected(self):
        probs = torch.rand(1, 3, 4, 4)
        target = torch.zeros(1, 4, 4, dtype=torch.long)
        with pytest.raises(InvalidInputError):
            soft_confusion(probs, target)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            soft_confusion(torch.full((1, 2, 4, 4), 0.5), torch.zeros(1, 5, 5, dtype=torch.long))

    def test_merge_is_associative(self):
        g = torch.Generator().manual_seed(7)
        parts = []
        for _ in range(3):
            pred = torch.randint(0, 3, (1, 5, 5), generator=g)
            target = torch.randint(0, 3, (1, 5, 5), generator=g)
            parts.append(hard_confusion(pred, target, 3))
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[0].merge(parts[1].merge(parts[2]))
        assert torch.equal(left.tp, right.tp) and torch.equal(left.fp, right.fp)


class TestClassWeights:
    def test_equal_counts_give_unit_weights(self):
        w = class_weights([500, 500, 500], beta=0.99).w
        assert torch.allclose(w, torch.ones(3, dtype=torch.float64))

    def test_beta_zero_gives_unit_weights(self):
        w = class_weights([10, 1000, 3], beta=0.0).w
        assert torch.allclose(w, torch.ones(3, dtype=torch.float64))

    def test_rare_class_upweighted(self):
        beta = 0.99
        counts = [1000, 10]
        w = class_weights(counts, beta).w
        assert w[1] > w[0]
        # independent evaluation of the effective-number formula
        raw = [(1 - beta) / (1 - beta ** n) for n in counts]
        expected = [r * 2 / sum(raw) for r in raw]
        assert torch.allclose(w, torch.tensor(expected, dtype=torch.float64))

    def test_normalized_to_class_count(self):
        w = class_weights([7, 2000, 31, 999], beta=0.999).w
        assert abs(w.sum().item() - 4.0) < 1e-9

    def test_empty_class_finite(self):
        w = class_weights([100, 0, 50], beta=0.9).w
        assert torch.isfinite(w).all()

    def test_invalid_beta_rejected(self):
        with pytest.raises(InvalidSpecError):
            class_weights([1, 2], beta=1.0)
        with pytest.raises(InvalidSpecError):
            class_weights([1, 2], beta=-0.1)


class TestBoundaryStats:
    def test_identical_constant_maps(self):
        maps = torch.zeros(6, 6, dtype=torch.long)
        stats = boundary_stats(maps, maps)
        assert (stats.tp_b, stats.fp_b, stats.fn_b) == (0.0, 0.0, 0.0)

    def test_identical_nonconstant_maps(self):
        target = torch.zeros(6, 6, dtype=torch.long)
        target[:, 3:] = 1
        stats = boundary_stats(target, target)
        assert stats.fp_b == 0.0 and stats.fn_b == 0.0 and stats.tp_b > 0

    def test_shifted_column_fixture(self):
        # target edge between columns 2|3, prediction shifted one column right
        target = torch.zeros(6, 6, dtype=torch.long)
        target[:, 3:] = 1
        pred = torch.zeros(6, 6, dtype=torch.long)
        pred[:, 4:] = 1
        stats = boundary_stats(pred, target, width=1)
        # hand enumeration: both boundaries are two full columns (12 pixels
        # each) overlapping only in column 3 where the labels disagree
        assert (stats.tp_b, stats.fp_b, stats.fn_b) == (0.0, 12.0, 12.0)
        assert brute_boundary_stats(pred.numpy(), target.numpy(), 1) == (0, 12, 12)

    def test_matches_bruteforce_on_random_maps(self):
        g = torch.Generator().manual_seed(9)
        for width in (1, 2):
            for _ in range(10):
                pred = torch.randint(0, 3, (7, 7), generator=g)
                target = torch.randint(0, 3, (7, 7), generator=g)
                stats = boundary_stats(pred, target, width)
                expected = brute_boundary_stats(pred.numpy(), target.numpy(), width)
                assert (stats.tp_b, stats.fp_b, stats.fn_b) == tuple(float(v) for v in expected)

    def test_ignore_pixels_excluded(self):
        target = torch.zeros(4, 4, dtype=torch.long)
        target[:, 2:] = 255
        pred = torch.zeros(4, 4, dtype=torch.long)
        stats = boundary_stats(pred, target)
        # boundary ring around void exists only on valid pixels
        expected = brute_boundary_stats(pred.numpy(), target.numpy(), 1)
        assert (stats.tp_b, stats.fp_b, stats.fn_b) == tuple(float(v) for v in expected)

    def test_invalid_width_rejected(self):
        maps = torch.zeros(4, 4, dtype=torch.long)
        with pytest.raises(InvalidSpecError):
            boundary_stats(maps, maps, width=0)


class TestJetLoss:
    def test_perfect_prediction_zero_loss(self):
        target = torch.tensor([[[0, 1, 1], [2, 2, 0]]])
        probs = one_hot_probs(target, 3)
        loss = jetloss(probs, target, eps=1e-6)
        assert 0.0 <= float(loss) <= 3 * 1e-6

    def test_matches_scalar_reimplementation(self):
        g = torch.Generator().manual_seed(21)
        logits = torch.randn(1, 2, 4, 4, generator=g, dtype=torch.float64)
        probs = torch.softmax(logits, dim=1)
        target = torch.randint(0, 2, (1, 4, 4), generator=g)
        weights = [1.0, 1.0]
        ours = float(jetloss(probs, target, torch.tensor(weights)))
        oracle = brute_jetloss(probs.numpy(), target.numpy(), weights)
        assert abs(ours - oracle) < 1e-9

    def test_matches_scalar_reimplementation_weighted(self):
        g = torch.Generator().manual_seed(22)
        logits = torch.randn(2, 3, 5, 5, generator=g, dtype=torch.float64)
        probs = torch.softmax(logits, dim=1)
        target = torch.randint(0, 3, (2, 5, 5), generator=g)
        weights = [0.5, 2.0, 0.8]
        ours = float(jetloss(probs, target, torch.tensor(weights, dtype=torch.float64)))
        oracle = brute_jetloss(probs.numpy(), target.numpy(), weights)
        assert abs(ours - oracle) < 1e-9

    def test_nonnegative_on_random_instances(self):
        g = torch.Generator().manual_seed(23)
        for _ in range(20):
            logits = torch.randn(1, 4, 6, 6, generator=g)
            probs = torch.softmax(logits, dim=1)
            target = torch.randint(0, 4, (1, 6, 6), generator=g)
            assert float(jetloss(probs, target)) >= 0.0

    def test_monotone_from_uniform_to_one_hot(self):
        target = torch.zeros(1, 8, 8, dtype=torch.long)
        target[:, :, 4:] = 1
        onehot = one_hot_probs(target, 2)
        uniform = torch.full_like(onehot, 0.5)
        losses = []
        for step in range(10):
            t = step / 9.0
            probs = (1 - t) * uniform + t * onehot
            losses.append(float(jetloss(probs, target)))
        for a, b in zip(losses, losses[1:]):
            assert b < a, losses

    def test_weight_scaling_scales_components(self):
        g = torch.Generator().manual_seed(24)
        probs = torch.softmax(torch.randn(1, 3, 6, 6, generator=g, dtype=torch.float64), dim=1)
        target = torch.randint(0, 3, (1, 6, 6), generator=g)
        w = torch.tensor([0.7, 1.1, 1.9], dtype=torch.float64)
        base = jetloss_components(probs, target, w)
        scaled = jetloss_components(probs, target, 3.0 * w)
        for key in ("total", "recall", "precision", "boundary"):
            assert abs(float(scaled[key]) - 3.0 * float(base[key])) < 1e-9

    def test_component_ceilings(self):
        g = torch.Generator().manual_seed(25)
        probs = torch.softmax(torch.randn(1, 3, 6, 6, generator=g), dim=1)
        target = torch.randint(0, 3, (1, 6, 6), generator=g)
        comps = jetloss_components(probs, target)
        s = float(comps["weight_sum"])
        assert float(comps["recall"]) <= s + 1e-6
        assert float(comps["precision"]) <= s + 1e-6
        assert float(comps["boundary"]) <= s + 1e-6

    def test_wrong_weight_count_rejected(self):
        probs = torch.full((1, 2, 4, 4), 0.5)
        target = torch.zeros(1, 4, 4, dtype=torch.long)
        with pytest.raises(InvalidInputError):
            jetloss(probs, target, torch.ones(3))


class TestMiou:
    def test_perfect_prediction(self):
        target = torch.tensor([[[0, 1], [2, 2]]])
        stats = hard_confusion(target, target, 3)
        assert miou(stats) == 1.0

    def test_disjoint_prediction(self):
        target = torch.zeros(1, 4, 4, dtype=torch.long)
        pred = torch.ones(1, 4, 4, dtype=torch.long)
        stats = hard_confusion(pred, target, 2)
        assert miou(stats) == 0.0

    def test_matches_bruteforce_tally(self):
        g = torch.Generator().manual_seed(31)
        for _ in range(10):
            target = torch.randint(0, 2, (1, 4, 4), generator=g)
            pred = target.clone()
            flip = torch.randperm(16, generator=g)[:4]
            pred.reshape(-1)[flip] = 1 - pred.reshape(-1)[flip]
            stats = hard_confusion(pred, target, 2)
            tp, fp, fn = brute_confusion(pred, target, 2)
            expected = []
            for c in range(2):
                if tp[c] + fp[c] + fn[c] > 0:
                    expected.append(tp[c] / (tp[c] + fp[c] + fn[c]))
            assert abs(miou(stats) - sum(expected) / len(expected)) < 1e-12

    def test_relabeling_invariance(self):
        g = torch.Generator().manual_seed(32)
        target = torch.randint(0, 3, (1, 6, 6), generator=g)
        pred = torch.randint(0, 3, (1, 6, 6), generator=g)
        perm = [2, 0, 1]
        relabel = lambda m: torch.tensor(perm)[m]
        a = miou(hard_confusion(pred, target, 3))
        b = miou(hard_confusion(relabel(pred), relabel(target), 3))
        assert abs(a - b) < 1e-12

    def test_absent_class_excluded(self):
        target = torch.zeros(1, 4, 4, dtype=torch.long)
        stats = hard_confusion(target, target, 5)
        assert miou(stats) == 1.0
        assert miou(stats, include_absent=True) == pytest.approx(1.0 / 5)

    def test_removing_empty_class_keeps_miou(self):
        g = torch.Generator().manual_seed(33)
        target = torch.randint(0, 3, (1, 6, 6), generator=g)
        pred = torch.randint(0, 3, (1, 6, 6), generator=g)
        with_extra = miou(hard_confusion(pred, target, 4))  # class 3 nowhere
        without = miou(hard_confusion(pred, target, 3))
        assert abs(with_extra - without) < 1e-12

    def test_bounds(self):
        g = torch.Generator().manual_seed(34)
        for _ in range(20):
            target = torch.randint(0, 4, (1, 5, 5), generator=g)
            pred = torch.randint(0, 4, (1, 5, 5), generator=g)
            value = miou(hard_confusion(pred, target, 4))
            assert 0.0 <= value <= 1.0

    def test_all_absent_rejected(self):
        target = torch.full((1, 3, 3), 255, dtype=torch.long)
        pred = torch.zeros(1, 3, 3, dtype=torch.long)
        stats = hard_confusion(pred, target, 3)
        with pytest.raises(UndefinedMetricError):
            miou(stats)

    def test_per_class_iou_marks_absent(self):
        target = torch.zeros(1, 3, 3, dtype=torch.long)
        stats = hard_confusion(target, target, 3)
        iou = per_class_iou(stats)
        assert iou[0] == 1.0 and torch.isnan(iou[1]) and torch.isnan(iou[2])
