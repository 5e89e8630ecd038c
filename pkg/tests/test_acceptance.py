"""Acceptance suite: one test per release criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one pass/fail
line per criterion. Each test pins the criterion's tolerance and, where
stated, its runtime budget.
"""

import itertools
import json
import time

import numpy as np
import pytest

from mlfr.cli import main as cli_main
from mlfr.container import save_network
from mlfr.decoders import (
    dictionary_decoder,
    mlfr_explain,
    segmentation_decoder,
    stack_decoder,
    top_k_features,
)
from mlfr.dictlearn import DictLearnConfig, learn_dictionary, sparse_encode
from mlfr.evaluation import MoRFCurve, aopc, morf_curve, random_baseline, segment_flip_regions
from mlfr.lrp import epsilon_rule, propagate
from mlfr.nn import Dense, Flatten, Network, forward
from mlfr.render import save_image
from mlfr.segmentation import QuickshiftParams, SegmentLabels, quickshift

from conftest import half_plane_image, random_convnet, random_mlp, smooth_random_image
from test_dictlearn import (
    nnlasso_objective,
    power_iteration_rank1,
    projected_gradient_nnlasso,
    random_unit_atoms,
)


def report_pass(name):
    print(f"\nACCEPTANCE PASS: {name}")


def sample_mlp_and_input(seed):
    """Bias-free MLP with <= 3 dense layers and <= 32 units, plus an input
    whose pre-activations are all nonzero."""
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(1, 4))
    sizes = [int(rng.integers(2, 33)) for _ in range(n_layers + 1)]
    net = random_mlp(rng, sizes, bias=False)
    for _ in range(100):
        x = rng.normal(size=sizes[0])
        out, trace = forward(net, x)
        zs = [step.output for step, layer in zip(trace.steps, net.layers) if layer.kind == "dense"]
        if all(np.all(z != 0.0) for z in zs) and out.min(initial=1.0) != 0.0:
            return net, x
    raise AssertionError("could not sample nonzero pre-activations")


def test_lrp_conservation_bias_free_networks():
    start = time.monotonic()
    rule = epsilon_rule(1e-12)
    for seed in range(50):
        net, x = sample_mlp_and_input(seed)
        out, trace = forward(net, x)
        class_index = seed % out.shape[0]
        r = propagate(net, trace, class_index, rule)
        score = out[class_index]
        assert abs(r.values.sum() - score) <= 1e-5 * abs(score), f"seed {seed}"
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"conservation suite took {elapsed:.2f}s"
    report_pass(f"LRP conservation on 50 bias-free MLPs ({elapsed:.2f}s)")


def test_segment_relevance_equals_pixel_relevance_sums():
    start = time.monotonic()
    rule = epsilon_rule(1e-12)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        net = random_convnet(rng, in_shape=(3, 12, 12), channels=int(rng.integers(2, 5)),
                             classes=int(rng.integers(2, 6)))
        image = smooth_random_image(rng, size=12) if seed % 2 else half_plane_image(size=12)
        seg = quickshift(
            image,
            QuickshiftParams(kernel_size=0.5 + 0.25 * (seed % 3), max_dist=2 + (seed % 3), ratio=0.5),
        )
        decoder, encoding = segmentation_decoder(image, seg)
        class_index = seed % net.num_classes
        report = mlfr_explain(net, decoder, encoding, class_index, rule)
        _, trace = forward(net, image)
        pixel = propagate(net, trace, class_index, rule).values
        for h, mask in enumerate(seg.masks()):
            diff = abs(report.feature_relevance[h] - pixel[:, mask].sum())
            worst = max(worst, diff)
            assert diff <= 1e-6, f"seed {seed} segment {h}: {diff}"
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"segment/pixel suite took {elapsed:.2f}s"
    report_pass(
        f"segment relevance equals pixel sums on 20 conv nets "
        f"(worst |diff| {worst:.2e}, {elapsed:.2f}s)"
    )


def test_decoder_exactness():
    start = time.monotonic()
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        image = smooth_random_image(rng, size=10)
        seg = quickshift(image, QuickshiftParams(kernel_size=0.75, max_dist=3, ratio=0.5))
        decoder, encoding = segmentation_decoder(image, seg)
        np.testing.assert_array_equal(decoder.decode(encoding), image.reshape(-1))

    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(3000 + seed)
        d = int(rng.integers(8, 40))
        k = int(rng.integers(2, 12))
        v = rng.random((d, k)) + 0.05
        v /= np.linalg.norm(v, axis=0)
        x = rng.random(d)
        gamma2 = float(rng.choice([0.0, 0.01, 0.1, 1.0]))
        decoder, encoding = dictionary_decoder(v, x, gamma2)
        err = float(np.max(np.abs(decoder.decode(encoding) - x)))
        worst = max(worst, err)
        assert err <= 1e-9, f"seed {seed}: {err}"
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"decoder exactness took {elapsed:.2f}s"
    report_pass(
        f"decoders reconstruct exactly (segments: 0, atoms worst {worst:.2e}, {elapsed:.2f}s)"
    )


def test_stacked_model_forward_consistency():
    for seed in range(50):
        rng = np.random.default_rng(4000 + seed)
        d = int(rng.integers(6, 24))
        k = int(rng.integers(2, 10))
        net = random_mlp(rng, [d, int(rng.integers(4, 16)), int(rng.integers(2, 6))])
        v = rng.random((d, k)) + 0.05
        x = rng.random(d)
        decoder, encoding = dictionary_decoder(v, x, 0.05)
        dm = stack_decoder(decoder, net)
        out_dm, _ = forward(dm, encoding.coefficients)
        out_m, _ = forward(net, decoder.decode(encoding))
        assert np.max(np.abs(out_dm - out_m)) <= 1e-9, f"seed {seed}"
    report_pass("decoder+network stack matches decode-then-forward on 50 instances")


def test_aopc_formula():
    curve = MoRFCurve(drops=(0.0, 1.0, 2.0), L=2, seed=0, ordering="relevance")
    assert aopc([curve]).aopc == 1.0
    with pytest.raises(ValueError):
        MoRFCurve(drops=(0.5, 1.0), L=1, seed=0, ordering="relevance")
    rng = np.random.default_rng(0)
    net = random_mlp(rng, [16, 4])
    image = rng.random((1, 4, 4))
    region = np.ones((4, 4), dtype=bool)
    c = morf_curve(net, image, [region], 0, 1, seed=3)
    assert c.drops[0] == 0.0
    report_pass("AOPC formula and drops[0] == 0 invariant")


def test_aopc_relevance_order_beats_random_and_respects_best_order():
    start = time.monotonic()
    h = w = 8
    bands = [(0, 2), (2, 4), (4, 6), (6, 8)]
    labels_grid = np.zeros((h, w), dtype=int)
    weights = np.zeros((h, w))
    for idx, ((r0, r1), level) in enumerate(zip(bands, (8.0, 4.0, 2.0, 1.0))):
        labels_grid[r0:r1, :] = idx
        weights[r0:r1, :] = level
    labels = SegmentLabels(labels=labels_grid, segment_count=4)
    net = Network(
        layers=(Flatten(), Dense(weight=np.stack([weights.reshape(-1), np.zeros(h * w)]),
                                 bias=np.zeros(2))),
        input_shape=(1, h, w),
    )
    image = np.full((1, h, w), 1.0)

    decoder, encoding = segmentation_decoder(image, labels)
    report = mlfr_explain(net, decoder, encoding, 0, epsilon_rule(1e-9))
    order = top_k_features(report, 4)
    assert order == [0, 1, 2, 3]  # planted weight order recovered
    regions = segment_flip_regions(decoder, order)

    seeds = list(range(25))
    relevance_curves = [
        morf_curve(net, image, regions, 0, 4, seed=s) for s in seeds
    ]
    relevance_aopc = aopc(relevance_curves).aopc
    random_result_per_seed = [
        random_baseline(net, image, regions, 0, 4, seeds=[s]).aopc for s in seeds
    ]
    random_aopc = float(np.mean(random_result_per_seed))
    assert relevance_aopc >= random_aopc, (relevance_aopc, random_aopc)

    # exhaustive enumeration upper-bounds both, per seed
    for s in seeds[:5]:
        enumerated = [
            aopc([morf_curve(net, image, [regions[i] for i in perm], 0, 4, seed=s)]).aopc
            for perm in itertools.permutations(range(4))
        ]
        best = max(enumerated)
        assert aopc([relevance_curves[s]]).aopc <= best + 1e-12
        assert random_result_per_seed[s] <= best + 1e-12
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"AOPC ordering suite took {elapsed:.2f}s"
    report_pass(
        f"relevance-ordered AOPC {relevance_aopc:.3f} >= random {random_aopc:.3f}, "
        f"<= exhaustive best order ({elapsed:.2f}s)"
    )


def test_dictionary_learning_criteria():
    for seed in range(10):
        rng = np.random.default_rng(5000 + seed)
        x = rng.random((15, 30))
        config = DictLearnConfig(atoms=5, gamma1=0.01, gamma2=0.05, max_iters=15,
                                 tolerance=1e-14, seed=seed)
        trace = learn_dictionary(x, config).objective_trace
        assert all(a >= b - 1e-12 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:])), f"seed {seed}"

    rng = np.random.default_rng(77)
    x = np.outer(rng.random(16) + 0.1, rng.random(12) + 0.1)
    dictionary = learn_dictionary(
        x, DictLearnConfig(atoms=1, max_iters=500, tolerance=1e-14, seed=0)
    )
    u = np.stack([sparse_encode(dictionary, x[:, i], 0.0).coefficients for i in range(12)], axis=1)
    ours = np.linalg.norm(x - dictionary.atoms_matrix @ u)
    oracle = np.linalg.norm(x - power_iteration_rank1(x))
    assert (ours - oracle) / np.linalg.norm(x) <= 1e-3

    for seed in range(10):
        rng = np.random.default_rng(6000 + seed)
        v = random_unit_atoms(rng, 8, 4)
        x = rng.random(8)
        enc = sparse_encode(v, x, 0.1)
        ours_obj = nnlasso_objective(v, x, enc.coefficients, 0.1)
        oracle_obj = nnlasso_objective(v, x, projected_gradient_nnlasso(v, x, 0.1), 0.1)
        assert abs(ours_obj - oracle_obj) <= 1e-6, f"seed {seed}"
    report_pass("dictionary learning: monotone objective, rank-1 oracle, encode oracle")


def test_quickshift_criteria(rng):
    fixtures = [
        half_plane_image(size=16),
        smooth_random_image(rng, size=16),
        np.linspace(0, 1, 192).reshape(3, 8, 8),
    ]
    for img in fixtures:
        seg = quickshift(img, QuickshiftParams(kernel_size=1.0, max_dist=3, ratio=0.5))
        assert np.array_equal(np.unique(seg.labels), np.arange(seg.segment_count))

    img = half_plane_image(size=8)
    seg = quickshift(img, QuickshiftParams(kernel_size=2, max_dist=0.5, ratio=0.5))
    assert seg.segment_count == 64

    params = QuickshiftParams(kernel_size=1.5, max_dist=4, ratio=0.5)
    img = fixtures[1]
    a = quickshift(img, params)
    b = quickshift(img, params)
    assert a.labels.tobytes() == b.labels.tobytes()
    report_pass("quickshift: partition property, sub-spacing cutoff, byte-identical reruns")


def test_cli_determinism(tmp_path, rng):
    model_path = tmp_path / "model.mlfr"
    save_network(random_convnet(rng, in_shape=(3, 16, 16), channels=3, classes=3), model_path)
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    save_image(half_plane_image(16), images_dir / "a.png")
    save_image(smooth_random_image(rng, size=16), images_dir / "b.png")

    qs = ["--kernel-size", "1.0", "--max-dist", "2", "--ratio", "0.5"]
    explain_artifacts = []
    for run in range(2):
        out = tmp_path / f"overlay{run}.png"
        rep = tmp_path / f"report{run}.json"
        code = cli_main(
            ["explain", "--model", str(model_path), "--image", str(images_dir / "a.png"),
             "--seed", "5", *qs, "--out", str(out), "--json", str(rep)]
        )
        assert code == 0
        explain_artifacts.append(out.read_bytes() + rep.read_bytes())
    assert explain_artifacts[0] == explain_artifacts[1]

    aopc_artifacts = []
    for run in range(2):
        csv = tmp_path / f"curves{run}.csv"
        summary = tmp_path / f"summary{run}.json"
        code = cli_main(
            ["aopc", "--model", str(model_path), "--images-dir", str(images_dir),
             *qs, "--L", "2", "--seed", "5", "--baseline-seeds", "1,2",
             "--csv", str(csv), "--json", str(summary)]
        )
        assert code == 0
        aopc_artifacts.append(csv.read_bytes() + summary.read_bytes())
    assert aopc_artifacts[0] == aopc_artifacts[1]
    doc = json.loads((tmp_path / "summary0.json").read_text())
    assert doc["relative_to_random"] is not None
    report_pass("CLI explain and aopc artifacts byte-identical across runs")
