#!/usr/bin/env python3
"""
Pytest-based test suite for the Local Depth Estimation System
Covers the tensor engine, network, data formats, augmentation, metrics, training and the API
"""

import base64
import math
import os
import threading
import time

import numpy as np
import pytest

from app import create_app
from cli import main as cli_main
from core import functional as F
from core.decoder import DepthDecoder, SelectiveFeatureFusion, count_decoder_params
from core.depth_service import DepthService
from core.encoder import EfficientSelfAttention, HierarchicalEncoder, count_encoder_params, patch_embed
from core.gradcheck import available_checks, relative_error, run_gradcheck
from core.model import DepthEstimationModel, inference_size
from core.model_config import ModelConfig
from core.module import capture_attention
from core.tensor import Tensor, backward, get_tape, no_grad, precision, reset_tape
from data.augment import (
    AugmentConfig,
    JitterDraw,
    augment_pipeline,
    flip_horizontal,
    original_cutdepth_params,
    photometric_jitter,
    vertical_cutdepth,
    vertical_cutdepth_params
)
from data.checkpoint import load_checkpoint, save_checkpoint
from data.corrupt import (
    CORRUPTION_KINDS,
    CorruptionSpec,
    apply_corruption,
    corrupt,
    local_shuffle,
    parse_kinds,
    parse_severities
)
from data.netpbm import (
    DepthSample,
    encode_pgm16,
    encode_ppm,
    load_sample,
    parse_pgm16,
    parse_ppm,
    read_manifest,
    read_pgm16,
    save_sample,
    write_ppm
)
from data.synthetic import load_dataset, parse_synth_source, synth_dataset, synth_scene, write_dataset
from presets.corruption_tables import SEVERITY_TABLES
from presets.model_configs import model_preset
from training.ablation import AblationSetting, ablation_study
from training.losses import silog_loss
from training.metrics import (
    EvalConfig,
    MetricsReport,
    aggregate,
    compute_metrics,
    format_report_lines,
    format_report_summary
)
from training.optim import Adam, OptimizerState, adam_step, one_cycle_lr
from training.robustness import evaluate_corrupted, robustness_sweep
from training.trainer import TrainConfig, evaluate, train
from utils.config import load_config, parse_config_text
from utils.errors import (
    CheckpointError,
    ChecksumError,
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    GeometryError,
    ParseError,
    TrainingDivergedError
)

# Toy configuration used for hand-checked shape ladders
LADDER_TOY = dict(stage_channels=[8, 16, 24, 32], reduction_ratios=[8, 4, 2, 1],
                  stage_depths=[1, 1, 1, 1], stage_heads=[1, 2, 3, 4], decoder_width=8)

# Decoder parameter counts, summed layer by layer for the toy preset (N_C=16, C=[16,32,48,64]):
#   bottleneck 1x1 64->16: 64*16+16 = 1040
#   skip reductions 3x3 32->16, 48->16: 4624 + 6928 = 11552
#   head 3x3 16->16, 16->1: 2320 + 145 = 2465
#   SFF per fusion: 3x3 32->16 (4624) + BN 32 + 3x3 16->16 (2320) + BN 32 + 3x3 16->2 (290) = 7298, x3
TOY_DECODER_NO_SFF = 1040 + 11552 + 2465
TOY_DECODER_SFF = TOY_DECODER_NO_SFF + 3 * 7298


def _small_dataset(n=4, size=32, seed=3):
    return synth_dataset(seed, n, size, size)


def _metrics_oracle(pred, gt, valid, min_depth, max_depth):
    """Per-pixel reference for compute_metrics"""
    ratios, abs_rel, sq_rel, sq, sq_log, log10 = [], [], [], [], [], []
    for p, g, v in zip(pred.reshape(-1).tolist(), gt.reshape(-1).tolist(), valid.reshape(-1).tolist()):
        p = min(max(p, min_depth), max_depth)
        if not v or not (min_depth < g <= max_depth):
            continue
        ratios.append(max(g / p, p / g))
        abs_rel.append(abs(g - p) / g)
        sq_rel.append((g - p) * (g - p) / g)
        sq.append((g - p) * (g - p))
        d = float(np.log(g)) - float(np.log(p))
        sq_log.append(d * d)
        log10.append(abs(float(np.log10(g)) - float(np.log10(p))))
    n = len(ratios)
    return {
        "delta1": sum(1 for r in ratios if r < 1.25) / n,
        "delta2": sum(1 for r in ratios if r < 1.25 ** 2) / n,
        "delta3": sum(1 for r in ratios if r < 1.25 ** 3) / n,
        "abs_rel": math.fsum(abs_rel) / n,
        "sq_rel": math.fsum(sq_rel) / n,
        "rmse": math.sqrt(math.fsum(sq) / n),
        "rmse_log": math.sqrt(math.fsum(sq_log) / n),
        "log10": math.fsum(log10) / n,
        "n_pixels": n,
    }


@pytest.fixture(scope="module")
def small_model():
    """Two-stage network (inputs in multiples of 8) for the API tests"""
    return DepthEstimationModel(model_preset("gradcheck"), seed=0)


@pytest.fixture
def app(small_model):
    app = create_app(service=DepthService(small_model, checkpoint="memory"))
    app.config['TESTING'] = True
    return app


# ============================================================================
# TEST FUNCTIONS
# ============================================================================

def test_01_environment_and_configuration(tmp_path):
    """Test 1: Configuration Files, Presets and Validation"""
    print("Running Test 1: Configuration Files, Presets and Validation")

    run = load_config(None)
    assert run.model.stage_channels == [64, 128, 320, 512], "Default model should be the full configuration"
    assert run.train.epochs == 25 and run.train.batch_size == 12, "Default regimen should be 25 epochs, batch 12"
    assert (run.train.lr_low, run.train.lr_high) == (3e-5, 1e-4), "Default LR bounds should be 3e-5 / 1e-4"

    toy = load_config("preset:toy")
    assert toy.model.decoder_width == 16 and toy.train.batch_size == 4, "Toy preset should set N_C=16, batch 4"

    text = "# toy run\npreset = toy\nepochs = 3   # short\nwith_sff = false\ncrop_height = none\n"
    parsed = parse_config_text(text)
    assert parsed.train.epochs == 3, "Config key should override the preset"
    assert parsed.model.with_sff is False, "Boolean values should parse"
    assert parsed.model.stage_channels == [16, 32, 48, 64], "Preset line should select the base values"

    config_file = tmp_path / "run.cfg"
    config_file.write_text("stage_channels = 16, 32, 48, 64\ndecoder_width = 16\nstage_heads = 1,2,3,4\n",
                           encoding="utf-8")
    from_file = load_config(str(config_file))
    assert from_file.model.stage_heads == [1, 2, 3, 4], "List values should be comma-separated"

    with pytest.raises(ConfigError) as error:
        parse_config_text("epochs = 2\nbogus = 1\n", "run.cfg")
    assert "run.cfg:2" in str(error.value) and "bogus" in str(error.value), "Unknown key error should name line and key"

    with pytest.raises(ConfigError):
        parse_config_text("epochs = many\n")
    with pytest.raises(ConfigError):
        parse_config_text("decoder_width = 32\n")
    with pytest.raises(ConfigError):
        parse_config_text("lr_low = 1e-3\nlr_high = 1e-4\n")
    with pytest.raises(ConfigError):
        load_config("preset:nope")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))

    print("PASS: Defaults, presets, overrides and config errors validated")


def test_02_tensor_ops_hand_cases():
    """Test 2: Tensor Operations on Hand-Evaluated Cases"""
    print("Running Test 2: Tensor Operations on Hand-Evaluated Cases")

    identity = F.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[5, 6], [7, 8]]))
    assert np.array_equal(identity.data, [[5, 6], [7, 8]]), "Identity matmul should return the right operand"
    assert F.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data[0, 0] == 11, "[[1,2]]x[[3],[4]] should be 11"
    assert not F.matmul(Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 4)))).data.any(), "Zero matmul should be zero"
    with pytest.raises(DimensionError):
        F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    x = Tensor(np.array([[1, 2], [3, 4]], dtype=np.float32).reshape(1, 1, 2, 2))
    w = Tensor(np.array([[1, 0], [0, 1]], dtype=np.float32).reshape(1, 1, 2, 2))
    assert F.conv2d(x, w).data.reshape(-1).tolist() == [5.0], "Hand conv should give 5"

    assert F.elementwise("mul", Tensor([2.0]), Tensor([3.0])).item() == 6.0, "Dispatch by name"
    with pytest.raises(ContractError):
        F.elementwise("tanh", Tensor([1.0]))
    with pytest.raises(ContractError):
        F.rearrange(Tensor([1.0]), "flip")
    bias_only = F.conv2d(x, Tensor(np.zeros((2, 1, 1, 1))), Tensor([0.5, -1.0]))
    assert np.array_equal(bias_only.data[0, :, 0, 0], [0.5, -1.0]), "Zero weights should give the bias"

    assert F.sigmoid(Tensor(0.0)).item() == 0.5, "sigmoid(0) should be 0.5"
    assert F.relu(Tensor([-3.0, 3.0])).data.tolist() == [0.0, 3.0], "relu should clip negatives"
    assert F.gelu(Tensor(0.0)).item() == 0.0, "gelu(0) should be 0"

    assert np.allclose(F.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5]), "Uniform logits should give 0.5"
    assert np.allclose(F.softmax(Tensor([math.log(2.0), 0.0])).data, [2 / 3, 1 / 3], atol=1e-6), "Hand softmax"
    stable = F.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(stable)) and stable[0] > 0.999999, "Large logits should not overflow"

    normed = F.layer_norm(Tensor([1.0, 3.0]), Tensor([1.0, 1.0]), Tensor([0.0, 0.0]), eps=1e-12)
    assert np.allclose(normed.data, [-1.0, 1.0], atol=1e-6), "layer_norm([1,3]) should be [-1,1]"
    assert not F.layer_norm(Tensor([2.0, 2.0]), Tensor([1.0, 1.0]), Tensor([0.0, 0.0])).data.any(), \
        "Constant vector should normalize to zeros"

    row = F.bilinear_resize(Tensor(np.array([0.0, 1.0]).reshape(1, 1, 1, 2)), 1, 4)
    assert np.allclose(row.data.reshape(-1), [0.0, 0.25, 0.75, 1.0]), "Half-pixel resize of [0,1] to width 4"
    assert np.allclose(F.bilinear_resize(Tensor(np.full((1, 1, 1, 1), 3.0)), 5, 7).data, 3.0), \
        "1x1 input should replicate"

    grid = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert F.reshape(grid, (3, 2)).data.reshape(-1).tolist() == list(range(6)), "reshape keeps flat order"
    a = Tensor(np.random.default_rng(0).standard_normal((1, 5, 4, 4)))
    parts = [F.slice_axis(a, 1, 0, 2), F.slice_axis(a, 1, 2, 5)]
    assert F.concat_channels(parts).shape == (1, 5, 4, 4), "concat should stack channels"
    assert np.array_equal(F.concat_channels(parts).data, a.data), "slice + concat should restore the input"

    print("PASS: matmul, conv2d, activations, softmax, layer_norm, resize and rearrangement")


def test_03_autodiff_tape():
    """Test 3: Reverse-Mode Gradients and Tape Bookkeeping"""
    print("Running Test 3: Reverse-Mode Gradients and Tape Bookkeeping")

    reset_tape()
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    backward(F.sum(x))
    assert np.array_equal(x.grad, [1.0, 1.0, 1.0]), "d sum(x) / dx should be ones"

    x.zero_grad()
    reset_tape()
    backward(F.sum(F.mul(x, x)))
    assert np.allclose(x.grad, 2 * x.data), "d sum(x*x) / dx should be 2x"

    x.zero_grad()
    reset_tape()
    h = F.mul(x, 2.0)
    loss = F.add(F.sum(F.mul(h, h)), F.sum(h))
    backward(loss)
    first = x.grad.copy()
    assert np.array_equal(first, 8 * x.data + 2), "Both uses of h should merge: d/dx = 8x + 2"
    backward(loss)
    assert np.array_equal(x.grad, 2 * first), "A second backward on the same tape adds the same grads again"

    reset_tape()
    with no_grad():
        F.sum(F.mul(x, x))
    assert len(get_tape()) == 0, "no_grad should record nothing"

    with pytest.raises(ContractError):
        backward(F.mul(x, 2.0))
    reset_tape()
    assert len(get_tape()) == 0, "reset_tape should clear the tape"

    print("PASS: Gradients accumulate correctly and the tape resets")


def test_04_gradient_checks():
    """Test 4: Finite-Difference Gradient Checks"""
    print("Running Test 4: Finite-Difference Gradient Checks")

    results = run_gradcheck("all", trials=2, seed=0)
    assert [r.op for r in results] == available_checks(), "Every check should run once"
    failed = [f"{r.op}={r.max_rel_err:.2e}" for r in results if not r.passed]
    assert not failed, f"Gradient checks failed: {failed}"
    assert all(r.tolerance == (1e-2 if r.op == "network" else 1e-3) for r in results), "Op 1e-3, network 1e-2"

    assert relative_error(2.0, 2.0) == 0.0, "Equal gradients have zero error"
    assert abs(relative_error(1e-3, 1.1e-3) - 1e-4 / 1.1e-3) < 1e-12, "Small gradients are judged on their own scale"
    assert relative_error(0.0, 5e-5) == 0.5, "Denominator floor is 1e-4"
    with precision():
        assert Tensor([1.0]).data.dtype == np.float64, "precision() creates float64 tensors"
    assert Tensor([1.0]).data.dtype == np.float32, "float32 is restored on exit"

    with pytest.raises(ConfigError):
        run_gradcheck("not_an_op")
    with pytest.raises(ConfigError):
        run_gradcheck("add", trials=0)

    print(f"PASS: {len(results)} gradient checks within tolerance")


def test_05_batch_norm_semantics():
    """Test 5: Batch Norm Training and Inference Statistics"""
    print("Running Test 5: Batch Norm Training and Inference Statistics")

    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((4, 3, 5, 5)).astype(np.float32) * 2 + 1)
    gamma, beta = Tensor(rng.standard_normal(3)), Tensor(rng.standard_normal(3))
    running = F.RunningStats(3)
    trained = F.batch_norm(x, gamma, beta, running, training=True, momentum=1.0)
    evaluated = F.batch_norm(x, gamma, beta, running, training=False)
    assert np.allclose(trained.data, evaluated.data, atol=1e-5), "momentum=1 should make train and eval agree"

    constant = Tensor(np.full((2, 1, 3, 3), 4.0))
    out = F.batch_norm(constant, Tensor([2.0]), Tensor([0.25]), F.RunningStats(1), training=True)
    assert np.allclose(out.data, 0.25), "Zero-variance channel should give beta"

    before = running.mean.copy()
    F.batch_norm(x, gamma, beta, running, training=False)
    assert np.array_equal(before, running.mean), "Eval mode should not update running statistics"

    print("PASS: Running statistics and eval-mode normalization validated")


def test_06_encoder_shape_ladder():
    """Test 6: Hierarchical Encoder Scale Ladder"""
    print("Running Test 6: Hierarchical Encoder Scale Ladder")

    full = model_preset("full")
    encoder = HierarchicalEncoder(full, np.random.default_rng(0))
    for height, width in ((64, 64), (96, 64)):
        pyramid = encoder(Tensor(np.random.default_rng(1).uniform(0, 1, (1, 3, height, width))))
        expected = [(1, c, height // s, width // s) for c, s in zip(full.stage_channels, (4, 8, 16, 32))]
        assert pyramid.shapes() == expected, f"{height}x{width} ladder should be {expected}"
        assert pyramid.f1.shape[2:] == (height // 4, width // 4) and pyramid.f2.shape[1] == full.stage_channels[1] \
            and pyramid.f3.shape[2:] == (height // 16, width // 16), "Named pyramid levels"
        reset_tape()

    image = Tensor(np.random.default_rng(1).uniform(0, 1, (1, 3, 96, 64)))
    with no_grad(), capture_attention() as maps:
        encoder(image)
    assert len(maps) == sum(full.stage_depths), "One map per attention block"
    assert all(isinstance(m, EfficientSelfAttention) for m, _ in maps), "Only encoder attention is captured"
    for _, attention_map in maps:
        assert np.allclose(attention_map.sum(axis=-1), 1.0, atol=1e-5), "Attention rows should sum to 1"
    first = next(a for m, a in maps if m.reduction == 8)
    assert first.shape[-1] == (96 // 4 // 8) * (64 // 4 // 8), "Keys should be reduced by R^2"
    with no_grad():
        encoder(image)
    assert len(maps) == sum(full.stage_depths), "Nothing is recorded once the capture closes"

    worker_maps = []

    def worker():
        with no_grad(), capture_attention() as inner:
            encoder(image)
        worker_maps.extend(inner)

    with capture_attention() as main_maps:
        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()
    assert not main_maps and len(worker_maps) == len(maps), "Captures are private to their thread"

    with no_grad():
        tokens, h, w = patch_embed(Tensor(np.zeros((1, 3, 64, 96))), 1, encoder)
    assert (h, w) == (16, 24) and tokens.shape == (1, 16 * 24, full.stage_channels[0]), "Stage 1 embeds at 1/4"
    with pytest.raises(GeometryError):
        patch_embed(Tensor(np.zeros((1, 3, 64, 64))), 5, encoder)

    ladder = ModelConfig(**LADDER_TOY).validate()
    toy_encoder = HierarchicalEncoder(ladder, np.random.default_rng(0))
    with no_grad():
        maps = toy_encoder(Tensor(np.random.default_rng(2).uniform(0, 1, (1, 3, 32, 32)))).shapes()
    assert [m[2:] for m in maps] == [(8, 8), (4, 4), (2, 2), (1, 1)], "Toy ladder on 32x32 should end at 1x1"

    with pytest.raises(GeometryError):
        toy_encoder(Tensor(np.zeros((1, 3, 40, 32))))
    assert toy_encoder.num_parameters() == count_encoder_params(ladder), "Analytic encoder count should match"

    print("PASS: 1/4..1/32 maps with C_i channels, attention rows normalized")


def test_07_decoder_and_selective_fusion():
    """Test 7: Decoder Output Contract and Selective Feature Fusion"""
    print("Running Test 7: Decoder Output Contract and Selective Feature Fusion")

    rng = np.random.default_rng(7)
    sff = SelectiveFeatureFusion(4, rng)
    f_dec = Tensor(rng.standard_normal((2, 4, 3, 3)))
    f_enc = Tensor(rng.standard_normal((2, 4, 3, 3)))
    with no_grad():
        saturated = sff(f_dec, f_enc, logits=Tensor(np.stack([np.full((2, 3, 3), 20.0),
                                                              np.full((2, 3, 3), -20.0)], axis=1)))
        halves = sff(f_dec, f_enc, logits=Tensor(np.zeros((2, 2, 3, 3))))
        with capture_attention() as maps:
            learned = sff(f_dec, f_enc)
    (module, sff_map), = maps
    assert module is sff and sff_map.shape == (2, 2, 3, 3), "SFF records one two-channel map"
    assert np.all((sff_map > 0) & (sff_map < 1)), "SFF attention is a sigmoid"
    assert np.allclose(saturated.data, f_dec.data, atol=1e-6), "Saturated attention should select f_dec"
    assert np.allclose(halves.data, 0.5 * f_dec.data + 0.5 * f_enc.data, atol=1e-6), "Zero logits average"
    bound = np.abs(f_dec.data) + np.abs(f_enc.data)
    assert np.all(np.abs(learned.data) <= bound + 1e-6), "Fused feature should be bounded by the inputs"
    with pytest.raises(GeometryError):
        sff(f_dec, Tensor(np.zeros((2, 4, 2, 2))))

    model = DepthEstimationModel(model_preset("toy"), seed=0)
    model.eval()
    with no_grad():
        depth = model(Tensor(np.random.default_rng(8).uniform(0, 1, (2, 3, 64, 64)))).values.data
    assert depth.shape == (2, 1, 64, 64), "Depth should be N x 1 x H x W"
    assert np.all(depth > 0) and np.all(depth < 10.0), "Depth should lie strictly inside (0, max_depth)"

    model.decoder.head2.weight.data[...] = 0.0
    model.decoder.head2.bias.data[...] = 0.0
    with no_grad():
        flat = model(Tensor(np.random.default_rng(9).uniform(0, 1, (1, 3, 32, 32)))).values.data
    assert np.allclose(flat, 5.0), "Zero head should give 0.5 * max_depth everywhere"

    twin = np.random.default_rng(10).uniform(0, 1, (1, 3, 32, 32))
    with no_grad():
        pair = model(Tensor(np.concatenate([twin, twin]))).values.data
    assert np.allclose(pair[0], pair[1], atol=1e-6), "Identical images should give identical outputs in eval mode"
    reset_tape()

    print("PASS: SFF saturation/averaging, depth range and batch independence")


def test_08_parameter_counts():
    """Test 8: Encoder and Decoder Parameter Counts"""
    print("Running Test 8: Encoder and Decoder Parameter Counts")

    toy = model_preset("toy")
    rng = np.random.default_rng(0)
    assert DepthDecoder(toy, rng).num_parameters() == TOY_DECODER_SFF == 36951, "Toy decoder with SFF"
    toy.with_sff = False
    assert DepthDecoder(toy, rng).num_parameters() == TOY_DECODER_NO_SFF == 15057, "Toy decoder without SFF"
    assert count_decoder_params(toy, with_sff=False) == 15057, "Analytic count without SFF"

    full = model_preset("full")
    with_sff = count_decoder_params(full, with_sff=True)
    without_sff = count_decoder_params(full, with_sff=False)
    assert abs(with_sff - 660_000) <= 0.2 * 660_000, f"Decoder with SFF {with_sff} should be within 20% of 0.66M"
    assert abs(without_sff - 380_000) <= 0.2 * 380_000, f"Decoder without SFF {without_sff} should be near 0.38M"
    assert with_sff == DepthDecoder(full, rng).num_parameters(), "Analytic and instantiated full decoder agree"

    mit_b4 = model_preset("mit_b4")
    total = count_encoder_params(mit_b4) + count_decoder_params(mit_b4)
    assert total < 62_000_000, f"MiT-b4 depths should stay below 62M parameters, got {total}"

    print(f"PASS: toy decoder {TOY_DECODER_SFF}/{TOY_DECODER_NO_SFF}, full decoder {with_sff}/{without_sff}")


def test_09_silog_loss():
    """Test 9: Scale-Invariant Log Loss"""
    print("Running Test 9: Scale-Invariant Log Loss")

    gt = np.array([1.0, 3.0], dtype=np.float32)
    valid = np.ones(2, dtype=bool)
    hand = silog_loss(Tensor(2 * gt), gt, valid).item()
    assert abs(hand - 0.5 * math.log(2.0) ** 2) < 1e-6, "pred = 2 gt should give (ln 2)^2 / 2"
    assert abs(hand - 0.240227) < 1e-6, "Hand case should be 0.240227"
    assert silog_loss(Tensor(gt), gt, valid).item() == 0.0, "pred == gt should give 0"

    rng = np.random.default_rng(9)
    pred = rng.uniform(0.5, 5.0, (1, 1, 6, 6)).astype(np.float32)
    truth = rng.uniform(0.5, 5.0, (1, 1, 6, 6)).astype(np.float32)
    mask = rng.random((1, 1, 6, 6)) < 0.7
    base = silog_loss(Tensor(pred), truth, mask).item()
    scaled = silog_loss(Tensor(pred * 4), truth * 4, mask).item()
    assert scaled == base, "Joint power-of-two scaling should leave the loss bit-identical"

    leaf = Tensor(pred, requires_grad=True)
    reset_tape()
    backward(silog_loss(leaf, truth, mask))
    assert np.all(leaf.grad[~mask] == 0), "Invalid pixels should receive no gradient"
    reset_tape()

    masked = Tensor(np.array([1.0, 0.0]), requires_grad=True)
    loss = silog_loss(masked, np.array([2.0, 1.0]), np.array([True, False]))
    assert abs(loss.item() - 0.5 * math.log(2.0) ** 2) < 1e-6, "A zero prediction on an invalid pixel is ignored"
    backward(loss)
    assert masked.grad[1] == 0.0 and np.isfinite(masked.grad).all(), "The invalid pixel gets a zero gradient"
    reset_tape()

    with pytest.raises(ContractError):
        silog_loss(Tensor(gt), gt, np.zeros(2, dtype=bool))
    with pytest.raises(DomainError):
        silog_loss(Tensor(gt), np.array([1.0, 0.0]), valid)
    with pytest.raises(DomainError):
        silog_loss(Tensor(np.array([1.0, 0.0])), gt, valid)
    with pytest.raises(DimensionError):
        silog_loss(Tensor(gt), np.ones(3), np.ones(3, dtype=bool))

    print("PASS: Hand case, zero case, scale invariance and masking")


def test_10_depth_metrics():
    """Test 10: Depth Metrics Against Hand Values and a Per-Pixel Oracle"""
    print("Running Test 10: Depth Metrics Against Hand Values and a Per-Pixel Oracle")

    report = compute_metrics(np.array([1.0, 2.0]), np.array([1.3, 2.0]))
    assert report.delta1 == 0.5 and report.delta2 == 1.0, "Ratios [1.3, 1] give delta1 0.5, delta2 1"
    assert abs(report.abs_rel - 0.5 * 0.3 / 1.3) < 1e-12 and abs(report.abs_rel - 0.11538) < 1e-5, "AbsRel hand case"

    perfect = compute_metrics(np.full((3, 3), 2.0), np.full((3, 3), 2.0))
    assert (perfect.delta1, perfect.delta2, perfect.delta3) == (1.0, 1.0, 1.0), "pred == gt deltas"
    assert perfect.abs_rel == perfect.rmse == perfect.log10 == perfect.rmse_log == 0.0, "pred == gt errors"

    rng = np.random.default_rng(10)
    cfg = EvalConfig(min_depth=1e-3, max_depth=10.0)
    for _ in range(1000):
        pred = rng.uniform(0.0, 11.0, (4, 4))
        gt = rng.uniform(0.5, 11.0, (4, 4))
        valid = rng.random((4, 4)) < 0.9
        valid[0, 0], gt[0, 0] = True, 5.0
        got = compute_metrics(pred, gt, cfg, valid).as_dict()
        want = _metrics_oracle(pred, gt, valid, cfg.min_depth, cfg.max_depth)
        for name in ("delta1", "delta2", "delta3", "abs_rel", "sq_rel", "rmse", "n_pixels"):
            assert got[name] == want[name], f"{name}: {got[name]} != oracle {want[name]}"
        for name in ("rmse_log", "log10"):
            assert abs(got[name] - want[name]) <= 1e-12, f"{name}: {got[name]} vs oracle {want[name]}"
        assert got["delta1"] <= got["delta2"] <= got["delta3"], "Deltas should be monotone"

    cropped = compute_metrics(np.ones((4, 4)), np.where(np.eye(4) > 0, 2.0, 1.0),
                              EvalConfig(center_crop=(1, 0, 1, 1)))
    assert cropped.n_pixels == 1 and cropped.abs_rel == 0.0, "Crop (1,0,1,1) should keep the off-diagonal pixel"
    with pytest.raises(ContractError):
        compute_metrics(np.ones(3), np.full(3, 20.0))
    with pytest.raises(ConfigError):
        EvalConfig(min_depth=5.0, max_depth=1.0)

    low = MetricsReport(0, 0, 0, 1, 1, 1, 1, 1, 10)
    high = MetricsReport(1, 1, 1, 0, 0, 0, 0, 0, 30)
    assert aggregate([low, high]).delta1 == 0.5, "Image weighting averages reports"
    assert aggregate([low, high], "pixel").delta1 == 0.75, "Pixel weighting uses n_pixels"
    assert aggregate([high]) == MetricsReport(1, 1, 1, 0, 0, 0, 0, 0, 30), "Single report aggregates to itself"
    with pytest.raises(ContractError):
        aggregate([])

    lines = format_report_lines(report)
    assert lines[0] == "delta1=0.5" and lines[3] == "abs_rel=0.115385", "Report lines use 6 significant digits"
    assert len(format_report_summary(report).split("\t")) == 9, "Summary line holds 8 metrics and the count"

    print("PASS: Hand cases, 1000-map oracle agreement, crop and aggregation")


def test_11_vertical_cutdepth():
    """Test 11: Vertical CutDepth Geometry"""
    print("Running Test 11: Vertical CutDepth Geometry")

    params = vertical_cutdepth_params(80, 100, 0.5, 1.0, 0.75)
    assert (params.left, params.upper, params.width, params.height) == (50, 0, 37, 80), "Hand case (50, 0, 37, 80)"
    assert vertical_cutdepth_params(80, 100, 0.3, 0.0, 0.75).width == 1, "beta=0 should give a 1-column strip"

    rng = np.random.default_rng(11)
    for _ in range(100_000):
        height, width = int(rng.integers(1, 200)), int(rng.integers(1, 200))
        alpha, beta = rng.random(2)
        p = float(rng.uniform(0.01, 1.0))
        draw = vertical_cutdepth_params(height, width, float(alpha), float(beta), p)
        assert draw.upper == 0 and draw.height == height, "Strip should span the full height"
        assert draw.width >= 1 and draw.left + draw.width <= width, "Strip should stay inside the image"
        original = original_cutdepth_params(height, width, rng, p)
        assert original.left + original.width <= width and original.upper + original.height <= height, \
            "Rectangular variant should stay inside the image"

    sample = _small_dataset(1)[0]
    out = vertical_cutdepth(sample, 0.25, 0.5, 0.75, max_depth=10.0)
    strip = vertical_cutdepth_params(32, 32, 0.25, 0.5, 0.75)
    inside = slice(strip.left, strip.left + strip.width)
    outside = np.ones(32, dtype=bool)
    outside[inside] = False
    assert np.array_equal(out.rgb[:, outside], sample.rgb[:, outside]), "Columns outside the strip are untouched"
    assert np.allclose(out.rgb[:, inside, 0], sample.depth[:, inside] / 10.0), "Strip holds depth / max_depth"
    assert np.array_equal(out.depth, sample.depth), "Depth target should be unchanged"

    with pytest.raises(ContractError):
        vertical_cutdepth_params(10, 10, 1.0, 0.5, 0.75)
    with pytest.raises(ContractError):
        vertical_cutdepth_params(10, 10, 0.5, 0.5, 0.0)

    print("PASS: Hand case, 1e5 random draws and strip locality")


def test_12_augmentation_pipeline():
    """Test 12: Photometric Jitter, Flip/Crop and the Augmentation Pipeline"""
    print("Running Test 12: Photometric Jitter, Flip/Crop and the Augmentation Pipeline")

    sample = _small_dataset(1)[0]
    assert np.array_equal(flip_horizontal(flip_horizontal(sample)).rgb, sample.rgb), "Flip twice is the identity"
    assert np.array_equal(flip_horizontal(sample).depth[:, 0], sample.depth[:, -1]), "Flipped column j = W-1-j"

    assert np.array_equal(photometric_jitter(sample, draw=JitterDraw()).rgb, sample.rgb), "Identity draw"
    gray = DepthSample(rgb=np.full((8, 8, 3), 0.4, dtype=np.float32), depth=np.ones((8, 8)))
    shifted = photometric_jitter(gray, draw=JitterDraw(hue=15.0))
    assert np.allclose(shifted.rgb, 0.4, atol=1e-6), "Hue shift should leave a gray image gray"
    rng = np.random.default_rng(12)
    for _ in range(20):
        jittered = photometric_jitter(sample, rng)
        assert jittered.rgb.min() >= 0.0 and jittered.rgb.max() <= 1.0, "Jitter output should stay in [0, 1]"

    cfg = AugmentConfig(crop_height=32, crop_width=24)
    first = augment_pipeline(sample, np.random.default_rng(5), cfg)
    second = augment_pipeline(sample, np.random.default_rng(5), cfg)
    assert np.array_equal(first.rgb, second.rgb) and np.array_equal(first.depth, second.depth), "Deterministic"
    assert first.rgb.shape == (32, 24, 3), "Crop size should be honored"

    none = AugmentConfig(jitter_prob=0.0, cutdepth_prob=0.0, flip_prob=0.0)
    assert np.array_equal(augment_pipeline(sample, np.random.default_rng(1), none).rgb, sample.rgb), \
        "Probabilities 0 with a full-size crop should leave the sample unchanged"
    forced = AugmentConfig(jitter_prob=0.0, cutdepth_prob=1.0, cutdepth_p=1.0, flip_prob=0.0)
    pasted = augment_pipeline(sample, np.random.default_rng(1), forced)
    changed = np.any(pasted.rgb != sample.rgb, axis=(0, 2))
    assert changed.any(), "Forced CutDepth should modify a strip"
    columns = np.flatnonzero(changed)
    assert np.array_equal(columns, np.arange(columns[0], columns[-1] + 1)), "Pasted columns form one strip"

    with pytest.raises(GeometryError):
        augment_pipeline(sample, rng, AugmentConfig(crop_height=64))
    with pytest.raises(ConfigError):
        AugmentConfig(cutdepth_mode="diagonal")

    print("PASS: Flip, jitter identities, determinism and forced stages")


def test_13_image_corruptions():
    """Test 13: Corruption Generators"""
    print("Running Test 13: Corruption Generators")

    flat = np.full((600, 600, 3), 0.5, dtype=np.float32)
    for severity in range(1, 6):
        sigma = SEVERITY_TABLES["gaussian_noise"][severity]
        noisy = corrupt(flat, CorruptionSpec("gaussian_noise", severity, seed=severity))
        measured = float(np.std(noisy.astype(np.float64)))
        assert abs(measured - sigma) <= 0.05 * sigma, f"Noise sigma {measured:.4f} vs configured {sigma}"

    image = np.random.default_rng(13).uniform(0.1, 0.6, (16, 16, 3)).astype(np.float32)
    for kind in CORRUPTION_KINDS:
        spec = CorruptionSpec(kind, 3, seed=42)
        first, second = corrupt(image, spec), corrupt(image, spec)
        assert np.array_equal(first, second), f"{kind} should be deterministic under a fixed seed"
        assert first.shape == image.shape and first.min() >= 0.0 and first.max() <= 1.0, f"{kind} output range"
        identity = apply_corruption(image, kind, SEVERITY_TABLES[kind][0], np.random.default_rng(0))
        assert np.array_equal(identity, image), f"{kind} severity 0 should be the identity"

    for severity in range(1, 6):
        offset = SEVERITY_TABLES["brightness"][severity]
        expected = np.clip(image.astype(np.float64) + offset, 0.0, 1.0).astype(np.float32)
        assert np.array_equal(corrupt(image, CorruptionSpec("brightness", severity)), expected), "Brightness offset"

    grid = np.arange(20 * 24 * 3, dtype=np.float64).reshape(20, 24, 3)
    shuffled = local_shuffle(grid, 2, 2, np.random.default_rng(5))
    assert not np.array_equal(shuffled, grid), "Local shuffle should move pixels"
    assert np.array_equal(np.sort(shuffled.reshape(-1, 3), axis=0), np.sort(grid.reshape(-1, 3), axis=0)), \
        "Local shuffle should only permute whole pixels"
    assert np.array_equal(shuffled[0], grid[0]) and np.array_equal(shuffled[:, 0], grid[:, 0]), \
        "First row and column never move"
    assert np.array_equal(local_shuffle(grid, 0, 3, np.random.default_rng(5)), grid), "Zero delta is the identity"

    full = np.random.default_rng(1).uniform(0.0, 1.0, (480, 640, 3)).astype(np.float32)
    started = time.perf_counter()
    corrupt(full, CorruptionSpec("glass_blur", 5, seed=0))
    assert time.perf_counter() - started < 5.0, "Full-size glass blur should finish in seconds"

    assert parse_kinds("all") == list(CORRUPTION_KINDS), "'all' should list every kind"
    assert parse_severities("1..5") == [1, 2, 3, 4, 5] and parse_severities("2,4") == [2, 4], "Severity parsing"
    with pytest.raises(ConfigError):
        CorruptionSpec("gaussian_noise", 6)
    with pytest.raises(ConfigError):
        parse_kinds("fog")

    print("PASS: Noise sigma within 5%, determinism, identity and brightness")


def test_14_robustness_sweep():
    """Test 14: Robustness Table Over Kinds and Severities"""
    print("Running Test 14: Robustness Table Over Kinds and Severities")

    model = DepthEstimationModel(model_preset("toy"), seed=0)
    dataset = _small_dataset(2)
    table = robustness_sweep(model, dataset, ["gaussian_noise", "brightness"], [1, 5], seed=3)
    assert len(table) == 2 * 2 + 2, "Table should hold |kinds| x |severities| + |kinds| rows"
    averaged = table.get("gaussian_noise", None)
    rows = [table.get("gaussian_noise", 1), table.get("gaussian_noise", 5)]
    assert averaged.abs_rel == aggregate(rows).abs_rel, "Average row should aggregate the severity rows"

    clean = evaluate(model, dataset)
    identity = evaluate_corrupted(model, dataset, "gaussian_noise", SEVERITY_TABLES["gaussian_noise"][0])
    assert identity == clean, "Identity corruption should reproduce the clean evaluation exactly"

    print("PASS: Row count, averages and identity corruption")


def test_15_netpbm_codec_and_manifest(tmp_path):
    """Test 15: PPM/PGM Codec and Manifest Parsing"""
    print("Running Test 15: PPM/PGM Codec and Manifest Parsing")

    header = b"P6\n# comment line\n2 1\n255\n"
    rgb = parse_ppm(header + bytes([0, 128, 255, 1, 2, 3]))
    assert rgb.shape == (1, 2, 3) and rgb[0, 0, 2] == 255, "P6 with a comment should decode"

    mm = np.array([[5000, 0]], dtype=np.uint16)
    buf = b"P5\n2 1\n65535\n" + mm.astype(">u2").tobytes()
    assert parse_pgm16(buf).tolist() == [[5000, 0]], "16-bit big-endian depth should decode"
    assert encode_pgm16(np.array([[5.0, 0.0]])) == buf, "Encoding 5 m should give 5000 mm"

    with pytest.raises(ParseError) as error:
        parse_ppm(b"P3\n1 1\n255\n" + bytes(3))
    assert error.value.offset == 0, "Bad magic should report offset 0"
    with pytest.raises(ParseError) as error:
        parse_ppm(header + bytes(5))
    assert error.value.offset == len(header) + 5, "Truncated payload should report the end of the file"
    with pytest.raises(ParseError) as error:
        parse_ppm(header + bytes(7))
    assert error.value.offset == len(header) + 6, "Trailing bytes should report where they start"
    with pytest.raises(ParseError):
        parse_ppm(b"P6\n2 1\n65535\n" + bytes(12))

    levels = np.random.default_rng(15).integers(0, 256, (4, 3, 3)).astype(np.float32)
    millimeters = np.random.default_rng(16).integers(0, 9000, (4, 3)).astype(np.float32)
    sample = DepthSample(rgb=levels / np.float32(255), depth=millimeters / np.float32(1000))
    save_sample(sample, tmp_path / "a.ppm", tmp_path / "a.pgm")
    loaded = load_sample(tmp_path / "a.ppm", tmp_path / "a.pgm")
    assert np.array_equal(loaded.rgb, sample.rgb) and np.array_equal(loaded.depth, sample.depth), "Bit-exact pair"
    assert np.array_equal(loaded.valid, sample.depth > 0), "Zero depth should be invalid"
    assert encode_ppm(loaded.rgb) == (tmp_path / "a.ppm").read_bytes(), "Re-encoding should be byte-identical"

    (tmp_path / "b.pgm").write_bytes(b"P5\n4 4\n65535\n" + bytes(32))
    with pytest.raises(ParseError) as error:
        load_sample(tmp_path / "a.ppm", tmp_path / "b.pgm")
    assert error.value.offset == 3, "Size mismatch should point at the depth width token"

    manifest = tmp_path / "list.txt"
    manifest.write_text("# rgb\tdepth\na.ppm\ta.pgm\n\na.ppm\ta.pgm\n", encoding="utf-8")
    entries = read_manifest(manifest)
    assert len(entries) == 2 and entries.entries[0][0] == tmp_path / "a.ppm", "Paths relative to the manifest"
    manifest.write_text("a.ppm\ta.pgm\nbroken line\n", encoding="utf-8")
    with pytest.raises(ParseError) as error:
        read_manifest(manifest)
    assert error.value.offset == len("a.ppm\ta.pgm\n"), "Bad line should report its byte offset"

    print("PASS: Codecs, offsets, bit-exact sample round trip and manifests")


def test_16_synthetic_dataset(tmp_path):
    """Test 16: Synthetic Plane Scenes"""
    print("Running Test 16: Synthetic Plane Scenes")

    first, second = synth_dataset(7, 3, 32, 64), synth_dataset(7, 3, 32, 64)
    for a, b in zip(first, second):
        assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.depth, b.depth), "Same seed, same dataset"
        assert a.depth.min() > 0.5 and a.depth.max() < 9.5, "Depth should lie in (0.5, 9.5)"
        assert a.rgb.shape == (32, 64, 3) and a.valid.all(), "Every synthetic pixel is valid"

    scene = synth_scene(np.random.default_rng(4), 64, 64)
    depth, _ = scene.composite()
    stacked = np.stack([np.where(layer.mask, layer.depth, np.inf) for layer in scene.layers()])
    assert np.array_equal(depth, stacked.min(axis=0)), "Composite depth should be the nearest covering layer"

    assert parse_synth_source("synth:7,256,64,64") == (7, 256, 64, 64), "Positional source"
    assert parse_synth_source("synth:seed=7,n=256,H=64,W=64") == (7, 256, 64, 64), "Keyword source"
    with pytest.raises(GeometryError):
        synth_dataset(0, 1, 60, 64)
    with pytest.raises(ConfigError):
        parse_synth_source("synth:1,2,3")

    manifest = write_dataset(first, tmp_path / "synth")
    reloaded = load_dataset(str(manifest))
    assert len(reloaded) == 3, "Manifest should list every sample"
    assert np.max(np.abs(reloaded[0].depth - first[0].depth)) <= 0.5e-3 + 1e-6, "Depth survives mm quantization"

    print("PASS: Determinism, depth range, z-buffer and dataset files")


def test_17_checkpoint_persistence(tmp_path):
    """Test 17: Checkpoint Round Trips and Rejection"""
    print("Running Test 17: Checkpoint Round Trips and Rejection")

    config = model_preset("gradcheck")
    model = DepthEstimationModel(config, seed=1)
    optimizer = Adam(model)
    reset_tape()
    backward(F.sum(model(Tensor(np.random.default_rng(0).uniform(0, 1, (2, 3, 8, 8)))).values))
    optimizer.step(1e-3)
    reset_tape()

    first = save_checkpoint(model, tmp_path / "a.ckpt", optimizer)
    restored = DepthEstimationModel(config, seed=2)
    restored_opt = Adam(restored)
    load_checkpoint(restored, first, restored_opt)
    second = save_checkpoint(restored, tmp_path / "b.ckpt", restored_opt)
    assert first.read_bytes() == second.read_bytes(), "save -> load -> save should be byte-identical"
    assert restored_opt.state.step == 1, "Optimizer step should round trip"
    for (name, a), (_, b) in zip(model.named_buffers(), restored.named_buffers()):
        assert np.array_equal(a, b), f"Running statistic {name} should round trip"

    victim = DepthEstimationModel(config, seed=3)
    before = {name: p.data.copy() for name, p in victim.named_parameters()}
    data = first.read_bytes()
    (tmp_path / "short.ckpt").write_bytes(data[:-10])
    flipped = bytearray(data)
    flipped[40] ^= 0xFF
    (tmp_path / "flipped.ckpt").write_bytes(bytes(flipped))
    for bad in ("short.ckpt", "flipped.ckpt"):
        with pytest.raises(ChecksumError):
            load_checkpoint(victim, tmp_path / bad)
    for name, p in victim.named_parameters():
        assert np.array_equal(before[name], p.data), f"Rejected load must not touch {name}"

    other = DepthEstimationModel(model_preset("toy"), seed=0)
    with pytest.raises(CheckpointError) as error:
        load_checkpoint(other, first)
    assert "'" in str(error.value), "Mismatch error should name the offending tensor"

    params_only = save_checkpoint(model, tmp_path / "p.ckpt")
    fresh_opt = Adam(victim)
    load_checkpoint(victim, params_only, fresh_opt)
    assert fresh_opt.state.step == 0, "Missing optimizer state should leave the optimizer fresh"

    print("PASS: Byte-identical round trip, CRC rejection without mutation, mismatch naming")


def test_18_optimizer_and_schedule():
    """Test 18: One-Cycle Schedule and Adam"""
    print("Running Test 18: One-Cycle Schedule and Adam")

    total = 100
    assert one_cycle_lr(0, total) == 3e-5, "lr(0) should be exactly 3e-5"
    assert one_cycle_lr(total // 2, total) == 1e-4, "lr(T/2) should be exactly 1e-4"
    assert one_cycle_lr(total, total) == 3e-5, "lr(T) should be exactly 3e-5"
    curve = [one_cycle_lr(s, total) for s in range(total + 1)]
    assert max(curve) == curve[total // 2], "Peak should be at T/2"
    big = 2 * 10 ** 12
    mid = one_cycle_lr(big // 2, big)
    assert abs(one_cycle_lr(big // 2 - 1, big) - mid) < 1e-12, "Curve should be continuous at the midpoint"
    assert abs(one_cycle_lr(big // 2 + 1, big) - mid) < 1e-12, "Curve should be continuous at the midpoint"
    with pytest.raises(ContractError):
        one_cycle_lr(total + 1, total)

    params = {"w": np.array([1.0, -2.0], dtype=np.float32)}
    state = OptimizerState()
    adam_step(params, {"w": np.zeros(2, dtype=np.float32)}, state, lr=1e-3)
    assert np.array_equal(params["w"], [1.0, -2.0]) and state.step == 1, "Zero grads: unchanged, step advances"

    scalar = {"s": np.array([0.5], dtype=np.float32)}
    adam_step(scalar, {"s": np.array([3.0], dtype=np.float32)}, OptimizerState(), lr=1e-3)
    assert abs((0.5 - float(scalar["s"][0])) - 1e-3) < 1e-6, "First Adam step should move by about lr"

    twins = {"a": np.array([0.2], dtype=np.float32), "b": np.array([0.2], dtype=np.float32)}
    adam_step(twins, {"a": np.array([0.7], dtype=np.float32), "b": np.array([0.7], dtype=np.float32)},
              OptimizerState(), lr=1e-2)
    assert twins["a"][0] == twins["b"][0], "Identical params and grads give identical updates"

    print("PASS: Exact LR endpoints, continuity and Adam closed forms")


def test_19_training_and_evaluation(monkeypatch):
    """Test 19: Training Loop, Evaluation and Ablation"""
    print("Running Test 19: Training Loop, Evaluation and Ablation")

    toy = model_preset("toy")
    dataset = _small_dataset(4)
    frozen_cfg = TrainConfig(epochs=1, batch_size=2, val_fraction=0.0, lr_override=0.0)
    model = DepthEstimationModel(toy, seed=0)
    before = {name: p.data.copy() for name, p in model.named_parameters()}
    result = train(model, dataset, frozen_cfg)
    assert len(result.step_losses) == 2 and all(math.isfinite(v) for v in result.step_losses), "Two finite steps"
    for name, p in model.named_parameters():
        assert np.array_equal(before[name], p.data), f"lr=0 should leave {name} unchanged"

    cfg = TrainConfig(epochs=1, batch_size=2, val_fraction=0.25, lr_low=3e-4, lr_high=1e-3, seed=4)
    run_a = train(DepthEstimationModel(toy, seed=4), dataset, cfg)
    run_b = train(DepthEstimationModel(toy, seed=4), dataset, cfg)
    assert run_a.step_losses == run_b.step_losses, "Identical seeds should give identical loss curves"
    assert len(run_a.epoch_metrics) == 1, "Validation metrics should be reported per epoch"

    trained = run_a.model
    params = {name: p.data.copy() for name, p in trained.named_parameters()}
    buffers = {name: a.copy() for name, a in trained.named_buffers()}
    first, second = evaluate(trained, dataset), evaluate(trained, dataset)
    assert first == second, "Evaluation should have no hidden state"
    assert evaluate(trained, dataset[:1]) == aggregate([evaluate(trained, dataset[:1])]), "One-image dataset"
    for name, p in trained.named_parameters():
        assert np.array_equal(params[name], p.data), "Evaluation must not change parameters"
    for name, a in trained.named_buffers():
        assert np.array_equal(buffers[name], a), "Evaluation must not change running statistics"

    assert inference_size(50, 70, 32, "up") == (64, 96) and inference_size(50, 70, 32, "down") == (32, 64), \
        "Resize direction should round up or down to the multiple"

    monkeypatch.setattr("training.trainer.silog_loss", lambda *args, **kwargs: Tensor(np.float32("nan")))
    with pytest.raises(TrainingDivergedError) as error:
        train(DepthEstimationModel(toy, seed=0), dataset, frozen_cfg)
    assert error.value.step == 0, "Divergence should report the failing step"
    monkeypatch.undo()

    settings = [AblationSetting("none", "none"), AblationSetting("vertical", "vertical", 0.75)]
    outcome = ablation_study(dataset, toy, cfg, settings, seeds=(0,))
    assert [r.setting.name for r in outcome] == ["none", "vertical"], "One result per setting"
    assert all(len(r.per_seed) == 1 for r in outcome), "One report per seed"
    with pytest.raises(ConfigError):
        ablation_study(dataset, toy, frozen_cfg, settings, seeds=(0,))

    print("PASS: Frozen run, determinism, side-effect-free evaluation, divergence and ablation")


def test_20_flask_api_endpoints(client, small_model):
    """Test 20: Flask API Endpoints and Request Handling"""
    print("Running Test 20: Flask API Endpoints and Request Handling")

    health = client.get('/api/health')
    assert health.status_code == 200 and health.get_json()["data"]["services"]["depth_model"], "Healthy with model"
    info = client.get('/api/info').get_json()
    assert info["success"] and info["data"]["service_info"]["model_loaded"], "Info should describe the model"
    assert client.get('/').get_json()["data"]["swagger_ui"] == "/docs/", "Root should link the docs"

    rgb = np.random.default_rng(20).uniform(0, 1, (20, 20, 3)).astype(np.float32)
    image = base64.b64encode(encode_ppm(rgb)).decode("ascii")
    response = client.post('/api/v1/depth/predict', json={"image": image})
    assert response.status_code == 200, f"Predict should succeed: {response.get_json()}"
    data = response.get_json()["data"]
    depth_mm = parse_pgm16(base64.b64decode(data["depth_pgm"]))
    assert depth_mm.shape == (20, 20), "Depth should come back at the input size"
    expected = small_model.predict(np.rint(rgb * 255).astype(np.float32) / np.float32(255))
    assert np.max(np.abs(depth_mm / 1000.0 - expected)) <= 0.5e-3 + 1e-6, "Depth within 1 mm quantization"
    assert 0 < data["stats"]["min"] <= data["stats"]["mean"] <= data["stats"]["max"], "Stats should be ordered"

    corrupted = client.post('/api/v1/corruption/apply',
                            json={"image": image, "kind": "gaussian_noise", "severity": 2, "seed": 1})
    assert corrupted.status_code == 200, "Corruption should succeed"
    assert parse_ppm(base64.b64decode(corrupted.get_json()["data"]["image"])).shape == (20, 20, 3), "Same size"
    kinds = client.get('/api/v1/corruption/kinds').get_json()["data"]
    assert kinds["count"] == len(CORRUPTION_KINDS), "Every corruption kind should be listed"

    metrics = client.post('/api/v1/evaluation/metrics', json={"pred": [[1.0, 2.0]], "gt": [[1.3, 2.0]]})
    assert metrics.status_code == 200, "Metrics should succeed"
    assert metrics.get_json()["data"]["metrics"]["delta1"] == 0.5, "Metrics hand case over HTTP"

    missing = client.post('/api/v1/depth/predict', json={})
    assert missing.status_code == 400 and missing.get_json()["error"]["code"] == "VALIDATION_ERROR", "Missing image"
    bad_kind = client.post('/api/v1/corruption/apply', json={"image": image, "kind": "fog", "severity": 1})
    assert bad_kind.status_code == 400, "Unknown kind should be rejected"
    ragged = client.post('/api/v1/evaluation/metrics', json={"pred": [[1.0], [1.0, 2.0]], "gt": [[1.0]]})
    assert ragged.status_code == 400, "Ragged grids should be rejected"
    mismatch = client.post('/api/v1/evaluation/metrics', json={"pred": [[1.0, 2.0]], "gt": [[1.0]]})
    assert mismatch.get_json()["error"]["code"] == "DIMENSION_ERROR", "Domain errors keep their code"
    garbage = client.post('/api/v1/depth/predict', json={"image": base64.b64encode(b"P6\n1 1\n255\n").decode()})
    assert garbage.status_code == 400 and garbage.get_json()["error"]["code"] == "PARSE_ERROR", "Truncated PPM"
    not_json = client.post('/api/v1/depth/predict', data="x", content_type="text/plain")
    assert not_json.status_code == 400, "Non-JSON bodies should be rejected"
    assert client.get('/api/v1/depth/predict').status_code == 405, "GET on predict is not allowed"
    assert client.get('/api/v1/unknown').status_code == 404, "Unknown endpoints should 404"

    empty = create_app(service=DepthService()).test_client()
    assert empty.get('/api/health').status_code == 503, "No model should report 503"
    assert empty.post('/api/v1/depth/predict', json={"image": image}).status_code == 503, "Predict needs a model"

    print("PASS: Health, info, predict, corruption, metrics and error responses")


def test_21_command_line(tmp_path, capsys):
    """Test 21: Command Line Interface"""
    print("Running Test 21: Command Line Interface")

    assert cli_main(["params", "--config", "preset:toy"]) == 0, "params should succeed"
    assert "decoder 36951" in capsys.readouterr().out, "Toy decoder count with SFF"
    assert cli_main(["params", "--config", "preset:toy", "--no-sff"]) == 0, "params --no-sff should succeed"
    assert "decoder 15057" in capsys.readouterr().out, "Toy decoder count without SFF"

    assert cli_main(["gradcheck", "--op", "softmax", "--trials", "1"]) == 0, "Passing gradcheck exits 0"
    assert cli_main(["params", "--config", "preset:nope"]) == 2, "Domain errors exit 2"
    assert "error [CONFIG_ERROR]" in capsys.readouterr().err, "Error line should carry the code"

    assert cli_main(["synth", "--seed", "1", "--n", "2", "--height", "32", "--width", "32",
                     "--out", str(tmp_path / "data")]) == 0, "synth should succeed"
    assert (tmp_path / "data" / "manifest.txt").exists(), "synth should write a manifest"

    model = DepthEstimationModel(model_preset("toy"), seed=0)
    save_checkpoint(model, tmp_path / "toy.ckpt")
    rgb = np.random.default_rng(21).uniform(0, 1, (32, 32, 3)).astype(np.float32)
    write_ppm(tmp_path / "in.ppm", rgb)
    assert cli_main(["predict", "--ckpt", str(tmp_path / "toy.ckpt"), "--config", "preset:toy",
                     "--rgb", str(tmp_path / "in.ppm"), "--out", str(tmp_path / "out.pgm")]) == 0, "predict"
    written = read_pgm16(tmp_path / "out.pgm") / 1000.0
    expected = model.predict(np.rint(rgb * 255).astype(np.float32) / np.float32(255))
    assert np.max(np.abs(written - expected)) <= 0.5e-3 + 1e-6, "predict -> PGM -> load within 1 mm"

    report = tmp_path / "report.txt"
    assert cli_main(["eval", "--ckpt", str(tmp_path / "toy.ckpt"), "--config", "preset:toy",
                     "--data", str(tmp_path / "data" / "manifest.txt"), "--report", str(report)]) == 0, "eval"
    assert report.read_text(encoding="utf-8").startswith("delta1="), "Report should list metrics"

    assert cli_main(["corrupt", "--data", "synth:1,1,32,32", "--kinds", "brightness", "--severities", "1,5",
                     "--out", str(tmp_path / "c")]) == 0, "corrupt should succeed"
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == ["00000.brightness.1.ppm",
                                                                  "00000.brightness.5.ppm"], "Output names"

    print("PASS: params, gradcheck, synth, predict, eval, corrupt and error exit codes")


# ============================================================================
# TEST RUNNER
# ============================================================================

if __name__ == "__main__":
    print("Starting Local Depth Estimation System Tests")
    start_time = time.time()
    exit_code = pytest.main([__file__, "-v", "-s"])
    print(f"\nTotal execution time: {time.time() - start_time:.2f} seconds")
    os._exit(int(exit_code))
