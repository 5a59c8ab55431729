"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned at the top of the module.  Run with
``pytest tests/test_acceptance.py -v`` (the lines are printed even without -s).
"""

import itertools
import json
import math
import statistics
import time

import mpmath
import numpy as np
import pytest
from scipy import stats

from neurotune.cli import main as cli_main
from neurotune.config import parse_experiment_config
from neurotune.diffcore import Adam, Module, Tensor, finite_diff_check, ops
from neurotune.evalharness import (
    HarnessContext,
    Variant,
    fit,
    paired_ttest,
    perturb_backbone,
    prepare_inputs,
    split_subject_kfold,
    take,
    TrainSettings,
)
from neurotune.lora import TARGET_KINDS, LoraConfig, inject, max_conv_rank, merge, model_conv_rank, \
    remove, trainable_param_count
from neurotune.modelzoo import Attention, Conv2d, Linear, build_model, load_model_config
from neurotune.signalprep import Montage, Recording, bandpass, car, map_channels, notch
from neurotune.synthdata import ClassSpec, SynthSpec, generate

from conftest import SMALL_LABRAM
from test_diffcore import BINARY, UNARY, projected

RANKS = (1, 2, 4, 8, 16)
COMBOS = [c for n in (1, 2, 3) for c in itertools.combinations(TARGET_KINDS, n)]

TOL_MERGE_REL = 1e-9
TOL_GRAD_REL = 1e-4
GRAD_H = 1e-5
TOL_TTEST = 1e-6
NOTCH_MIN_DB = 20.0
BANDPASS_PASS_REL = 0.10
BANDPASS_STOP_DB = 20.0
CAR_MAX_MEAN = 1e-9
PEFT_MAX_GAP = 0.02
PEFT_MAX_FRACTION = 0.10

LAYER_KIND = {"attention": "attention_qkv", "fully_connected": "fully_connected", "conv": "conv"}


@pytest.fixture
def verdict(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return _report


def small_labram(**extra):
    return build_model(load_model_config("labram_like_reference", **{**SMALL_LABRAM, **extra}))


def enumerate_trainable(model):
    return sum(math.prod(p.shape) for _, p in model.named_parameters() if p.requires_grad)


def formula(model, targets, rank, conv_rank):
    total = 0
    for _, m in model.named_modules():
        if m.kind == "head":
            total += sum(p.size for _, p in m.direct_parameters())
        if any(m.kind == LAYER_KIND[k] for k in targets):
            w = m.weight.shape
            d, k = w[0], math.prod(w[1:])
            total += (conv_rank if isinstance(m, Conv2d) else rank) * (d + k)
    return total


# 1 -------------------------------------------------------------------------------------

def test_criterion_01_count_law(verdict):
    t0 = time.perf_counter()
    model = build_model(load_model_config("labram_like_reference"))
    mismatches = []
    for targets, r in itertools.product(COMBOS, RANKS):
        am = inject(model, LoraConfig(targets=targets, rank=r))
        counts = (trainable_param_count(am), formula(model, targets, r, am.conv_rank), enumerate_trainable(model))
        if len(set(counts)) != 1:
            mismatches.append((targets, r, counts))
        remove(am)
    elapsed = time.perf_counter() - t0
    verdict(1, not mismatches and elapsed < 1.0,
            f"count law on {len(COMBOS) * len(RANKS)} configs, mismatches={mismatches}, {elapsed:.2f}s (< 1 s)")


# 2 -------------------------------------------------------------------------------------

def test_criterion_02_conv_rank(verdict):
    r_labram = model_conv_rank(build_model(load_model_config("labram_like_reference")))
    r_gpt = model_conv_rank(build_model(load_model_config("neurogpt_encoder_like_reference")))
    rng = np.random.default_rng(2)
    bad = []
    tested = 0
    while tested < 1000:
        d, k = (int(v) for v in rng.integers(1, 5000, 2))
        if d + k > d * k:
            continue
        r = max_conv_rank(d, k)
        if not (r & (r - 1) == 0 and r * (d + k) <= d * k < 2 * r * (d + k)):
            bad.append((d, k, r))
        tested += 1
    verdict(2, r_labram == 4 and r_gpt == 8 and not bad,
            f"r_c labram={r_labram} (4), neurogpt={r_gpt} (8), bound violations on 1000 pairs: {len(bad)}")


# 3 -------------------------------------------------------------------------------------

def test_criterion_03_merge_equivalence(verdict):
    t0 = time.perf_counter()
    worst, zero_ok = {}, True
    for kind in TARGET_KINDS:
        base = small_labram().eval()
        x = base.example_input(batch=100, rng=np.random.default_rng(30))
        x["attention_length"] = np.random.default_rng(32).integers(1, 33, 100)
        x = take(x, np.arange(100))  # trims the padding beyond the longest sequence
        ref = base(x).data.copy()
        rng = np.random.default_rng(31)
        am = inject(base, LoraConfig(targets=[kind], rank=2), rng).eval()
        zero_ok &= bool(np.array_equal(am(x).data, ref))
        zero_ok &= bool(np.array_equal(merge(am).eval()(x).data, ref))
        for a in am.adapters.values():
            a.B.data = rng.normal(0, 0.05, a.B.shape)
        adapted, merged = am(x).data, merge(am).eval()(x).data
        worst[kind] = float(np.max(np.abs(adapted - merged)) / np.max(np.abs(adapted)))
    elapsed = time.perf_counter() - t0
    ok = zero_ok and max(worst.values()) <= TOL_MERGE_REL and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(3, ok, f"max rel diff per kind ({detail}) <= {TOL_MERGE_REL:g}; zero-B bit-identical={zero_ok}; "
                   f"{elapsed:.1f}s (< 10 s)")


# 4 -------------------------------------------------------------------------------------

def test_criterion_04_frozen_base(verdict):
    rng = np.random.default_rng(40)
    model = small_labram()
    before = {k: v.copy() for k, v in model.state_dict().items() if not k.startswith("head.")}
    am = inject(model, LoraConfig(rank=2, dropout=0.5), rng)
    opt = Adam(model.trainable_parameters(), lr=1e-2)
    x = model.example_input(batch=4, rng=rng)
    x["attention_length"] = np.array([16, 12, 9, 16])
    x = take(x, np.arange(4))
    y = np.array([0, 1, 1, 0])
    am.train().set_rng(np.random.default_rng(41))
    for _ in range(100):
        opt.zero_grad()
        ops.cross_entropy(am(x), y).backward()
        opt.step()
    after = model.state_dict()
    changed = [k for k, v in before.items() if not np.array_equal(after[k], v)]
    moved = sum(bool(a.B.data.any()) for a in am.adapters.values())
    verdict(4, not changed and moved == len(am.adapters),
            f"100 Adam steps: {len(before)} base tensors unchanged, changed={changed}, "
            f"adapters updated {moved}/{len(am.adapters)}")


# 5 -------------------------------------------------------------------------------------

class MixedNet(Module):
    """conv -> attention -> fully connected."""

    def __init__(self, rng):
        super().__init__()
        self.conv = Conv2d(1, 2, (1, 3))
        self.attn = Attention(6, 2)
        self.fc = Linear(6, 3)
        self.conv.reset_parameters(rng)
        for lin in (self.attn.qkv, self.attn.proj, self.fc):
            lin.reset_parameters(rng, 0.3)

    def forward(self, x):
        h = self.conv(Tensor(x))  # (B, 2, 4, 3)
        b = h.shape[0]
        tokens = ops.reshape(ops.transpose(h, (0, 2, 1, 3)), (b, 4, 6))
        return self.fc(ops.mean(self.attn(tokens), axis=1))


def _op_checks(rng):
    checks = {}
    for name, fn in UNARY.items():
        checks[name] = projected(fn, (3, 4, 5), rng=rng)
    for name, (fn, sa, sb) in BINARY.items():
        checks[name] = projected(fn, sa, sb, rng=rng)
    checks["log"] = projected(ops.log, (3, 4), rng=rng, positive=True)
    logits = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    labels = rng.integers(0, 3, 5)
    checks["cross_entropy"] = (lambda: ops.cross_entropy(logits, labels), [logits])
    x = Tensor(rng.standard_normal((2, 3, 6)), requires_grad=True)
    w, b = Tensor(rng.standard_normal(6), requires_grad=True), Tensor(rng.standard_normal(6), requires_grad=True)
    r = rng.standard_normal((2, 3, 6))
    checks["layer_norm"] = (lambda: ops.sum(ops.mul(ops.layer_norm(x, w, b), r)), [x, w, b])
    checks["dropout"] = projected(lambda a: ops.dropout(a, 0.5, np.random.default_rng(0), True), (4, 5), rng=rng)
    xc = Tensor(rng.standard_normal((2, 4, 5, 7)), requires_grad=True)
    wc = Tensor(0.5 * rng.standard_normal((4, 2, 2, 3)), requires_grad=True)
    bc = Tensor(rng.standard_normal(4), requires_grad=True)
    rc = rng.standard_normal(ops.conv2d(xc, wc, bc, 2, 1, 2).shape)
    checks["conv2d"] = (lambda: ops.sum(ops.mul(ops.conv2d(xc, wc, bc, 2, 1, 2), rc)), [xc, wc, bc])
    return checks


def test_criterion_05_gradients(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(50)
    errors = {name: finite_diff_check(loss, params, h=GRAD_H).max_error
              for name, (loss, params) in _op_checks(rng).items()}
    net = MixedNet(rng)
    am = inject(net, LoraConfig(rank=1, conv_rank=1), rng)
    for a in am.adapters.values():
        a.B.data = rng.normal(0, 0.3, a.B.shape)
    for _, p in net.named_parameters():
        p.requires_grad = True
    x = rng.standard_normal((3, 1, 4, 5))
    y = rng.integers(0, 3, 3)
    errors["mixed_conv_attention_fc_with_adapters"] = finite_diff_check(
        lambda: ops.cross_entropy(net(x), y), dict(net.named_parameters()), h=GRAD_H).max_error
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    verdict(5, errors[worst] < TOL_GRAD_REL and elapsed < 60,
            f"{len(errors)} gradchecks, worst {worst} {errors[worst]:.1e} (< {TOL_GRAD_REL:g}), {elapsed:.1f}s (< 60 s)")


# 6 -------------------------------------------------------------------------------------

def test_criterion_06_heads(verdict):
    found = {}
    for name in ("labram_like_reference", "neurogpt_full_like_reference", "neurogpt_encoder_like_large"):
        model = build_model(load_model_config(name, n_cls=2))
        found[name] = sum(p.size for n, p in model.named_parameters() if n.startswith("head."))
    expected = [402, 270_690, 561_506]
    verdict(6, list(found.values()) == expected, f"head params {list(found.values())} == {expected}")


# 7 -------------------------------------------------------------------------------------

def _oracle_ttest(a, b):
    """Student-t by mpmath quadrature of the density, t from the statistics module."""
    d = [x - y for x, y in zip(a, b)]
    n = len(d)
    t = statistics.fmean(d) * math.sqrt(n) / statistics.stdev(d)
    nu = mpmath.mpf(n - 1)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    tail = mpmath.quad(lambda s: c * (1 + s * s / nu) ** (-(nu + 1) / 2), [abs(t), mpmath.inf])
    return t, float(2 * tail)


def test_criterion_07_ttest(verdict):
    mpmath.mp.dps = 30
    rng = np.random.default_rng(70)
    worst_t = worst_p = worst_scipy = 0.0
    swap_ok = True
    for _ in range(100):
        a = rng.uniform(0.4, 0.9, 10)
        b = a + rng.normal(rng.uniform(-0.05, 0.05), 0.03, 10)
        res = paired_ttest(a, b)
        t_ref, p_ref = _oracle_ttest(a, b)
        worst_t = max(worst_t, abs(res.t - t_ref))
        worst_p = max(worst_p, abs(res.p - p_ref))
        worst_scipy = max(worst_scipy, abs(res.p - stats.ttest_rel(a, b).pvalue))
        swapped = paired_ttest(b, a)
        swap_ok &= swapped.t == -res.t and abs(swapped.p - res.p) <= 1e-12
    zero = paired_ttest([1, -1, 1, -1], [0, 0, 0, 0])
    ok = worst_t <= TOL_TTEST and worst_p <= TOL_TTEST and zero.t == 0.0 and zero.p == 1.0 and swap_ok
    verdict(7, ok, f"100 n=10 vectors: max |dt| {worst_t:.1e}, max |dp| {worst_p:.1e} vs quadrature oracle "
                   f"(scipy {worst_scipy:.1e}); d=[1,-1,1,-1] -> t={zero.t}, p={zero.p}; swap negates t={swap_ok}")


# 8 -------------------------------------------------------------------------------------

def _amplitude(x, freq, fs):
    return 2 * np.abs(np.fft.rfft(x))[int(round(freq * len(x) / fs))] / len(x)


def _adversarial_mapping_ok(rng, threshold):
    """Targets with one source just inside and one just outside the threshold,
    plus targets whose nearest source is just outside."""
    n_tgt = 6
    tgt = rng.uniform(-300, 300, (n_tgt, 3))
    src, expected = [], []
    for j in range(n_tgt):
        u, v = rng.standard_normal((2, 3))
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        if j % 2 == 0:
            expected.append(len(src))
            src += [tgt[j] + u * (threshold - 1e-3), tgt[j] + v * (threshold - 1e-6)]  # nearest listed first
        else:
            expected.append(None)
            src += [tgt[j] + u * (threshold + 1e-6)]
    src = np.array(src)
    d = np.linalg.norm(tgt[:, None] - src[None], axis=-1)
    for j, e in enumerate(expected):  # skip draws where another target's source interferes
        if (e is None and d[j].min() <= threshold) or (e is not None and np.argmin(d[j]) != e):
            return None
    data = rng.standard_normal((len(src), 20))
    rec = Recording(data, 100.0, tuple(f"S{i}" for i in range(len(src))), src)
    out, _ = map_channels(rec, Montage(tuple(f"T{j}" for j in range(n_tgt)), tgt), threshold)
    return all(np.array_equal(out.data[j], data[e] if e is not None else np.zeros(20)) for j, e in enumerate(expected))


def test_criterion_08_preprocessing(verdict):
    t0 = time.perf_counter()
    fs = 250.0
    t = np.arange(int(10 * fs)) / fs
    impulse = np.zeros(4096)
    impulse[2048] = 1.0
    resp = np.abs(np.fft.rfft(notch(impulse, 50.0, fs)))
    notch_db = 20 * np.log10(resp[int(round(50.0 * 4096 / fs))] + 1e-300)
    line_db = 20 * np.log10(_amplitude(notch(np.sin(2 * np.pi * 50 * t), 50.0, fs), 50, fs))
    pass_err = max(abs(_amplitude(bandpass(np.sin(2 * np.pi * f * t), 0.5, 45.0, fs), f, fs) - 1) for f in (5, 10, 30))
    stop_db = max(20 * np.log10(_amplitude(bandpass(np.sin(2 * np.pi * f * t), 0.5, 45.0, fs), f, fs))
                  for f in (80, 100))
    rng = np.random.default_rng(80)
    car_mean = max(float(np.abs(car(rng.standard_normal((c, 500)) * 50).mean(axis=0)).max()) for c in (2, 8, 64))
    draws = [_adversarial_mapping_ok(rng, th) for th in (10.0, 30.0, 45.0) for _ in range(30)]
    checked = [d for d in draws if d is not None]
    mapping_ok = len(checked) >= 60 and all(checked)
    elapsed = time.perf_counter() - t0
    ok = (notch_db <= -NOTCH_MIN_DB and line_db <= -NOTCH_MIN_DB and pass_err <= BANDPASS_PASS_REL
          and stop_db <= -BANDPASS_STOP_DB and car_mean < CAR_MAX_MEAN and mapping_ok and elapsed < 10)
    verdict(8, ok, f"notch {notch_db:.0f} dB impulse / {line_db:.0f} dB tone; bandpass in-band err {pass_err:.3f}, "
                   f"stop {stop_db:.0f} dB; CAR mean {car_mean:.1e}; adversarial mapping ok={mapping_ok} "
                   f"on {len(checked)} montages; "
                   f"{elapsed:.1f}s")


# 9 -------------------------------------------------------------------------------------

def test_criterion_09_subject_independence(verdict):
    rng = np.random.default_rng(90)
    overlaps = misplaced = 0
    for _ in range(10_000):
        k = int(rng.integers(2, 11))
        n = int(rng.integers(k, 41))
        subjects = np.repeat(rng.permutation(1000)[:n], 2)
        plan = split_subject_kfold(subjects, k, int(rng.integers(0, 2**32)))
        seen = np.zeros(n, dtype=int)
        index = {s: i for i, s in enumerate(sorted(set(subjects.tolist())))}
        for f in range(k):
            val = set(plan.fold_subjects(f))
            train = set(plan.assignments) - val
            overlaps += bool(train & val)
            for s in val:
                seen[index[s]] += 1
        misplaced += int((seen != 1).sum())
    verdict(9, overlaps == 0 and misplaced == 0,
            f"10,000 plans: overlapping folds {overlaps}, subjects not validated exactly once {misplaced}")


# 10 ------------------------------------------------------------------------------------

PEFT_BACKBONE = {"conv_filters": 4, "norm_groups": 2, "embed_dim": 100, "depth": 2, "heads": 4, "mlp_dim": 200}


@pytest.mark.slow
def test_criterion_10_peft_property(verdict):
    t0 = time.perf_counter()
    cfg = parse_experiment_config({"model": "labram_like_reference", "model_overrides": PEFT_BACKBONE,
                                   "harness": {"epochs": 10, "folds": 5}, "seed": 0}, env={})
    model_cfg = cfg.resolved_model()
    # "pre-training" on a related source task (different frequencies and channels), then perturbation
    source = generate(SynthSpec(subjects=10, seed=101, classes=(ClassSpec(6.0, (1, 3, 6)), ClassSpec(35.0, (0, 2, 5)))))
    backbone = build_model(model_cfg)
    fit(backbone, prepare_inputs(source, model_cfg), source.y, TrainSettings(3, 32, 5e-4), seed=7)
    perturb_backbone(backbone, 0.5, np.random.default_rng(3))
    ctx = HarnessContext.build(cfg, generate(SynthSpec()), base_state=backbone.state_dict())
    variants = {"head_only": Variant("head_only"), "full": Variant("full"),
                "lora": Variant.adapters(TARGET_KINDS, 2)}
    folds = (0, 1, 2)
    runs = {name: [ctx.run_fold(v, f) for f in folds] for name, v in variants.items()}
    acc = {name: float(np.mean([r.accuracy for r in rs])) for name, rs in runs.items()}
    fraction = runs["lora"][0].trainable_params / runs["lora"][0].total_params
    elapsed = time.perf_counter() - t0
    ok = (acc["lora"] >= acc["full"] - PEFT_MAX_GAP and fraction < PEFT_MAX_FRACTION
          and acc["lora"] > acc["head_only"] and acc["full"] > acc["head_only"] and elapsed < 600)
    verdict(10, ok, f"folds {folds}: lora {acc['lora']:.3f}, full {acc['full']:.3f}, head-only {acc['head_only']:.3f}; "
                    f"lora trains {runs['lora'][0].trainable_params}/{runs['lora'][0].total_params} "
                    f"({100 * fraction:.1f}%); {elapsed:.0f}s (< 600 s)")


# 11 ------------------------------------------------------------------------------------

def test_criterion_11_reproducibility(verdict, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("NEUROTUNE_SEED", raising=False)
    data = tmp_path / "data"
    assert cli_main(["synth", "--out", str(data), "--subjects", "4", "--trials-per-subject", "4",
                     "--duration-s", "2"]) == 0
    harness = {"epochs": 1, "folds": 2, "batch_size": 8, "ranks": [1, 2], "dropouts": [0.0, 0.5],
               "layer_combos": [["attention"], ["conv"], ["fully_connected", "conv"]]}
    outputs = []
    for name in ("first", "second"):
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps({"model": "labram_like_reference", "model_overrides": SMALL_LABRAM,
                                   "data": str(data), "harness": harness, "seed": 11,
                                   "output_dir": str(tmp_path / name)}))
        assert cli_main(["ablate", "--config", str(cfg)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).glob("*.csv"))})
    capsys.readouterr()
    same = outputs[0] == outputs[1] and len(outputs[0]) == 6
    verdict(11, same, f"two ablate executions: {len(outputs[0])} aggregate CSVs, byte-identical={same}")
