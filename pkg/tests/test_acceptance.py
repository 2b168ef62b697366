"""Acceptance suite: one test per release criterion, slowest ones last.

Each test prints one `criterion NN ... PASS` line on success; pytest's
own PASSED/FAILED markers give the per-criterion verdict.  The desk-scale
trend runs (07, 08, 10) train real models and together take ten-odd
minutes of CPU; everything else is seconds.  Run just this file with:

    pytest tests/test_acceptance.py -v -s
"""

import numpy as np

from conftest import central_diff, rel_err
from slimlm.bench import BenchSpec, run_bench
from slimlm.cli import main as slimlm_main
from slimlm.embedding import EmbeddingPool, PoolGradient, embed_backward, embed_forward
from slimlm.lstm import (
    LstmLayerParams,
    LstmState,
    lstm_cell_backward,
    lstm_cell_forward,
    stack_backward,
    stack_forward,
)
from slimlm.mapping import (
    build_balanced_mapping,
    build_hashed_mapping,
    build_mapping,
    build_partitioned_mapping,
    usage_histogram,
)
from slimlm.model import ModelConfig, init_model
from slimlm.rng import SplitMix64, derive_seed
from slimlm.softmax import (
    FlopCounter,
    OutputLayer,
    logits_dp,
    logits_naive,
    output_backward,
    softmax_xent_batch,
)
from slimlm.trainer import TrainConfig, evaluate_ppl, loss_and_grads, train


def ok(num: int, text: str) -> None:
    print(f"\ncriterion {num:02d} {text}: PASS")


# ---------------------------------------------------------------- 01
def test_c01_dp_softmax_matches_naive_on_500_random_configs():
    rng = SplitMix64(derive_seed(1, "acceptance/dp"))
    worst = 0.0
    for _ in range(500):
        k = (1, 2, 4, 8, 16)[rng.next_below(5)]
        vocab = 1 + rng.next_below(1000)
        hidden = k * (1 + rng.next_below(max(1, 256 // k)))
        pool = k * (1 + rng.next_below(vocab))  # K..K*V in steps of K
        batch = 1 + rng.next_below(4)
        scheme = ("partitioned", "hashed")[rng.next_below(2)]
        mapping = build_mapping(scheme, vocab, k, pool, rng.next_u64())
        layer = OutputLayer(
            EmbeddingPool(
                mapping, rng.uniform_array(-1.0, 1.0, (pool, hidden // k))
            ),
            mapping,
        )
        h = rng.uniform_array(-1.0, 1.0, (batch, hidden))
        fast = logits_dp(layer, h)
        slow = logits_naive(layer, h)
        scale = np.maximum(1.0, np.abs(slow))
        worst = max(worst, float((np.abs(fast - slow) / scale).max()))
    assert worst <= 1e-10, f"worst relative logit difference {worst:.3e}"
    ok(1, f"dp softmax == naive softmax over 500 configs (worst {worst:.1e})")


# ---------------------------------------------------------------- 02
def _reference_dense_loss(embed_matrix, layers, out_matrix, x, y):
    """Plain dense-embedding LSTM LM: lookup, stack, explicit matmul
    softmax.  Shares only the LSTM cell with the package."""
    embedded = embed_matrix[x]
    state = LstmState.zeros(len(layers), x.shape[1], embed_matrix.shape[1])
    top, _, _ = stack_forward(layers, embedded, state, None)
    flat = top.reshape(x.size, -1)
    z = flat @ out_matrix.T
    z = z - z.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(x.size), y.reshape(-1)].sum()) / x.size


def test_c02_bijective_mapping_equals_dense_model():
    rng = SplitMix64(derive_seed(1, "acceptance/dense"))
    vocab, hidden, k, t, b = 150, 32, 4, 6, 3
    cfg = ModelConfig(
        vocab_size=vocab, hidden_dim=hidden, layers=2,
        scheme_in="balanced", k_in=k, m_in=k * vocab, seed=77,
    )
    model = init_model(cfg)

    # dense twin weights copied out of the pooled model
    sub = hidden // k
    embed_matrix = np.empty((vocab, hidden))
    for w in range(vocab):
        for p in range(k):
            row = model.input_mapping.table[w, p]
            embed_matrix[w, p * sub : (p + 1) * sub] = model.input_pool.data[row]
    out_matrix = model.output.pool.data.copy()

    def word_window():
        flat = rng.next_u64_array(t * b) % np.uint64(vocab)
        return flat.astype(np.int64).reshape(t, b)

    worst = 0.0
    for _ in range(100):
        x = word_window()
        y = word_window()
        state = LstmState.zeros(cfg.layers, b, hidden)
        slim_loss, _, _ = loss_and_grads(model, x, y, state)
        ref_loss = _reference_dense_loss(
            embed_matrix, model.lstm_layers, out_matrix, x, y
        )
        worst = max(worst, abs(slim_loss - ref_loss))
    assert worst <= 1e-12, f"worst per-window loss difference {worst:.3e}"
    ok(2, f"bijective pooled model == dense reference on 100 windows "
          f"(worst {worst:.1e})")


# ---------------------------------------------------------------- 03
def test_c03_gradients_match_finite_differences():
    rng = SplitMix64(derive_seed(1, "acceptance/fd"))
    errors = []

    def u(shape, lo=-1.0, hi=1.0):
        return rng.uniform_array(lo, hi, shape)

    # embed_backward on three random instances
    for _ in range(3):
        vocab, k, pool, sub = 9, 3, 7, 2
        mapping = build_balanced_mapping(vocab, k, pool, rng.next_u64())
        data = u((pool, sub))
        words = (rng.next_u64_array(6) % np.uint64(vocab)).astype(np.int64)
        words = words.reshape(3, 2)
        upstream = u((3, 2, k * sub))

        grad = PoolGradient.zeros_like(EmbeddingPool(mapping, data))
        embed_backward(grad, mapping, words, upstream)

        def loss(d):
            out = embed_forward(EmbeddingPool(mapping, d), mapping, words)
            return float((out * upstream).sum())

        errors.append(rel_err(grad.data, central_diff(loss, data)).ravel())

    # output_backward (pool and hidden gradients)
    for _ in range(3):
        vocab, k, pool, hidden, batch = 11, 2, 8, 8, 3
        mapping = build_partitioned_mapping(vocab, k, pool, rng.next_u64())
        data = u((pool, hidden // k))
        h = u((batch, hidden))
        targets = (rng.next_u64_array(batch) % np.uint64(vocab)).astype(np.int64)

        layer = OutputLayer(EmbeddingPool(mapping, data), mapping)
        _, grad_z = softmax_xent_batch(logits_dp(layer, h), targets)
        grad_h, grad_pool = output_backward(layer, h, grad_z)

        def loss_pool(d):
            lay = OutputLayer(EmbeddingPool(mapping, d), mapping)
            losses, _ = softmax_xent_batch(logits_dp(lay, h), targets)
            return float(losses.sum())

        def loss_h(hh):
            losses, _ = softmax_xent_batch(logits_dp(layer, hh), targets)
            return float(losses.sum())

        errors.append(rel_err(grad_pool, central_diff(loss_pool, data)).ravel())
        errors.append(rel_err(grad_h, central_diff(loss_h, h)).ravel())

    # lstm_cell_backward
    for _ in range(2):
        n, batch = 4, 2
        params = LstmLayerParams(u((2 * n, 4 * n), -0.5, 0.5), u((4 * n,), -0.1, 0.1))
        x, hp, cp = u((batch, n)), u((batch, n)), u((batch, n))
        r_h, r_c = u((batch, n)), u((batch, n))
        _, _, cache = lstm_cell_forward(params, x, hp, cp)
        gx, gh, gc, gw, gb = lstm_cell_backward(cache, r_h, r_c)

        def cell_loss(weight=None, bias=None, xx=None, h0=None, c0=None):
            p = LstmLayerParams(
                weight if weight is not None else params.weight,
                bias if bias is not None else params.bias,
            )
            h, c, _ = lstm_cell_forward(
                p,
                xx if xx is not None else x,
                h0 if h0 is not None else hp,
                c0 if c0 is not None else cp,
            )
            return float((h * r_h).sum() + (c * r_c).sum())

        for analytic, f, arg in (
            (gx, lambda a: cell_loss(xx=a), x),
            (gh, lambda a: cell_loss(h0=a), hp),
            (gc, lambda a: cell_loss(c0=a), cp),
            (gw, lambda a: cell_loss(weight=a), params.weight),
            (gb, lambda a: cell_loss(bias=a), params.bias),
        ):
            errors.append(rel_err(analytic, central_diff(f, arg)).ravel())

    # full stack_backward
    n, batch, steps, n_layers = 4, 2, 3, 2
    layers = [
        LstmLayerParams(u((2 * n, 4 * n), -0.4, 0.4), u((4 * n,), -0.1, 0.1))
        for _ in range(n_layers)
    ]
    embedded = u((steps, batch, n))
    proj = u((steps, batch, n))
    state = LstmState.zeros(n_layers, batch, n)
    _, _, cache = stack_forward(layers, embedded, state, None)
    grad_emb, grads = stack_backward(cache, proj)

    def stack_loss(emb=None, which=None, weight=None, bias=None):
        ls = list(layers)
        if which is not None:
            ls[which] = LstmLayerParams(
                weight if weight is not None else layers[which].weight,
                bias if bias is not None else layers[which].bias,
            )
        top, _, _ = stack_forward(
            ls, emb if emb is not None else embedded,
            LstmState.zeros(n_layers, batch, n), None,
        )
        return float((top * proj).sum())

    errors.append(rel_err(grad_emb, central_diff(lambda a: stack_loss(emb=a),
                                                 embedded)).ravel())
    for l in range(n_layers):
        errors.append(rel_err(
            grads[l][0],
            central_diff(lambda a, l=l: stack_loss(which=l, weight=a),
                         layers[l].weight),
        ).ravel())
        errors.append(rel_err(
            grads[l][1],
            central_diff(lambda a, l=l: stack_loss(which=l, bias=a),
                         layers[l].bias),
        ).ravel())

    all_errors = np.concatenate(errors)
    frac_tight = float((all_errors < 1e-6).mean())
    worst = float(all_errors.max())
    assert frac_tight >= 0.99, f"only {frac_tight:.4f} of coords under 1e-6"
    assert worst < 1e-4, f"worst relative gradient error {worst:.3e}"
    ok(3, f"finite differences: {all_errors.size} coords, "
          f"{frac_tight:.2%} under 1e-6, worst {worst:.1e}")


# ---------------------------------------------------------------- 04
def test_c04_mapping_balance_and_partition_membership():
    rng = SplitMix64(derive_seed(1, "acceptance/maps"))
    for _ in range(100):
        vocab = 2 + rng.next_below(300)
        k = 1 + rng.next_below(8)
        pool = k * (1 + rng.next_below(vocab))
        seed = rng.next_u64()

        balanced = build_balanced_mapping(vocab, k, pool, seed)
        usage = usage_histogram(balanced)
        spread = int(usage.max() - usage.min())
        assert spread <= 1, f"balanced spread {spread} at V={vocab} K={k} M={pool}"
        if (k * vocab) % pool == 0:
            assert spread == 0

        part = pool // k
        for mapping in (
            build_partitioned_mapping(vocab, k, pool, seed),
            build_hashed_mapping(vocab, k, pool, seed),
        ):
            for p in range(k):
                col = mapping.table[:, p]
                assert col.min() >= p * part and col.max() < (p + 1) * part
    ok(4, "100 random balanced mappings within spread 1; "
          "partition membership holds for partitioned/hashed")


# ---------------------------------------------------------------- 05
def test_c05_flop_counters_match_complexity_formulas():
    rng = SplitMix64(derive_seed(1, "acceptance/flops"))
    for vocab, hidden, k, pool, batch in (
        (200, 64, 4, 32, 5),
        (64, 16, 1, 64, 2),
        (500, 128, 8, 256, 20),
    ):
        mapping = build_partitioned_mapping(vocab, k, pool, rng.next_u64())
        layer = OutputLayer(
            EmbeddingPool(mapping, rng.uniform_array(-1, 1, (pool, hidden // k))),
            mapping,
        )
        h = rng.uniform_array(-1, 1, (batch, hidden))
        fast = FlopCounter()
        logits_dp(layer, h, counter=fast)
        assert fast.macs == batch * pool * (hidden // k)
        assert fast.adds == batch * vocab * (k - 1)
        slow = FlopCounter()
        logits_naive(layer, h, counter=slow)
        assert slow.macs == batch * vocab * hidden
        assert slow.adds == 0
    ok(5, "instrumented counters equal M*H/K MACs + V*(K-1) adds (dp) "
          "and V*H MACs (dense)")


# ---------------------------------------------------------------- 06
def test_c06_perplexity_formula_pins():
    vocab = 50
    cfg = ModelConfig(vocab_size=vocab, hidden_dim=8, layers=1, k_in=2, m_in=10)
    uniform = init_model(cfg)
    uniform.output.pool.data[:] = 0.0
    stream = (np.arange(400) * 7 % vocab).astype(np.int64)
    ppl = evaluate_ppl(uniform, stream, batch_size=1, bptt=11)
    assert abs(ppl - vocab) < 1e-9

    perfect_cfg = ModelConfig(vocab_size=vocab, hidden_dim=8, layers=2,
                              k_in=1, m_in=vocab, seed=3)
    perfect = init_model(perfect_cfg)
    n = perfect_cfg.hidden_dim
    for layer in perfect.lstm_layers:
        layer.weight[:] = 0.0
        layer.bias[:n] = 1e3
        layer.bias[n : 2 * n] = -1e3
        layer.bias[2 * n :] = 1e3
    perfect.output.pool.data[:] = 0.0
    perfect.output.pool.data[13, :] = 1e3
    constant = np.full(300, 13, dtype=np.int64)
    assert evaluate_ppl(perfect, constant, batch_size=1, bptt=9) == 1.0
    ok(6, f"uniform model PPL == V == {vocab}; perfect predictor PPL == 1")


# ---------------------------------------------------------------- desk runs
def _train_desk(desk_corpus, k_in, m_in, epochs, seed=21):
    vocab, train_stream, valid_stream, test_stream = desk_corpus
    cfg = ModelConfig(
        vocab_size=vocab.size, hidden_dim=128, layers=2,
        scheme_in="balanced", k_in=k_in, m_in=m_in, seed=seed,
    )
    model = init_model(cfg)
    tcfg = TrainConfig(lr=1.0, batch=20, bptt=35, max_epochs=epochs, eval_batch=10)
    result = train(model, train_stream, valid_stream, tcfg)
    test_ppl = evaluate_ppl(model, test_stream, 1, 35)
    return result, test_ppl


# ---------------------------------------------------------------- 07
def test_c07_compression_ratio_trend(desk_corpus):
    vocab = desk_corpus[0]
    k = 8
    ppl = {}
    for ratio, m_in in (("1", k * vocab.size), ("1/8", vocab.size),
                        ("1/64", vocab.size // 8)):
        _, ppl[ratio] = _train_desk(desk_corpus, k, m_in, epochs=5)
    rel8 = abs(ppl["1/8"] - ppl["1"]) / ppl["1"]
    rel64 = abs(ppl["1/64"] - ppl["1"]) / ppl["1"]
    assert rel8 <= 0.10, f"ratio 1/8 off by {rel8:.2%} (ppl {ppl})"
    assert rel64 <= 0.10, f"ratio 1/64 off by {rel64:.2%} (ppl {ppl})"
    ok(7, "input compression 1 -> 1/8 -> 1/64 moves test PPL "
          f"{ppl['1']:.1f} -> {ppl['1/8']:.1f} ({rel8:.1%}) -> "
          f"{ppl['1/64']:.1f} ({rel64:.1%}), within the 10% band")


# ---------------------------------------------------------------- 08
def test_c08_single_subvector_degrades_ppl(desk_corpus):
    vocab = desk_corpus[0]
    ppl = {}
    for k in (1, 4, 8):
        m_in = (k * vocab.size) // 8  # constant compression ratio 1/8
        _, ppl[k] = _train_desk(desk_corpus, k, m_in, epochs=10)
    assert ppl[1] > ppl[4] and ppl[1] > ppl[8], f"K=1 not worst: {ppl}"
    ok(8, f"at ratio 1/8, K=1 test PPL {ppl[1]:.1f} exceeds "
          f"K=4 ({ppl[4]:.1f}) and K=8 ({ppl[8]:.1f})")


# ---------------------------------------------------------------- 09
def test_c09_output_layer_timing_order():
    spec = BenchSpec(
        vocab_size=50_000, hidden_dim=512, parts=8, pool_size=4096,
        batch=20, reps=10, warmup=3, threads=1,
    )
    result = run_bench(spec)
    assert not result.errors, result.errors
    med = {vr.variant: vr.median_s for vr in result.variants}
    assert med["se_dp"] < med["dense"] < med["hash_on_the_fly"], med
    ok(9, f"median timings: se_dp {med['se_dp'] * 1e3:.1f} ms < dense "
          f"{med['dense'] * 1e3:.1f} ms < hash_on_the_fly "
          f"{med['hash_on_the_fly'] * 1e3:.1f} ms")


# ---------------------------------------------------------------- 10
def test_c10_nce_matches_full_softmax_twin(desk_corpus):
    vocab, train_stream, valid_stream, _ = desk_corpus
    results = {}
    for loss in ("full", "nce"):
        cfg = ModelConfig(
            vocab_size=vocab.size, hidden_dim=64, layers=1,
            k_in=8, m_in=1024, loss=loss, nce_k=20, seed=21,
        )
        model = init_model(cfg)
        tcfg = TrainConfig(lr=1.0, optimizer="adagrad", batch=10, bptt=20,
                           max_epochs=20, eval_batch=10)
        results[loss] = train(model, train_stream, valid_stream, tcfg)
    nce, full = results["nce"], results["full"]
    assert nce.best_valid_ppl < nce.init_valid_ppl
    gap = nce.best_valid_ppl / full.best_valid_ppl - 1.0
    assert gap <= 0.20, (
        f"nce {nce.best_valid_ppl:.1f} vs full {full.best_valid_ppl:.1f} "
        f"({gap:+.1%})"
    )
    ok(10, f"NCE twin valid PPL {nce.best_valid_ppl:.1f} vs full softmax "
           f"{full.best_valid_ppl:.1f} ({gap:+.1%}, within 20%); "
           f"init was {nce.init_valid_ppl:.0f}")


# ---------------------------------------------------------------- 11
def test_c11_cmd_train_is_byte_deterministic(tmp_path, capsys):
    from slimlm.synthetic import generate_text

    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for name, seed, n in (("train", 1, 2000), ("valid", 2, 300)):
        (corpus / f"{name}.txt").write_text(
            generate_text(n, seed, n_types=40, p_eos=0.1), encoding="utf-8"
        )

    def run(out):
        rc = slimlm_main([
            "train",
            "--train", str(corpus / "train.txt"),
            "--valid", str(corpus / "valid.txt"),
            "--out", str(out),
            "--hidden", "16", "--layers", "2", "--k-in", "4", "--m-in", "32",
            "--k-out", "4", "--m-out", "16", "--batch", "5", "--bptt", "10",
            "--max-epochs", "2", "--eval-batch", "2", "--seed", "99",
            "--dropout", "0.1", "--optimizer", "adagrad", "--lr", "0.4",
        ])
        assert rc == 0

    run(tmp_path / "a")
    run(tmp_path / "b")
    capsys.readouterr()
    log_a = (tmp_path / "a" / "train_log.csv").read_bytes()
    log_b = (tmp_path / "b" / "train_log.csv").read_bytes()
    ckpt_a = (tmp_path / "a" / "model.ckpt").read_bytes()
    ckpt_b = (tmp_path / "b" / "model.ckpt").read_bytes()
    assert log_a == log_b, "training logs differ between identical runs"
    assert ckpt_a == ckpt_b, "checkpoints differ between identical runs"
    assert len(log_a.splitlines()) == 3
    ok(11, f"two identical cmd_train runs: train_log.csv ({len(log_a)} bytes) "
           f"and model.ckpt ({len(ckpt_a)} bytes) byte-identical")
