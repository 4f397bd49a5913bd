"""Two-stage training.

``pretrain`` runs large-margin self-supervised contrastive learning plus MLM
on clean/noisy transcript pairs. ``finetune`` clones the result into a
clean-transcript model and an ASR-transcript model and trains them jointly
with cross-entropy, a Jensen-Shannon mimicry loss, large-margin supervised
contrastive losses and cached self-distillation under a cyclical weight.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .corpus import build_vocab, make_batches, mask_tokens, pad_rows, tokenize
from .encoder import (
    EmbeddingBatch,
    backward,
    classify,
    clone_params,
    encode,
    init_params,
    mlm_logits,
)
from .errors import SchemaMismatch, ValidationError
from .metrics import (
    MetricsReport,
    cluster_distances,
    evaluate_accuracy,
    margin_occupancy,
    per_class_accuracy,
)
from .numeric import pairwise_distance_matrix, softmax_backward, softmax_with_temperature
from .schedule import adam_step, annealing_coefficient, init_optim_state, warmup_lr

log = logging.getLogger(__name__)

PRETRAIN_LOG_FIELDS = ["iter", "epoch", "L_sc", "L_reg", "L_mlm", "lr", "total"]
FINETUNE_LOG_FIELDS = ["iter", "epoch", "L_ce", "L_mut", "L_creg", "L_d", "gamma", "lr", "total"]


@dataclass
class PretrainResult:
    params: object
    vocab: object
    log: list = field(default_factory=list)


@dataclass
class FinetuneResult:
    m_clean: object
    m_asr: object
    log: list = field(default_factory=list)
    epoch_metrics: list = field(default_factory=list)
    cache_clean: dict = field(default_factory=dict)
    cache_noisy: dict = field(default_factory=dict)


def _adam(cfg, state, params, grads, lr):
    return adam_step(state, params, grads, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)


def _mask_rows(token_rows, ratio, rng):
    masked_rows, positions, targets = [], [], []
    for r, row in enumerate(token_rows):
        masked, picked, tgt = mask_tokens(row, ratio, rng)
        masked_rows.append(masked)
        positions.extend((r, int(c)) for c in picked)
        targets.extend(int(t) for t in tgt)
    return (np.array(masked_rows), np.array(positions, dtype=np.int64).reshape(-1, 2),
            np.array(targets, dtype=np.int64))


def pretrain_step(params, cfg, batch, mask_rng):
    """Loss components and parameter gradient for one pre-training batch."""
    n = len(batch)
    width = max(batch.clean_token_rows.shape[1], batch.noisy_token_rows.shape[1])
    tokens = pad_rows(list(batch.clean_token_rows) + list(batch.noisy_token_rows), width)
    h = encode(params, tokens).rows
    emb = EmbeddingBatch.paired(h[:n], h[n:], batch.example_ids)
    l_sc = L.self_supervised_contrastive(emb, cfg.tau_sc)
    l_reg = L.polarization_on_embeddings(emb, cfg.margin())
    masked, positions, targets = _mask_rows(tokens, cfg.mask_ratio, mask_rng)
    l_mlm = L.mlm_loss(mlm_logits(params, masked, positions), targets)
    total = L.compose_pretrain(l_sc, l_reg, l_mlm, cfg.lambda_reg, cfg.lambda_pt)
    grads = backward(params, tokens, grad_embeddings=total.input_grads.get("h"))
    if "mlm_logits" in total.input_grads:
        grads = grads + backward(params, masked, masked_positions=positions,
                                 grad_mlm_logits=total["mlm_logits"])
    return {"L_sc": l_sc.value, "L_reg": l_reg.value, "L_mlm": l_mlm.value,
            "total": total.value}, grads


def pretrain(cfg, corpus, vocab=None):
    """Pre-train one encoder for ``cfg.pretrain_steps`` Adam updates."""
    vocab = build_vocab(corpus, cfg.min_count) if vocab is None else vocab
    params = init_params(len(vocab), cfg.d, cfg.d_out, corpus.num_classes, cfg.seed)
    state = init_optim_state(params)
    mask_rng = np.random.default_rng([cfg.seed, 101])
    records = []
    step, epoch = 0, 0
    while step < cfg.pretrain_steps:
        batches = make_batches(corpus, cfg.pretrain_batch_pairs, cfg.seed, epoch, vocab, cfg.max_len)
        if not batches:
            raise ValidationError("corpus too small for a single pre-training batch")
        for batch in batches:
            if step >= cfg.pretrain_steps:
                break
            step += 1
            values, grads = pretrain_step(params, cfg, batch, mask_rng)
            lr = warmup_lr(step, cfg.peak_lr, cfg.warmup_steps)
            state, params = _adam(cfg, state, params, grads, lr)
            records.append({"iter": step, "epoch": epoch, **values, "lr": lr})
        epoch += 1
    log.info("pre-training done: %d steps, final L_sc %.4f", step, records[-1]["L_sc"] if records else float("nan"))
    return PretrainResult(params, vocab, records)


def encode_texts(params, vocab, texts, max_len, chunk=256):
    out = []
    for start in range(0, len(texts), chunk):
        rows = pad_rows([tokenize(t, vocab, max_len) for t in texts[start:start + chunk]])
        out.append(encode(params, rows).rows)
    return np.vstack(out) if out else np.zeros((0, params.d_out))


def predict(params, vocab, corpus, side="noisy", max_len=32):
    """Class probabilities and argmax labels (ties go to the lowest index)."""
    if side not in ("clean", "noisy"):
        raise ValidationError(f"side must be 'clean' or 'noisy', got {side!r}")
    if corpus.num_classes != params.num_classes:
        raise SchemaMismatch(f"corpus has {corpus.num_classes} classes, model has {params.num_classes}")
    if len(vocab) != params.vocab_size:
        raise SchemaMismatch("vocabulary size does not match the model")
    texts = [getattr(ex, side) for ex in corpus.examples]
    probs = softmax_with_temperature(classify(params, encode_texts(params, vocab, texts, max_len)))
    return probs, np.argmax(probs, axis=1)


def _one_hot(labels, num_classes):
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


@dataclass
class _SideTerms:
    ce: L.LossResult
    creg: L.LossResult
    distill: L.LossResult
    sup: float
    reg: float
    probs: np.ndarray


def _side_terms(params, tokens, labels, prev, cfg, lambda_reg_side):
    h = encode(params, tokens).rows
    logits = classify(params, h)
    ce = L.cross_entropy(logits, labels, cfg.ce_reduction)
    sup = L.supervised_contrastive(h, labels, cfg.tau_c)
    reg = L.polarization_on_embeddings(h, cfg.margin())
    creg = L.combine([(1.0, sup), (lambda_reg_side, reg)])
    distill = L.self_distillation(prev, logits, cfg.tau_d)
    return _SideTerms(ce, creg, distill, sup.value, reg.value, softmax_with_temperature(logits))


def _zero_terms():
    zero = L.LossResult(0.0, {})
    return _SideTerms(zero, zero, zero, 0.0, 0.0, None)


def finetune(cfg, pretrained, vocab, train, dev=None):
    """Jointly fine-tune the clean-transcript and ASR-transcript models.

    With ``cfg.use_manual_transcripts`` false the clean model is never run or
    updated and every clean-side term is exactly 0.
    """
    if train.num_classes != pretrained.num_classes:
        raise SchemaMismatch("training corpus and checkpoint disagree on the class count")
    m_clean, m_asr = clone_params(pretrained), clone_params(pretrained)
    st_clean, st_asr = init_optim_state(m_clean), init_optim_state(m_asr)
    use_clean = cfg.use_manual_transcripts
    anneal = cfg.anneal_config()
    row_of = {ex.id: i for i, ex in enumerate(train.examples)}
    cache_clean = _one_hot(train.labels, train.num_classes)
    cache_noisy = cache_clean.copy()
    records, epoch_metrics = [], []
    t = 0
    for epoch in range(1, cfg.finetune_epochs + 1):
        for batch in make_batches(train, cfg.finetune_batch_pairs, cfg.seed, epoch, vocab, cfg.max_len):
            t += 1
            gamma = annealing_coefficient(t, anneal) if cfg.anneal == "cyclic" else 1.0
            gamma *= cfg.gamma_scale
            lr = warmup_lr(t, cfg.peak_lr, cfg.warmup_steps)
            rows = np.array([row_of[i] for i in batch.example_ids])
            y = batch.labels

            q = _side_terms(m_asr, batch.noisy_token_rows, y, cache_noisy[rows], cfg, cfg.lambda_reg_q)
            if use_clean:
                p = _side_terms(m_clean, batch.clean_token_rows, y, cache_clean[rows], cfg, cfg.lambda_reg_p)
                mut = L.mutual_learning(p.probs, q.probs)
            else:
                p = _zero_terms()
                mut = L.LossResult(0.0, {})

            # gradients on logits / embeddings, per model
            g_logits_q = q.ce["logits"] + gamma * q.distill["logits"] if gamma else q.ce["logits"]
            g_h_q = cfg.beta * q.creg["h"] if cfg.beta else None
            if use_clean:
                g_logits_p = p.ce["logits"] + gamma * p.distill["logits"] if gamma else p.ce["logits"]
                g_h_p = cfg.beta * p.creg["h"] if cfg.beta else None
                if cfg.alpha:
                    g_logits_p = g_logits_p + cfg.alpha * softmax_backward(p.probs, mut["probs_clean"])
                    g_logits_q = g_logits_q + cfg.alpha * softmax_backward(q.probs, mut["probs_noisy"])
                grads_p = backward(m_clean, batch.clean_token_rows, grad_embeddings=g_h_p, grad_logits=g_logits_p)
                st_clean, m_clean = _adam(cfg, st_clean, m_clean, grads_p, lr)
            grads_q = backward(m_asr, batch.noisy_token_rows, grad_embeddings=g_h_q, grad_logits=g_logits_q)
            st_asr, m_asr = _adam(cfg, st_asr, m_asr, grads_q, lr)

            l_ce = p.ce.value + q.ce.value
            l_creg = p.creg.value + q.creg.value
            l_d = p.distill.value + q.distill.value
            total = L.compose_finetune(*(L.LossResult(v) for v in (l_ce, mut.value, l_creg, l_d)),
                                       cfg.alpha, cfg.beta, gamma).value
            records.append({
                "iter": t, "epoch": epoch, "L_ce": l_ce, "L_mut": mut.value, "L_creg": l_creg,
                "L_d": l_d, "gamma": gamma, "lr": lr, "total": total,
                "L_ce_p": p.ce.value, "L_ce_q": q.ce.value, "L_creg_p": p.creg.value,
                "L_creg_q": q.creg.value, "L_d_p": p.distill.value, "L_d_q": q.distill.value,
            })

        # refresh the self-distillation caches with this epoch's predictions
        cache_noisy = predict(m_asr, vocab, train, "noisy", cfg.max_len)[0]
        if use_clean:
            cache_clean = predict(m_clean, vocab, train, "clean", cfg.max_len)[0]
        if dev is not None:
            acc_noisy = evaluate_accuracy(predict(m_asr, vocab, dev, "noisy", cfg.max_len)[1], dev.labels)
            acc_clean = evaluate_accuracy(predict(m_clean, vocab, dev, "clean", cfg.max_len)[1], dev.labels)
            epoch_metrics.append({"epoch": epoch, "accuracy_noisy": acc_noisy, "accuracy_clean": acc_clean})
            log.info("epoch %d: noisy acc %.4f clean acc %.4f", epoch, acc_noisy, acc_clean)
    ids = [ex.id for ex in train.examples]
    return FinetuneResult(m_clean, m_asr, records, epoch_metrics,
                          dict(zip(ids, cache_clean)), dict(zip(ids, cache_noisy)))


def _fmt(value):
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_loss_log(records, path, fields):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for rec in records:
            writer.writerow([_fmt(rec[f]) for f in fields])


def evaluate(m_clean, m_asr, vocab, corpus, cfg, max_pairs=256):
    """Accuracy of both models plus geometry of the ASR model's embeddings.

    Geometry uses the first ``max_pairs`` pairs, both sides encoded by the
    ASR model. Returns (report, paired EmbeddingBatch, pair labels).
    """
    gold = corpus.labels
    pred_noisy = predict(m_asr, vocab, corpus, "noisy", cfg.max_len)[1]
    pred_clean = predict(m_clean, vocab, corpus, "clean", cfg.max_len)[1]
    subset = corpus.examples[:max_pairs]
    emb = EmbeddingBatch.paired(
        encode_texts(m_asr, vocab, [ex.clean for ex in subset], cfg.max_len),
        encode_texts(m_asr, vocab, [ex.noisy for ex in subset], cfg.max_len),
        [ex.id for ex in subset])
    labels = np.array([ex.label for ex in subset])
    intra, inter = cluster_distances(emb, labels)
    report = MetricsReport(
        accuracy_noisy=evaluate_accuracy(pred_noisy, gold),
        accuracy_clean=evaluate_accuracy(pred_clean, gold),
        margin_occupancy=margin_occupancy(pairwise_distance_matrix(emb.rows), cfg.margin()),
        mean_intra_pair_distance=intra,
        mean_inter_distance=inter,
        per_class_accuracy=per_class_accuracy(pred_noisy, gold, corpus.num_classes),
    )
    return report, emb, labels


def pretrained_occupancy(params, vocab, corpus, cfg, max_pairs=128):
    """Margin occupancy of a single encoder over the first ``max_pairs`` pairs."""
    subset = corpus.examples[:max_pairs]
    rows = np.vstack([encode_texts(params, vocab, [ex.clean for ex in subset], cfg.max_len),
                      encode_texts(params, vocab, [ex.noisy for ex in subset], cfg.max_len)])
    return margin_occupancy(pairwise_distance_matrix(rows), cfg.margin())
