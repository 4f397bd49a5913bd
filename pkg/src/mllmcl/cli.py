"""Command-line entry point.

    mllmcl gen-data  --config cfg.txt --out run/
    mllmcl pretrain  --config cfg.txt --out run/
    mllmcl finetune  --config cfg.txt --out run/
    mllmcl eval      --config cfg.txt --out run/
    mllmcl gradcheck --out run/

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

import argparse
import logging
import os
import sys

from . import gradcheck
from .config import TrainConfig, load_config, save_config
from .corpus import Vocab, load_corpus, save_corpus, synthesize_splits
from .encoder import load_checkpoint, save_checkpoint
from .errors import InvalidConfig, ValidationError
from .metrics import export_projection, write_metrics
from .trainer import (
    FINETUNE_LOG_FIELDS,
    PRETRAIN_LOG_FIELDS,
    evaluate,
    finetune,
    pretrain,
    write_loss_log,
)

log = logging.getLogger("mllmcl")

CORPUS_FILE = "corpus.jsonl"
TEST_FILE = "test.jsonl"
VOCAB_FILE = "vocab.txt"
PRETRAINED_FILE = "pretrained.ckpt"
M_CLEAN_FILE = "m_clean.ckpt"
M_ASR_FILE = "m_asr.ckpt"
LOSS_FILE = "losses.csv"
METRICS_FILE = "metrics.txt"
PROJECTION_FILE = "projection.csv"
RESOLVED_CONFIG_FILE = "resolved_config.txt"
GRADCHECK_FILE = "gradcheck.txt"


def _path(value, out, default):
    return value if value else os.path.join(out, default)


def cmd_gen_data(cfg, out):
    train, test = synthesize_splits(cfg.num_classes, cfg.n_train, cfg.n_test, cfg.noise(), cfg.seed)
    save_corpus(train, os.path.join(out, CORPUS_FILE))
    save_corpus(test, os.path.join(out, TEST_FILE))
    return 0


def cmd_pretrain(cfg, out):
    train = load_corpus(_path(cfg.train_corpus, out, CORPUS_FILE))
    result = pretrain(cfg, train)
    result.vocab.save(os.path.join(out, VOCAB_FILE))
    save_checkpoint(result.params, os.path.join(out, PRETRAINED_FILE), cfg.seed)
    write_loss_log(result.log, os.path.join(out, LOSS_FILE), PRETRAIN_LOG_FIELDS)
    return 0


def _vocab_path(cfg):
    if cfg.vocab:
        return cfg.vocab
    return os.path.join(os.path.dirname(cfg.pretrained_checkpoint) or ".", VOCAB_FILE)


def cmd_finetune(cfg, out):
    if not cfg.pretrained_checkpoint:
        raise InvalidConfig("missing required config field 'pretrained_checkpoint'")
    pretrained, _ = load_checkpoint(cfg.pretrained_checkpoint)
    vocab = Vocab.load(_vocab_path(cfg))
    train = load_corpus(_path(cfg.train_corpus, out, CORPUS_FILE))
    test_path = _path(cfg.test_corpus, out, TEST_FILE)
    test = load_corpus(test_path) if os.path.exists(test_path) else None
    result = finetune(cfg, pretrained, vocab, train, test)
    save_checkpoint(result.m_clean, os.path.join(out, M_CLEAN_FILE), cfg.seed)
    save_checkpoint(result.m_asr, os.path.join(out, M_ASR_FILE), cfg.seed)
    write_loss_log(result.log, os.path.join(out, LOSS_FILE), FINETUNE_LOG_FIELDS)
    vocab.save(os.path.join(out, VOCAB_FILE))
    if test is not None:
        report, _, _ = evaluate(result.m_clean, result.m_asr, vocab, test, cfg)
        write_metrics(report, os.path.join(out, METRICS_FILE))
    return 0


def cmd_eval(cfg, out):
    model_dir = cfg.model_dir or out
    m_clean, _ = load_checkpoint(os.path.join(model_dir, M_CLEAN_FILE))
    m_asr, _ = load_checkpoint(os.path.join(model_dir, M_ASR_FILE))
    vocab = Vocab.load(cfg.vocab or os.path.join(model_dir, VOCAB_FILE))
    test = load_corpus(_path(cfg.test_corpus, out, TEST_FILE))
    report, emb, labels = evaluate(m_clean, m_asr, vocab, test, cfg)
    write_metrics(report, os.path.join(out, METRICS_FILE))
    export_projection(emb, labels, os.path.join(out, PROJECTION_FILE))
    return 0


def cmd_gradcheck(cfg, out):
    results = gradcheck.run_suite(seed=cfg.seed)
    report = gradcheck.format_report(results)
    with open(os.path.join(out, GRADCHECK_FILE), "w", encoding="utf-8") as fh:
        fh.write(report)
    sys.stdout.write(report)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mllmcl", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat 'key = value' config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {} if args.seed is None else {"seed": args.seed}
    try:
        cfg = load_config(args.config, overrides) if args.config else TrainConfig(**overrides)
        os.makedirs(args.out, exist_ok=True)
        save_config(cfg, os.path.join(args.out, RESOLVED_CONFIG_FILE))
        return COMMANDS[args.command](cfg, args.out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
