"""Run configuration: one flat dataclass, read from and written to
``key = value`` text files."""

from dataclasses import asdict, dataclass, fields

from .corpus import NoiseConfig
from .errors import InvalidConfig
from .losses import MarginConfig
from .schedule import AnnealConfig


@dataclass
class TrainConfig:
    seed: int = 0

    # synthetic data
    num_classes: int = 6
    n_train: int = 2000
    n_test: int = 500
    char_sub_rate: float = 0.15
    char_del_rate: float = 0.0
    char_ins_rate: float = 0.0
    word_confusion_rate: float = 0.1
    label_flip_rate: float = 0.05

    # tokens and encoder
    max_len: int = 32
    min_count: int = 2
    d: int = 64
    d_out: int = 64

    # pre-training
    pretrain_steps: int = 1000
    pretrain_batch_pairs: int = 16
    mask_ratio: float = 0.15
    tau_sc: float = 0.2
    delta_plus: float = 0.2
    delta_minus: float = 0.5
    lambda_reg: float = 0.1
    lambda_pt: float = 0.5

    # fine-tuning
    finetune_epochs: int = 10
    finetune_batch_pairs: int = 32
    tau_c: float = 0.2
    lambda_reg_p: float = 0.15
    lambda_reg_q: float = 0.15
    tau_d: float = 5.0
    alpha: float = 1.0
    beta: float = 0.1
    R: float = 0.5
    G: int = 5000
    anneal: str = "cyclic"
    gamma_scale: float = 1.0
    use_manual_transcripts: bool = True
    ce_reduction: str = "sum"

    # optimizer
    peak_lr: float = 1e-3
    warmup_steps: int = 4000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-8

    # paths; empty means "use the default location"
    train_corpus: str = ""
    test_corpus: str = ""
    pretrained_checkpoint: str = ""
    vocab: str = ""
    model_dir: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.margin()
        self.anneal_config()
        self.noise()
        for name in ("tau_sc", "tau_c", "tau_d", "peak_lr"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        for name in ("pretrain_batch_pairs", "finetune_batch_pairs"):
            if getattr(self, name) < 2:
                raise InvalidConfig(f"{name} must be >= 2")
        for name in ("max_len", "min_count", "d", "d_out", "warmup_steps"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.max_len < 2:
            raise InvalidConfig("max_len must be >= 2")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise InvalidConfig("mask_ratio must lie in [0, 1]")
        if not 0.0 <= self.lambda_pt <= 1.0:
            raise InvalidConfig("lambda_pt must lie in [0, 1]")
        if self.anneal not in ("cyclic", "off"):
            raise InvalidConfig(f"anneal must be 'cyclic' or 'off', got {self.anneal!r}")
        if self.ce_reduction not in ("sum", "mean"):
            raise InvalidConfig(f"ce_reduction must be 'sum' or 'mean', got {self.ce_reduction!r}")

    def margin(self):
        return MarginConfig(self.delta_plus, self.delta_minus)

    def anneal_config(self):
        return AnnealConfig(self.R, self.G)

    def noise(self):
        return NoiseConfig(char_sub_rate=self.char_sub_rate, char_del_rate=self.char_del_rate,
                           char_ins_rate=self.char_ins_rate,
                           word_confusion_rate=self.word_confusion_rate,
                           label_flip_rate=self.label_flip_rate)

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return TrainConfig(**values)


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _parse_value(key, raw):
    kind = _TYPES[key]
    try:
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise InvalidConfig(f"{key}: cannot parse {raw!r}") from None


def parse_config_text(text, overrides=None):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise InvalidConfig(f"unknown config key {key!r} (line {lineno})")
        values[key] = _parse_value(key, raw)
    values.update(overrides or {})
    return TrainConfig(**values)


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), overrides)


def format_config(cfg):
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_config(cfg))
