"""Synthetic paired-transcript corpus: generation, ASR-style noise, file I/O,
vocabulary, tokenization, MLM masking and pair-aligned batching."""

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BatchTooSmall,
    EmptyCorpus,
    InvalidConfig,
    MissingField,
    ParseError,
    SchemaMismatch,
)

PAD, UNK, MASK, CLS = 0, 1, 2, 3
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[MASK]", "[CLS]")

LETTERS = string.ascii_lowercase


@dataclass(frozen=True)
class PairedExample:
    id: int
    clean: str
    noisy: str
    label: int


@dataclass
class Corpus:
    examples: list
    num_classes: int
    class_names: list

    def __post_init__(self):
        ids = [ex.id for ex in self.examples]
        if len(set(ids)) != len(ids):
            raise SchemaMismatch("example ids are not unique")
        for ex in self.examples:
            if not 0 <= ex.label < self.num_classes:
                raise SchemaMismatch(f"example {ex.id} has label {ex.label} outside [0, {self.num_classes})")
            if not ex.clean:
                raise SchemaMismatch(f"example {ex.id} has empty clean text")
        if len(self.class_names) != self.num_classes:
            raise SchemaMismatch("class_names length differs from num_classes")

    def __len__(self):
        return len(self.examples)

    @property
    def labels(self):
        return np.array([ex.label for ex in self.examples], dtype=np.int64)


DEFAULT_CONFUSIONS = {
    "play": ["pray", "plate"],
    "four": ["for", "fore"],
    "to": ["two", "too"],
    "for": ["four"],
    "weather": ["whether"],
    "right": ["write"],
    "flight": ["fright", "flite"],
    "music": ["muse sick"],
    "alarm": ["a lamb"],
    "call": ["cole", "tall"],
    "order": ["odor"],
    "pizza": ["pisa"],
    "light": ["lite", "night"],
    "lights": ["likes"],
    "mail": ["male"],
    "new": ["knew"],
    "hour": ["our"],
    "eight": ["ate"],
    "week": ["weak"],
    "sale": ["sail"],
    "there": ["their"],
    "meet": ["meat"],
    "buy": ["by", "bye"],
}


@dataclass
class NoiseConfig:
    char_sub_rate: float = 0.0
    char_del_rate: float = 0.0
    char_ins_rate: float = 0.0
    word_confusion_rate: float = 0.0
    confusion_table: dict = field(default_factory=lambda: dict(DEFAULT_CONFUSIONS))
    label_flip_rate: float = 0.0

    def __post_init__(self):
        for name in ("char_sub_rate", "char_del_rate", "char_ins_rate",
                     "word_confusion_rate", "label_flip_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name}={value} is not a probability")
        if self.char_sub_rate + self.char_del_rate + self.char_ins_rate > 1.0:
            raise InvalidConfig("character noise rates sum to more than 1")


# Each intent: (name, templates, slot fillers). Every class has >= 5 templates.
INTENTS = [
    ("play_music", [
        "play {song} by {artist} please",
        "can you put on some {genre} music for me",
        "i want to listen to {song} right now",
        "start playing my {genre} playlist in the kitchen",
        "shuffle songs from {artist} on the speaker",
        "please play something by {artist} loudly",
    ], {"song": ["yellow", "hello", "imagine", "thriller", "believer", "halo"],
        "artist": ["adele", "coldplay", "queen", "madonna", "drake", "beyonce"],
        "genre": ["jazz", "rock", "classical", "country", "pop", "blues"]}),
    ("weather_query", [
        "what is the weather like in {city} {day}",
        "will it rain in {city} {day}",
        "tell me the forecast for {city} this {day}",
        "do i need an umbrella {day} in {city}",
        "how cold will it be in {city} {day}",
        "is it going to be sunny {day}",
    ], {"city": ["london", "paris", "boston", "tokyo", "berlin", "denver"],
        "day": ["today", "tomorrow", "tonight", "monday", "weekend", "morning"]}),
    ("set_alarm", [
        "set an alarm for {time} {day}",
        "wake me up at {time} please",
        "please create an alarm at {time} on {day}",
        "i need an alarm {day} at {time}",
        "remind me with an alarm at {time} to wake",
        "change my wake up alarm to {time}",
    ], {"time": ["six", "seven", "eight", "noon", "five thirty", "nine fifteen"],
        "day": ["tomorrow", "monday", "friday", "weekdays", "sunday", "tonight"]}),
    ("book_flight", [
        "book a flight from {city} to {city2}",
        "find me a cheap flight to {city2} on {day}",
        "i need a plane ticket from {city} to {city2}",
        "are there any flights to {city2} {day}",
        "reserve a seat on the next flight to {city2}",
        "show me airline tickets leaving {city} on {day}",
    ], {"city": ["chicago", "dallas", "seattle", "miami", "atlanta", "phoenix"],
        "city2": ["madrid", "rome", "sydney", "toronto", "lisbon", "dublin"],
        "day": ["friday", "tomorrow", "monday", "next week", "sunday", "tonight"]}),
    ("order_food", [
        "order a {food} from {place}",
        "i would like to get {food} delivered",
        "can you order me some {food} for dinner",
        "get me a large {food} from {place} please",
        "place a delivery order of {food} to my home",
        "i am hungry order {food} from {place}",
    ], {"food": ["pizza", "burger", "sushi", "noodles", "tacos", "salad"],
        "place": ["dominos", "the corner cafe", "subway", "panda express", "chipotle", "the diner"]}),
    ("call_contact", [
        "call {person} on the phone",
        "please dial {person} mobile number",
        "ring {person} right away",
        "i want to make a phone call to {person}",
        "phone {person} at work for me",
        "start a video call with {person}",
    ], {"person": ["mom", "john", "sarah", "my boss", "the doctor", "grandma"]}),
    ("lights_control", [
        "turn {state} the lights in the {room}",
        "switch {state} the {room} lamp",
        "dim the lights in the {room} a little",
        "make the {room} brighter please",
        "can you turn the {room} lights {state}",
        "set the {room} lighting to half",
    ], {"state": ["on", "off"],
        "room": ["bedroom", "kitchen", "living room", "hallway", "office", "garage"]}),
    ("email_query", [
        "do i have any new emails from {person}",
        "read my latest email from {person}",
        "check my inbox for messages",
        "did {person} send me an email {day}",
        "show unread mail in my inbox",
        "any important emails {day}",
    ], {"person": ["john", "sarah", "my boss", "the bank", "alex", "the school"],
        "day": ["today", "yesterday", "this morning", "this week", "tonight", "recently"]}),
    ("calendar_set", [
        "schedule a meeting with {person} on {day}",
        "add an event to my calendar for {day}",
        "put lunch with {person} in my calendar",
        "create an appointment on {day} at {time}",
        "book a meeting room for {day} at {time}",
        "remind me about the dentist appointment {day}",
    ], {"person": ["john", "sarah", "the team", "alex", "my manager", "lisa"],
        "day": ["monday", "tuesday", "friday", "tomorrow", "next week", "sunday"],
        "time": ["noon", "three", "ten", "two thirty", "four", "nine"]}),
    ("news_query", [
        "what are the latest {topic} headlines",
        "tell me the news about {topic}",
        "read me today's top {topic} stories",
        "any breaking news in {topic}",
        "give me a summary of {topic} news",
        "what happened in {topic} today",
    ], {"topic": ["sports", "politics", "science", "business", "technology", "world"]}),
    ("transport_taxi", [
        "get me a taxi to {place}",
        "book an uber to {place} now",
        "i need a ride to {place}",
        "call a cab to take me to {place}",
        "how long for a taxi to {place}",
        "order a car to {place} please",
    ], {"place": ["the airport", "downtown", "the station", "the hotel", "work", "the stadium"]}),
    ("shopping_list", [
        "add {item} to my shopping list",
        "put {item} on the grocery list",
        "remove {item} from my shopping list",
        "what is on my shopping list",
        "i need to buy {item} remember that",
        "do i have {item} on my list",
    ], {"item": ["milk", "eggs", "bread", "apples", "coffee", "butter"]}),
]
MAX_CLASSES = len(INTENTS)


def _fill(template, slots, rng):
    out = template
    for slot, fillers in slots.items():
        token = "{" + slot + "}"
        while token in out:
            out = out.replace(token, fillers[int(rng.integers(len(fillers)))], 1)
    return out


def apply_asr_noise(text, noise, rng):
    """Corrupt ``text`` the way a speech recognizer might.

    Words found in the confusion table are swapped for a homophone with
    probability ``word_confusion_rate``; every other word goes through a
    per-character substitute/delete/insert channel.
    """
    sub, dele, ins = noise.char_sub_rate, noise.char_del_rate, noise.char_ins_rate
    out_words = []
    for word in text.split():
        table = noise.confusion_table.get(word)
        if table and noise.word_confusion_rate > 0 and rng.random() < noise.word_confusion_rate:
            out_words.append(table[int(rng.integers(len(table)))])
            continue
        if sub == dele == ins == 0.0:
            out_words.append(word)
            continue
        chars = []
        for ch in word:
            u = rng.random()
            if u < sub:
                chars.append(LETTERS[int(rng.integers(26))])
            elif u < sub + dele:
                pass
            elif u < sub + dele + ins:
                chars.append(ch)
                chars.append(LETTERS[int(rng.integers(26))])
            else:
                chars.append(ch)
        if chars:
            out_words.append("".join(chars))
    if not out_words:
        return "a"
    return " ".join(out_words)


def _generate(labels, noise, rng, start_id=0):
    examples = []
    for offset, label in enumerate(labels):
        _, templates, slots = INTENTS[label]
        clean = _fill(templates[int(rng.integers(len(templates)))], slots, rng)
        noisy = apply_asr_noise(clean, noise, rng)
        examples.append(PairedExample(start_id + offset, clean, noisy, int(label)))
    return examples


def _flip_labels(examples, num_classes, rate, rng):
    n_flip = int(round(rate * len(examples)))
    if n_flip == 0:
        return examples
    chosen = set(rng.choice(len(examples), size=n_flip, replace=False).tolist())
    out = []
    for i, ex in enumerate(examples):
        if i in chosen:
            new = int(rng.integers(num_classes - 1))
            if new >= ex.label:
                new += 1
            ex = PairedExample(ex.id, ex.clean, ex.noisy, new)
        out.append(ex)
    return out


def _check_classes(num_classes):
    if not 2 <= num_classes <= MAX_CLASSES:
        raise InvalidConfig(f"num_classes must lie in [2, {MAX_CLASSES}], got {num_classes}")


def synthesize_corpus(num_classes, per_class, noise, seed):
    """Generate ``num_classes * per_class`` paired examples.

    Labels are assigned round-robin. A nonzero ``label_flip_rate`` reassigns
    that fraction of labels, so use this for training data only (see
    :func:`synthesize_splits`).
    """
    _check_classes(num_classes)
    if per_class < 1:
        raise InvalidConfig("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    labels = [i % num_classes for i in range(num_classes * per_class)]
    examples = _generate(labels, noise, rng)
    examples = _flip_labels(examples, num_classes, noise.label_flip_rate, rng)
    return Corpus(examples, num_classes, [INTENTS[c][0] for c in range(num_classes)])


def synthesize_splits(num_classes, n_train, n_test, noise, seed):
    """Train and test corpora from one seed; label flips touch the train split only."""
    _check_classes(num_classes)
    if n_train < 1 or n_test < 1:
        raise InvalidConfig("split sizes must be positive")
    rng = np.random.default_rng(seed)
    names = [INTENTS[c][0] for c in range(num_classes)]
    train = _generate([i % num_classes for i in range(n_train)], noise, rng)
    test = _generate([i % num_classes for i in range(n_test)], noise, rng, start_id=n_train)
    train = _flip_labels(train, num_classes, noise.label_flip_rate, rng)
    return Corpus(train, num_classes, names), Corpus(test, num_classes, list(names))


# ---------------------------------------------------------------------------
# file I/O

def save_corpus(corpus, path):
    """Write JSONL: a ``class_names`` header object, then one record per example."""
    lines = [json.dumps({"class_names": list(corpus.class_names)}, ensure_ascii=False)]
    for ex in corpus.examples:
        lines.append(json.dumps({"id": ex.id, "clean": ex.clean, "noisy": ex.noisy,
                                 "label": ex.label}, ensure_ascii=False))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus(path):
    class_names = None
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(record, dict):
                raise ParseError("record is not an object", lineno)
            if "class_names" in record and not examples and class_names is None:
                class_names = [str(c) for c in record["class_names"]]
                continue
            for key in ("id", "clean", "noisy", "label"):
                if key not in record:
                    raise MissingField(key, lineno)
            try:
                examples.append(PairedExample(int(record["id"]), str(record["clean"]),
                                              str(record["noisy"]), int(record["label"])))
            except (TypeError, ValueError):
                raise ParseError("field has the wrong type", lineno) from None
    if not examples:
        raise EmptyCorpus(f"{path} holds no examples")
    if class_names is None:
        num_classes = max(ex.label for ex in examples) + 1
        class_names = [f"class_{c}" for c in range(num_classes)]
    return Corpus(examples, len(class_names), class_names)


# ---------------------------------------------------------------------------
# vocabulary and tokens

class Vocab:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED_TOKENS:
            raise SchemaMismatch("vocabulary must start with the reserved tokens")
        self.tokens = tokens
        self.index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id(self, token):
        return self.index.get(token, UNK)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read().split("\n")[:-1])


def words(text):
    return text.lower().split()


def build_vocab(corpus, min_count=1):
    if not corpus.examples:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for ex in corpus.examples:
        # an uncorrupted noisy side is the same utterance, so count it once
        counts.update(words(ex.clean))
        if ex.noisy != ex.clean:
            counts.update(words(ex.noisy))
    kept = [(tok, c) for tok, c in counts.items() if c >= min_count and tok not in RESERVED_TOKENS]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocab(list(RESERVED_TOKENS) + [tok for tok, _ in kept])


def tokenize(text, vocab, max_len):
    if max_len < 2:
        raise InvalidConfig("max_len must be >= 2")
    ids = [CLS] + [vocab.id(w) for w in words(text)]
    return ids[:max_len]


def mask_tokens(tokens, ratio, rng):
    """Replace a random subset of positions with [MASK].

    Position 0 ([CLS]) and padding are never masked. When nothing gets picked
    and the row has a maskable position, one is forced so the MLM loss is
    always defined. Returns (masked, positions, targets).
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    masked = tokens.copy()
    candidates = np.array([i for i in range(1, len(tokens)) if tokens[i] != PAD], dtype=np.int64)
    if candidates.size == 0:
        return masked, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    picked = candidates[rng.random(candidates.size) < ratio]
    if picked.size == 0:
        picked = candidates[[int(rng.integers(candidates.size))]]
    targets = tokens[picked].copy()
    masked[picked] = MASK
    return masked, picked, targets


def pad_rows(rows, width=None):
    width = max(len(r) for r in rows) if width is None else width
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


@dataclass
class Batch:
    clean_token_rows: np.ndarray
    noisy_token_rows: np.ndarray
    labels: np.ndarray
    example_ids: np.ndarray

    def __len__(self):
        return len(self.example_ids)


def make_batches(corpus, batch_size_pairs, seed, epoch, vocab, max_len=32):
    """Shuffle pairs with a generator keyed by (seed, epoch) and cut batches.

    A trailing batch with fewer than 2 pairs is dropped.
    """
    if batch_size_pairs < 2:
        raise BatchTooSmall("batches need at least 2 pairs for in-batch negatives")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(corpus.examples))
    batches = []
    for start in range(0, len(order), batch_size_pairs):
        chunk = [corpus.examples[i] for i in order[start:start + batch_size_pairs]]
        if len(chunk) < 2:
            continue
        batches.append(Batch(
            clean_token_rows=pad_rows([tokenize(ex.clean, vocab, max_len) for ex in chunk]),
            noisy_token_rows=pad_rows([tokenize(ex.noisy, vocab, max_len) for ex in chunk]),
            labels=np.array([ex.label for ex in chunk], dtype=np.int64),
            example_ids=np.array([ex.id for ex in chunk], dtype=np.int64),
        ))
    return batches
