"""Synthetic task-oriented corpus generation, TSV ingestion, vocabularies.

A :class:`GrammarSpec` describes intents, their slots, filler phrase pools
and carrier templates. Generation realizes a query token sequence and its
parse tree together, so leaf spans are exact by construction. Some intents
deliberately share a carrier template with a sibling intent; those queries
are genuinely ambiguous at the top level, which is what makes top-k
decoding interesting.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .parse_repr import (FrameSeq, IntentNode, ParseError, SlotNode,
                         parse_string_to_tree, tokenize, tree_to_frame)


class GrammarError(ValueError):
    pass


@dataclass
class GrammarSpec:
    intents: dict                  # intent label -> list of slot labels
    slots: dict                    # slot label -> filler pool name
    fillers: dict                  # pool name -> list of phrases
    templates: dict                # intent label -> list of carrier strings
    nesting_prob: float = 0.15
    max_len: int = 32
    max_depth: int = 3

    def __post_init__(self):
        if len(self.intents) < 2:
            raise GrammarError("need at least 2 intents")
        if not 0.0 <= self.nesting_prob < 1.0:
            raise GrammarError("nesting_prob must be in [0, 1)")
        for slot, pool in self.slots.items():
            if not self.fillers.get(pool):
                raise GrammarError(f"slot {slot} has empty filler pool {pool}")
        for intent, slot_list in self.intents.items():
            for s in slot_list:
                if s not in self.slots:
                    raise GrammarError(f"intent {intent} references unknown slot {s}")
            if not self.templates.get(intent):
                raise GrammarError(f"intent {intent} has no templates")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        return cls(intents=doc["intents"], slots=doc["slots"],
                   fillers=doc["fillers"], templates=doc["templates"],
                   nesting_prob=doc.get("nesting_prob", 0.15),
                   max_len=doc.get("max_len", 32),
                   max_depth=doc.get("max_depth", 3))

    def to_json(self, path):
        doc = {"intents": self.intents, "slots": self.slots,
               "fillers": self.fillers, "templates": self.templates,
               "nesting_prob": self.nesting_prob, "max_len": self.max_len,
               "max_depth": self.max_depth}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


# ---------------------------------------------------------------------------
# default 25-intent grammar

_POOLS = {
    "place": ["boston", "new york", "chicago", "the park", "miami",
              "seattle", "downtown", "denver"],
    "when": ["tomorrow", "tonight", "on friday", "next week", "this weekend",
             "at noon", "on new year's eve", "in an hour"],
    "artist": ["the beatles", "taylor swift", "miles davis", "queen", "drake"],
    "person": ["mom", "alice", "my boss", "uncle joe", "sarah"],
    "thing": ["the meeting notes", "my homework", "a funny joke",
              "the shopping list"],
    "topic": ["sports", "politics", "technology", "finance", "science"],
    "dish": ["pasta", "tacos", "sushi", "pancakes", "fried rice"],
    "span_time": ["ten minutes", "an hour", "thirty seconds", "two hours"],
    "org": ["google", "apple", "tesla", "amazon"],
    "teamname": ["the lakers", "real madrid", "the yankees", "arsenal"],
    "term": ["serendipity", "algorithm", "photosynthesis", "quorum"],
}

_SLOT_POOL = {
    "sl:location": "place", "sl:date_time": "when", "sl:artist": "artist",
    "sl:contact": "person", "sl:content": "thing", "sl:category": "topic",
    "sl:food": "dish", "sl:duration": "span_time", "sl:company": "org",
    "sl:team": "teamname", "sl:word": "term",
}

# intent -> (slots, own templates). Paired intents below additionally share
# an ambiguous template and carry identical slot inventories.
_INTENTS = {
    "in:get_weather": (["sl:location", "sl:date_time"],
                       ["what's the weather", "will it rain", "forecast for"]),
    "in:get_event": (["sl:location", "sl:date_time"],
                     ["what is happening", "any events", "what's going on"]),
    "in:get_directions": (["sl:location", "sl:date_time"],
                          ["directions to", "how do i get to", "navigate to",
                           "best way to", "show me the way to"]),
    "in:update_directions": (["sl:location", "sl:date_time"],
                             ["change my route to", "reroute me to",
                              "update directions to", "switch my route to",
                              "redo directions to"]),
    "in:play_music": (["sl:artist"],
                      ["play songs by", "put on some", "start playing",
                       "queue up tracks by", "let me hear"]),
    "in:pause_music": (["sl:artist"],
                       ["pause the song by", "stop playing", "hold the track by",
                        "mute the music by", "halt the song by"]),
    "in:set_alarm": (["sl:date_time"],
                     ["set an alarm for", "wake me up", "alarm for"]),
    "in:send_message": (["sl:contact"],
                        ["send a message to", "text", "message"]),
    "in:call_contact": (["sl:contact"],
                        ["call", "dial", "phone"]),
    "in:get_news": (["sl:category"],
                    ["news about", "latest headlines on", "what's new in"]),
    "in:set_reminder": (["sl:content", "sl:date_time"],
                        ["remind me about", "set a reminder for",
                         "don't let me forget", "make a reminder for",
                         "ping me about"]),
    "in:delete_reminder": (["sl:content", "sl:date_time"],
                           ["delete my reminder about", "cancel the reminder for",
                            "remove reminder about", "clear my reminder about",
                            "forget the reminder for"]),
    "in:get_time": (["sl:location"],
                    ["what time is it in", "current time in", "clock in"]),
    "in:get_traffic": (["sl:location", "sl:date_time"],
                       ["how is traffic in", "traffic report for", "jams in"]),
    "in:book_ride": (["sl:location", "sl:date_time"],
                     ["book a ride to", "get me a cab to", "order a car to",
                      "hail a taxi to", "arrange a lift to"]),
    "in:cancel_ride": (["sl:location", "sl:date_time"],
                       ["cancel my ride to", "drop the cab to",
                        "scrap the car to", "call off my ride to",
                        "ditch the lift to"]),
    "in:get_recipe": (["sl:food"],
                      ["recipe for", "how do i cook", "ingredients for"]),
    "in:set_timer": (["sl:duration"],
                     ["set a timer for", "countdown", "timer"]),
    "in:get_stock": (["sl:company"],
                     ["stock price of", "how are shares of", "quote for"]),
    "in:add_todo": (["sl:content", "sl:date_time"],
                    ["add to my list", "put on my list", "new task",
                     "append to my tasks", "jot down"]),
    "in:remove_todo": (["sl:content", "sl:date_time"],
                       ["remove from my list", "take off my list", "drop task",
                        "strike from my tasks", "clear the task"]),
    "in:get_flight": (["sl:location", "sl:date_time"],
                      ["flights to", "find a plane to", "fly me to"]),
    "in:get_score": (["sl:team"],
                     ["score of the game for", "did they win", "result for"]),
    "in:find_restaurant": (["sl:food"],
                           ["where can i eat", "restaurant serving",
                            "find a place for"]),
    "in:get_definition": (["sl:word"],
                          ["define", "meaning of", "what does it mean"]),
}

# intent pairs that share one ambiguous template
_AMBIGUOUS_PAIRS = [
    ("in:get_directions", "in:update_directions", "route for"),
    ("in:play_music", "in:pause_music", "music by"),
    ("in:set_reminder", "in:delete_reminder", "reminder about"),
    ("in:add_todo", "in:remove_todo", "my list item"),
    ("in:book_ride", "in:cancel_ride", "ride to"),
]


def default_grammar(nesting_prob=0.05, max_len=32):
    intents = {name: list(slots) for name, (slots, _) in _INTENTS.items()}
    templates = {name: list(tpls) for name, (_, tpls) in _INTENTS.items()}
    for a, b, shared in _AMBIGUOUS_PAIRS:
        templates[a].append(shared)
        templates[b].append(shared)
    return GrammarSpec(intents=intents, slots=dict(_SLOT_POOL),
                       fillers={k: list(v) for k, v in _POOLS.items()},
                       templates=templates, nesting_prob=nesting_prob,
                       max_len=max_len)


# ---------------------------------------------------------------------------
# generation

def _realize(spec, intent, rng, tokens, depth):
    tpl = spec.templates[intent][rng.integers(len(spec.templates[intent]))]
    tokens.extend(tpl.split())
    slot_names = spec.intents[intent]
    nodes = []
    if slot_names:
        n_slots = int(rng.integers(1, len(slot_names) + 1))
        idx = sorted(rng.choice(len(slot_names), size=n_slots, replace=False))
        for i in idx:
            slot = slot_names[i]
            nest = (depth + 1 < spec.max_depth
                    and rng.random() < spec.nesting_prob)
            if nest:
                # nest only single-slot intents: their sub-queries stay short,
                # so each nested frame shape recurs often enough to learn
                choices = [n for n in spec.intents
                           if len(spec.intents[n]) == 1] or list(spec.intents)
                nested = choices[rng.integers(len(choices))]
                child = _realize(spec, nested, rng, tokens, depth + 2)
                nodes.append(SlotNode(slot, child=child))
            else:
                pool = spec.fillers[spec.slots[slot]]
                phrase = pool[rng.integers(len(pool))].split()
                start = len(tokens)
                tokens.extend(phrase)
                nodes.append(SlotNode(slot, span=(start, start + len(phrase) - 1)))
    return IntentNode(intent, tuple(nodes))


def generate_example(spec, rng):
    intent_names = list(spec.intents)
    for _ in range(64):
        tokens = []
        intent = intent_names[rng.integers(len(intent_names))]
        tree = _realize(spec, intent, rng, tokens, 0)
        if len(tokens) <= spec.max_len:
            return tokens, tree
    raise GrammarError("could not generate an example within max_len; "
                       "grammar phrases too long")


def generate_dataset(spec, seed, size):
    """Deterministic per seed; every parse validates by construction."""
    rng = np.random.default_rng(seed)
    return [generate_example(spec, rng) for _ in range(size)]


def split_dataset(dataset, seed=0):
    """Seed-stable 80/10/10 split by hash of the query string."""
    train, dev, test = [], [], []
    for query, tree in dataset:
        digest = hashlib.md5(f"{seed}:{' '.join(query)}".encode()).digest()
        bucket = digest[0] % 10
        (train if bucket < 8 else dev if bucket == 8 else test).append(
            (query, tree))
    return train, dev, test


# ---------------------------------------------------------------------------
# TSV io

def tree_to_surface(tree, query_tokens):
    """Render a tree back to the bracketed surface syntax with literal words."""
    out = []

    def emit(node):
        out.append("[" + node.label)
        for slot in node.slots:
            out.append("[" + slot.label)
            if slot.child is not None:
                emit(slot.child)
            else:
                start, end = slot.span
                out.extend(query_tokens[start:end + 1])
            out.append("]")
        out.append("]")

    emit(tree)
    return " ".join(out)


def save_tsv(path, dataset):
    with open(path, "w") as fh:
        for query, tree in dataset:
            fh.write(" ".join(query) + "\t" + tree_to_surface(tree, query) + "\n")


def load_tsv(path, strict=False):
    """Load (query, parse) pairs; first field is the raw query, last field
    the bracketed parse, middle fields are ignored. Returns (dataset,
    skipped) where skipped is a list of (line number, reason); with
    strict=True the first malformed line raises instead."""
    dataset = []
    skipped = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                if strict:
                    raise ParseError(f"line {lineno}: expected >= 2 fields")
                skipped.append((lineno, "expected >= 2 tab-separated fields"))
                continue
            query = tokenize(fields[0])
            try:
                tree = parse_string_to_tree(fields[-1], query)
            except ParseError as exc:
                if strict:
                    raise ParseError(f"line {lineno}: {exc}") from exc
                skipped.append((lineno, str(exc)))
                continue
            dataset.append((query, tree))
    return dataset, skipped


# ---------------------------------------------------------------------------
# vocabularies

@dataclass
class VocabBundle:
    symbols: list                  # parse symbols incl. "]"
    intents: list                  # intent labels seen at the root
    copy_range: int                # number of addressable source positions
    length_classes: list           # sorted span-form frame lengths
    sym2id: dict = field(default_factory=dict)
    intent2id: dict = field(default_factory=dict)
    length2class: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sym2id = {s: i for i, s in enumerate(self.symbols)}
        self.intent2id = {s: i for i, s in enumerate(self.intents)}
        self.length2class = {n: i for i, n in enumerate(self.length_classes)}


def build_vocabs(dataset, copy_range=None, pad_even_lengths=False):
    """Collect target symbols, root intents and span-form length classes.

    With ``pad_even_lengths`` the class set is widened to every even value
    up to the observed maximum, so inference can emit unseen-but-valid
    lengths (the model pipeline uses this; the plain call reports only the
    observed lengths).
    """
    if not dataset:
        raise ValueError("empty dataset")
    symbols = set()
    intents = set()
    lengths = set()
    max_src = 0
    for query, tree in dataset:
        max_src = max(max_src, len(query))
        frame = tree_to_frame(tree, "span")
        for tok in frame.tokens:
            if isinstance(tok, str):
                symbols.add(tok)
        intents.add(tree.label)
        lengths.add(len(frame.tokens))
    if pad_even_lengths:
        lengths |= set(range(2, max(lengths) + 1, 2))
    if copy_range is None:
        copy_range = max_src
    return VocabBundle(symbols=sorted(symbols),
                       intents=sorted(intents),
                       copy_range=copy_range,
                       length_classes=sorted(lengths))
