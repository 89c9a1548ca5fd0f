"""Decoupled tree representation of semantic parses and its linearizations.

A parse is a tree of alternating intent and slot nodes. Slot leaves hold
contiguous source-token spans; slots may instead nest a single intent.
Two linear forms exist:

* index form: every source position of a leaf span is emitted;
* span form: each leaf is emitted as a (start, end) pair, so the total
  token count is always even.

The canonical rendering (tokens joined by single spaces, integers in
decimal) is the unit of exact-match comparison everywhere.
"""

from dataclasses import dataclass

TERMINAL_PUNCT = ("?", "!", ".")


class ParseError(ValueError):
    def __init__(self, message, token_index=None):
        self.token_index = token_index
        if token_index is not None:
            message = f"{message} (at token {token_index})"
        super().__init__(message)


@dataclass(frozen=True)
class SlotNode:
    label: str                 # e.g. "sl:location"
    span: tuple = None         # (start, end) inclusive, or None
    child: "IntentNode" = None # nested intent, or None

    def __post_init__(self):
        if (self.span is None) == (self.child is None):
            raise ParseError(f"slot {self.label} must hold exactly one of "
                             "a span or a nested intent")


@dataclass(frozen=True)
class IntentNode:
    label: str                 # e.g. "in:get_event"
    slots: tuple = ()


@dataclass(frozen=True)
class FrameSeq:
    form: str                  # "index" | "span"
    tokens: tuple              # parse symbols (str) and source positions (int)

    def __post_init__(self):
        if self.form not in ("index", "span"):
            raise ValueError(f"unknown frame form {self.form!r}")

    def render(self):
        return " ".join(str(t) for t in self.tokens)


def frame_length(frame):
    """Token count of a frame; even for every valid span-form frame."""
    return len(frame.tokens)


def tokenize(text):
    """Lowercase whitespace tokenizer; terminal punctuation at the end of
    the utterance becomes its own token."""
    toks = text.lower().split()
    if toks and len(toks[-1]) > 1 and toks[-1].endswith(TERMINAL_PUNCT):
        last = toks.pop()
        toks.extend([last[:-1], last[-1]])
    return toks


# ---------------------------------------------------------------------------
# bracketed surface syntax -> tree

def parse_string_to_tree(parse, query_tokens):
    """Parse the bracketed surface syntax, resolving literal leaf words to
    source positions by greedy left-to-right alignment against
    ``query_tokens``."""
    toks = parse.lower().split()
    query = [q.lower() for q in query_tokens]
    pos = 0          # cursor into toks
    cursor = 0       # leftmost source position still available for alignment

    def peek():
        return toks[pos] if pos < len(toks) else None

    def align(words, at):
        nonlocal cursor
        k = len(words)
        for start in range(cursor, len(query) - k + 1):
            if query[start:start + k] == words:
                cursor = start + k
                return (start, start + k - 1)
        raise ParseError(f"cannot align leaf phrase {' '.join(words)!r}", at)

    def parse_intent():
        nonlocal pos
        tok = peek()
        if tok is None or not tok.startswith("[in:"):
            raise ParseError(f"expected intent opener, got {tok!r}", pos)
        label = tok[1:]
        start_at = pos
        pos += 1
        slots = []
        while True:
            tok = peek()
            if tok is None:
                raise ParseError("unbalanced brackets: intent never closed",
                                 start_at)
            if tok == "]":
                pos += 1
                return IntentNode(label, tuple(slots))
            if tok.startswith("[sl:"):
                slots.append(parse_slot())
            else:
                raise ParseError(f"unexpected token {tok!r} under intent", pos)

    def parse_slot():
        nonlocal pos
        label = toks[pos][1:]
        start_at = pos
        pos += 1
        words = []
        child = None
        while True:
            tok = peek()
            if tok is None:
                raise ParseError("unbalanced brackets: slot never closed",
                                 start_at)
            if tok == "]":
                pos += 1
                if child is not None:
                    if words:
                        raise ParseError("slot mixes words and nested intent",
                                         start_at)
                    return SlotNode(label, child=child)
                if not words:
                    raise ParseError(f"empty slot {label}", start_at)
                return SlotNode(label, span=align(words, start_at))
            if tok.startswith("[in:"):
                if words or child is not None:
                    raise ParseError("slot mixes words and nested intent", pos)
                child = parse_intent()
            elif tok.startswith("[sl:"):
                raise ParseError("slot directly inside a slot", pos)
            else:
                words.append(tok)
                pos += 1

    tree = parse_intent()
    if pos != len(toks):
        raise ParseError(f"trailing tokens after parse", pos)
    return tree


# ---------------------------------------------------------------------------
# tree <-> frame

def tree_to_frame(tree, form):
    """Pre-order linearization of a tree into the given form."""
    out = []

    def emit_intent(node):
        out.append("[" + node.label)
        for slot in node.slots:
            out.append("[" + slot.label)
            if slot.child is not None:
                emit_intent(slot.child)
            else:
                start, end = slot.span
                if form == "span":
                    out.extend((start, end))
                else:
                    out.extend(range(start, end + 1))
            out.append("]")
        out.append("]")

    emit_intent(tree)
    return FrameSeq(form, tuple(out))


def frame_to_tree(frame):
    """Exact inverse of :func:`tree_to_frame` for the frame's form."""
    violations = validate_frame(frame)
    if violations:
        raise ParseError("invalid frame: " + "; ".join(violations))
    toks = frame.tokens
    pos = 0

    def parse_intent():
        nonlocal pos
        label = toks[pos][1:]
        pos += 1
        slots = []
        while toks[pos] != "]":
            slots.append(parse_slot())
        pos += 1
        return IntentNode(label, tuple(slots))

    def parse_slot():
        nonlocal pos
        label = toks[pos][1:]
        pos += 1
        if isinstance(toks[pos], int):
            ints = []
            while isinstance(toks[pos], int):
                ints.append(toks[pos])
                pos += 1
            pos += 1  # closing bracket
            if frame.form == "span":
                span = (ints[0], ints[1])
            else:
                span = (ints[0], ints[-1])
            return SlotNode(label, span=span)
        child = parse_intent()
        pos += 1  # closing bracket
        return SlotNode(label, child=child)

    return parse_intent()


def validate_frame(frame, source_len=None):
    """Structural checks; returns a list of violation strings (empty = ok)."""
    toks = frame.tokens
    violations = []
    if frame.form == "span" and len(toks) % 2 != 0:
        violations.append("parity: span-form frame has odd length")
    stack = []  # "intent" | "slot"
    i = 0
    n = len(toks)
    structural_ok = True
    while i < n:
        tok = toks[i]
        if isinstance(tok, int):
            run = []
            while i < n and isinstance(toks[i], int):
                run.append(toks[i])
                i += 1
            if not stack or stack[-1] != "slot":
                violations.append(f"positions outside a slot at token {i - len(run)}")
                structural_ok = False
                continue
            if frame.form == "span":
                if len(run) != 2:
                    violations.append(f"span leaf must be exactly 2 integers, got {len(run)}")
                elif run[0] > run[1]:
                    violations.append(f"span start {run[0]} > end {run[1]}")
            else:
                if run != list(range(run[0], run[0] + len(run))):
                    violations.append(f"index leaf {run} is not contiguous ascending")
            if source_len is not None and any(p < 0 or p >= source_len for p in run):
                violations.append(f"position out of source range [0, {source_len})")
            continue
        if tok == "]":
            if not stack:
                violations.append(f"extra closing bracket at token {i}")
                structural_ok = False
            else:
                stack.pop()
            i += 1
            continue
        if isinstance(tok, str) and tok.startswith("[in:"):
            if stack and stack[-1] != "slot":
                violations.append(f"intent nested directly under intent at token {i}")
            if not stack and i != 0:
                violations.append(f"second root at token {i}")
            stack.append("intent")
            i += 1
            continue
        if isinstance(tok, str) and tok.startswith("[sl:"):
            if not stack or stack[-1] != "intent":
                violations.append(f"slot outside an intent at token {i}")
            stack.append("slot")
            i += 1
            continue
        violations.append(f"unknown token {tok!r} at token {i}")
        structural_ok = False
        i += 1
    if stack:
        violations.append(f"unbalanced: {len(stack)} unclosed bracket(s)")
        structural_ok = False
    if not toks or not (isinstance(toks[0], str) and toks[0].startswith("[in:")):
        violations.append("frame does not start with an intent opener")
        structural_ok = False

    if structural_ok and not violations:
        # deeper checks need a clean structure: empty slots, sibling ordering
        violations.extend(_check_semantics(toks, frame.form))
    return violations


def _check_semantics(toks, form):
    violations = []
    pos = 0

    def walk_intent():
        nonlocal pos
        pos += 1
        prev_end = -1
        while toks[pos] != "]":
            start, end = walk_slot()
            if start is not None:
                if start <= prev_end:
                    violations.append(
                        f"sibling spans overlap or out of order near token {pos}")
                prev_end = max(prev_end, end)
        pos += 1

    def walk_slot():
        nonlocal pos
        at = pos
        pos += 1
        if toks[pos] == "]":
            violations.append(f"empty slot at token {at}")
            pos += 1
            return None, None
        if isinstance(toks[pos], int):
            ints = []
            while isinstance(toks[pos], int):
                ints.append(toks[pos])
                pos += 1
            pos += 1
            return ints[0], ints[-1]
        walk_intent()
        pos += 1
        return None, None

    walk_intent()
    return violations


def frame_from_tokens(tokens, form):
    """Build a FrameSeq from mixed symbol/int tokens without validation."""
    return FrameSeq(form, tuple(tokens))


def frame_from_string(rendered, form):
    """Inverse of FrameSeq.render(); decimal tokens become positions."""
    toks = tuple(int(t) if t.isdigit() else t for t in rendered.split())
    return FrameSeq(form, toks)


def index_to_span(frame):
    """Convert a valid index-form frame to span form."""
    return tree_to_frame(frame_to_tree(frame), "span")
