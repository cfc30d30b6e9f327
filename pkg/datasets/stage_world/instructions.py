"""
Template grammar for task instructions and the closed vocabulary used to tokenize them.
"""
import hashlib
import json
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from datasets.stage_world.constants import instruction_styles, max_instruction_length, object_colors, pad_id, \
    pad_token, task_families
from datasets.stage_world.env import TaskSpec

# (verbs, nouns, gerund) per family; verbs and nouns are shared across some families on purpose
family_lexicon = {
    "press": (("press", "push down", "depress"), ("button", "switch", "key"), "pressing"),
    "close-slide": (("close", "shut", "slide shut"), ("drawer", "tray", "cabinet"), "closing"),
    "close-hinge": (("close", "shut", "swing shut"), ("door", "gate", "hatch"), "closing"),
    "rotate": (("rotate", "turn", "twist"), ("faucet", "tap", "valve"), "turning"),
    "open-slide": (("open", "slide open", "pull open"), ("window", "pane", "shutter"), "opening"),
    "pick-place": (("pick up and place", "move", "transfer"), ("block", "cube", "brick"), "placing"),
    "push": (("push", "shove", "nudge"), ("puck", "disc", "token"), "pushing"),
    "pull": (("pull", "drag", "tug"), ("lever", "handle", "bar"), "pulling"),
    "lock": (("lock", "turn", "latch"), ("bolt", "clasp", "padlock"), "locking"),
    "unlock": (("unlock", "unlatch", "release"), ("bolt", "clasp", "padlock"), "unlocking"),
    "insert": (("insert", "push in", "slot in"), ("peg", "pin", "plug"), "inserting"),
    "lift": (("lift", "raise", "pick up"), ("box", "crate", "bin"), "lifting")
}

imperative_templates = (
    "{verb} the {noun}",
    "please {verb} the {noun}",
    "{verb} the {noun} now",
    "can you {verb} the {noun}",
    "go and {verb} the {noun}",
    "try to {verb} the {noun}",
    "i want you to {verb} the {noun}",
    "you should {verb} the {noun}"
)
phrase_templates = (
    "{noun} {gerund}",
    "{gerund} the {noun}",
    "the {noun}"
)
description_templates = (
    "move the gripper to the {noun} and {verb} it",
    "reach for the {noun} then {verb} it",
    "first grasp the {noun} and then {verb} it"
)


class Instruction(NamedTuple):
    text: str
    tokens: Tuple[int, ...]
    task_id: str
    template_id: int
    style: str = "imperative"

    def to_dict(self) -> dict:
        return {"text": self.text, "template_id": self.template_id, "style": self.style}


class GrammarParse(NamedTuple):
    family: str
    style: str
    template_id: int
    verb: Optional[str]
    noun: str
    color: Optional[str]


def _templates(style: str) -> Tuple[str, ...]:
    if style in ("imperative", "correct-color", "wrong-color"):
        return imperative_templates
    if style == "phrase":
        return phrase_templates
    if style == "description":
        return description_templates
    raise ValueError(f"Unknown instruction style '{style}', expected one of {instruction_styles}")


def _color_options(style: str, task_color: str) -> Tuple[Optional[str], ...]:
    if style == "correct-color":
        return task_color,
    if style == "wrong-color":
        return tuple(c for c in object_colors if c != task_color)
    return None, task_color


def _verb_options(style: str, family: str) -> Tuple[Optional[str], ...]:
    verbs, _, _ = family_lexicon[family]
    return (None,) if style == "phrase" else verbs


def _fill(template: str, family: str, verb: Optional[str], noun: str, color: Optional[str]) -> str:
    _, _, gerund = family_lexicon[family]
    noun_phrase = f"{color} {noun}" if color else noun
    return template.format(verb=verb, noun=noun_phrase, gerund=gerund)


def grammar_capacity(family: str, style: str = "imperative", task_color: str = "red") -> int:
    _, nouns, _ = family_lexicon[family]
    return len(_templates(style)) * len(_verb_options(style, family)) * len(nouns) * \
        len(_color_options(style, task_color))


def gen_instructions(task: TaskSpec, n: int, seed: int, vocab: Optional["Vocabulary"] = None,
                     style: str = "imperative") -> List[Instruction]:
    """
    Generate n distinct instructions for a task.

    Indices are spread over the grammar axes with a mixed radix whose first two digits (template, noun) cycle
    together, so any n >= 3 draws covers at least 3 templates and 2 nouns.

    :param task: task to describe
    :param n: number of instructions
    :param seed: sampling seed
    :param vocab: vocabulary used for tokenization (defaults to the full grammar vocabulary)
    :param style: one of `instruction_styles`
    :return: list of instructions
    """
    templates = _templates(style)
    verbs = _verb_options(style, task.family)
    _, nouns, _ = family_lexicon[task.family]
    colors = _color_options(style, task.object_color)
    capacity = grammar_capacity(task.family, style, task.object_color)
    if n < 1 or n > capacity:
        raise ValueError(f"Cannot generate {n} instructions for family '{task.family}' ({style}); "
                         f"grammar capacity is {capacity}")

    vocab = vocab or Vocabulary.from_grammar()
    rng = np.random.default_rng([int(seed), instruction_styles.index(style), task_families.index(task.family),
                                 list(object_colors).index(task.object_color)])
    t_perm = rng.permutation(len(templates))
    n_perm = rng.permutation(len(nouns))
    v_perm = rng.permutation(len(verbs))
    c_perm = rng.permutation(len(colors))

    # (template, noun) pairs are unique for the first lcm(T, N) indices; verbs and colors take the higher digits
    pair_period = int(np.lcm(len(templates), len(nouns)))
    pair_count = len(templates) * len(nouns)
    out = []
    for i in range(n):
        pair_index = i % pair_count
        block = pair_index // pair_period
        j = pair_index % pair_period
        template_id = int(t_perm[j % len(templates)])
        noun = nouns[n_perm[(j + block) % len(nouns)]]
        rest = i // pair_count
        verb = verbs[v_perm[rest % len(verbs)]]
        color = colors[c_perm[(rest // len(verbs)) % len(colors)]]
        text = _fill(templates[template_id], task.family, verb, noun, color)
        out.append(Instruction(text, vocab.encode(text), task.task_id, template_id, style))
    return out


def _enumerate_grammar() -> Dict[str, GrammarParse]:
    table = {}
    for style in instruction_styles:
        for family in task_families:
            _, nouns, _ = family_lexicon[family]
            colors = (None, *object_colors)
            for template_id, template in enumerate(_templates(style)):
                for verb in _verb_options(style, family):
                    for noun in nouns:
                        for color in colors:
                            text = _fill(template, family, verb, noun, color)
                            table.setdefault(text, GrammarParse(family, style, template_id, verb, noun, color))
    return table


_grammar_table: Optional[Dict[str, GrammarParse]] = None


def parse_instruction(text: str) -> GrammarParse:
    """
    Invert the grammar. Texts shared by several styles resolve to the first style in `instruction_styles`.

    :param text: instruction text
    :return: the grammar derivation of the text
    """
    global _grammar_table
    if _grammar_table is None:
        _grammar_table = _enumerate_grammar()
    if text not in _grammar_table:
        raise ValueError(f"'{text}' is not produced by the instruction grammar")
    return _grammar_table[text]


def grammar_lexicon() -> List[str]:
    words = set()
    for template in (*imperative_templates, *phrase_templates, *description_templates):
        words.update(w for w in template.split() if not w.startswith("{"))
    for verbs, nouns, gerund in family_lexicon.values():
        for phrase in (*verbs, *nouns, gerund):
            words.update(phrase.split())
    words.update(object_colors)
    return sorted(words)


class Vocabulary:
    """
    Whitespace tokenizer over a closed lexicon. Id 0 is the pad token.
    """

    def __init__(self, words: Sequence[str], max_length: int = max_instruction_length):
        self.words = [pad_token, *words]
        self.max_length = max_length
        self._ids = {w: i for i, w in enumerate(self.words)}

    @staticmethod
    def from_grammar() -> "Vocabulary":
        return Vocabulary(grammar_lexicon())

    def __len__(self):
        return len(self.words)

    def encode(self, text: str) -> Tuple[int, ...]:
        words = text.split()
        if len(words) > self.max_length:
            raise ValueError(f"Instruction '{text}' has {len(words)} words, at most {self.max_length} are supported")
        unknown = [w for w in words if w not in self._ids or w == pad_token]
        if unknown:
            raise ValueError(f"Unknown words in instruction '{text}': {unknown}")
        ids = [self._ids[w] for w in words]
        return tuple(ids + [pad_id] * (self.max_length - len(ids)))

    def decode(self, tokens: Sequence[int]) -> str:
        words = []
        for t in tokens:
            t = int(t)
            if t < 0 or t >= len(self.words):
                raise ValueError(f"Token id {t} is outside of the vocabulary (size {len(self.words)})")
            if t != pad_id:
                words.append(self.words[t])
        return " ".join(words)

    def to_json(self) -> bytes:
        return json.dumps({"max_length": self.max_length, "words": self.words}, sort_keys=True,
                          indent=1).encode("utf-8")

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_json()).hexdigest()

    @staticmethod
    def from_json(data: bytes) -> "Vocabulary":
        d = json.loads(data.decode("utf-8"))
        words = d["words"]
        if not words or words[0] != pad_token:
            raise ValueError("Vocabulary must start with the pad token")
        return Vocabulary(words[1:], d["max_length"])
