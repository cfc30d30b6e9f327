import pytest

from datasets.stage_world.constants import instruction_styles, max_instruction_length, pad_id
from datasets.stage_world.env import make_registry
from datasets.stage_world.instructions import Vocabulary, gen_instructions, grammar_capacity, parse_instruction

registry = make_registry(0)
one_task_per_family = list({t.family: t for t in registry}.values())


def test_instructions_are_distinct_and_deterministic():
    task = next(t for t in registry if t.task_id == "press-red")
    a = gen_instructions(task, 3, seed=0)
    assert len({i.text for i in a}) == 3
    assert a == gen_instructions(task, 3, seed=0)


@pytest.mark.parametrize("task", one_task_per_family, ids=lambda t: t.family)
def test_forty_instructions_per_family(task):
    assert grammar_capacity(task.family) >= 40
    instructions = gen_instructions(task, 40, seed=1)
    assert len({i.text for i in instructions}) == 40
    parses = [parse_instruction(i.text) for i in instructions]
    assert all(p.family == task.family for p in parses)
    assert len({p.template_id for p in parses}) >= 3
    assert len({p.noun for p in parses}) >= 2


def test_capacity_is_enforced():
    task = registry[0]
    with pytest.raises(ValueError):
        gen_instructions(task, grammar_capacity(task.family) + 1, seed=0)
    with pytest.raises(ValueError):
        gen_instructions(task, 0, seed=0)


@pytest.mark.parametrize("style", instruction_styles)
def test_styles_parse_back(style):
    task = next(t for t in registry if t.task_id == "rotate-green")
    n = min(8, grammar_capacity(task.family, style, task.object_color))
    for instruction in gen_instructions(task, n, seed=0, style=style):
        parse = parse_instruction(instruction.text)
        assert parse.family == task.family
        if style == "correct-color":
            assert parse.color == "green"
        elif style == "wrong-color":
            assert parse.color not in (None, "green")


def test_vocabulary_round_trip():
    vocab = Vocabulary.from_grammar()
    task = next(t for t in registry if t.task_id == "lift-cyan")
    for instruction in gen_instructions(task, 10, seed=3):
        tokens = vocab.encode(instruction.text)
        assert len(tokens) == max_instruction_length
        assert vocab.decode(tokens) == instruction.text
        assert vocab.encode(vocab.decode(tokens)) == tokens
        non_pad = [t != pad_id for t in tokens]
        assert non_pad == sorted(non_pad, reverse=True)


def test_vocabulary_rejects_unknown_words():
    vocab = Vocabulary.from_grammar()
    with pytest.raises(ValueError):
        vocab.encode("juggle the button")
    with pytest.raises(ValueError):
        vocab.decode([len(vocab)])
    assert Vocabulary.from_json(vocab.to_json()).words == vocab.words


def test_unknown_text_does_not_parse():
    with pytest.raises(ValueError):
        parse_instruction("make coffee")
