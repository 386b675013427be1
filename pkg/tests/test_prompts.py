"""Template rendering (golden byte equality) and completion parsing."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from commonact.context import ContextTriple
from commonact.errors import EmptyContext, EmptyGeneration
from commonact.prompts import (
    PromptKind,
    parse_generation,
    render_description_prompt,
    render_subsequent_prompt,
    template_version,
)

FIXTURES = Path(__file__).parent / "fixtures" / "prompts"

CURRENT_FIXTURES = {
    "current_01_overview_scene": ContextTriple(interactions=(0, 1, 2),
                                               objects=(0, 1, 2), verbs=(0, 1)),
    "current_02_no_candidates": ContextTriple(interactions=(), objects=(), verbs=(2,)),
    "current_03_single_each": ContextTriple(interactions=(4,), objects=(5,), verbs=(3,)),
    "current_04_five_verbs": ContextTriple(interactions=(2, 1), objects=(3,),
                                           verbs=(0, 1, 2, 3, 4)),
    "current_05_mixed": ContextTriple(interactions=(3,), objects=(4, 6), verbs=(3, 2)),
}
SUBSEQUENT_FIXTURES = {
    "subsequent_01_bread": "A man is picking up a piece of bread and putting it on the plate.",
    "subsequent_02_minimal": "x",
}


class TestRenderDescriptionPrompt:
    @pytest.mark.parametrize("name", sorted(CURRENT_FIXTURES))
    def test_golden_byte_equality(self, name, tiny_vocab):
        prompt = render_description_prompt(CURRENT_FIXTURES[name], tiny_vocab)
        golden = (FIXTURES / f"{name}.golden.txt").read_bytes()
        assert prompt.text.encode("utf-8") == golden
        assert prompt.kind is PromptKind.CURRENT_DESCRIPTION

    def test_object_line_verbatim(self, tiny_vocab):
        prompt = render_description_prompt(
            CURRENT_FIXTURES["current_01_overview_scene"], tiny_vocab)
        assert "\nObjects: bread, plate, table\n" in prompt.text
        assert "\nInteractions: in front of, holding, looking at\n" in prompt.text

    def test_ends_at_fill_point(self, tiny_vocab):
        for triple in CURRENT_FIXTURES.values():
            prompt = render_description_prompt(triple, tiny_vocab)
            assert prompt.text.endswith("Video Caption: ")

    def test_empty_lists_render_none(self, tiny_vocab):
        prompt = render_description_prompt(
            CURRENT_FIXTURES["current_02_no_candidates"], tiny_vocab)
        assert "\nObjects: none\n" in prompt.text
        assert "\nInteractions: none\n" in prompt.text

    def test_single_items_have_no_trailing_commas(self, tiny_vocab):
        prompt = render_description_prompt(
            CURRENT_FIXTURES["current_03_single_each"], tiny_vocab)
        tail = prompt.text.rsplit("Subject: person", 1)[1]
        assert "Activities: Closing a closet/cabinet\n" in tail
        assert "Objects: towel\n" in tail
        assert "Interactions: not contacting\n" in tail
        assert ",\n" not in tail

    def test_no_verbs_rejected(self, tiny_vocab):
        with pytest.raises(EmptyContext):
            render_description_prompt(
                ContextTriple(interactions=(0,), objects=(0,), verbs=()), tiny_vocab)

    def test_substituted_fields_round_trip(self, tiny_vocab):
        # The filled block ends the prompt, so distinct joined fields can
        # never collide: they are recoverable from the rendered text.
        for triple in CURRENT_FIXTURES.values():
            prompt = render_description_prompt(triple, tiny_vocab)
            block = prompt.text.rsplit("Subject: person\n", 1)[1]
            lines = block.split("\n")
            expected_acts = ", ".join(tiny_vocab.activities.name(i) for i in triple.verbs)
            assert lines[0] == f"Activities: {expected_acts}"

    def test_distinct_triples_distinct_prompts(self, tiny_vocab):
        rendered = {render_description_prompt(t, tiny_vocab).text
                    for t in CURRENT_FIXTURES.values()}
        assert len(rendered) == len(CURRENT_FIXTURES)


class TestRenderSubsequentPrompt:
    @pytest.mark.parametrize("name", sorted(SUBSEQUENT_FIXTURES))
    def test_golden_byte_equality(self, name):
        prompt = render_subsequent_prompt(SUBSEQUENT_FIXTURES[name])
        assert prompt.text.encode("utf-8") == (FIXTURES / f"{name}.golden.txt").read_bytes()
        assert prompt.kind is PromptKind.SUBSEQUENT_ACTION

    def test_final_line_is_fill_point(self):
        prompt = render_subsequent_prompt("A man is picking up a piece of bread.")
        assert prompt.text.split("\n")[-1] == "The person then proceeds to "

    def test_internal_newline_replaced(self):
        prompt = render_subsequent_prompt("line one\nline two")
        assert "Description: line one line two\n" in prompt.text

    def test_minimal_description(self):
        prompt = render_subsequent_prompt("x")
        assert "Description: x\n" in prompt.text

    def test_empty_rejected(self):
        with pytest.raises(EmptyContext):
            render_subsequent_prompt("")
        with pytest.raises(EmptyContext):
            render_subsequent_prompt("  \n ")


class TestParseGeneration:
    def test_double_newline_stop(self):
        raw = "make a sandwich.\n\nDescription: The person saw a plate."
        assert parse_generation(raw, PromptKind.SUBSEQUENT_ACTION) == "make a sandwich."

    def test_trim(self):
        assert parse_generation("   hello  ", PromptKind.CURRENT_DESCRIPTION) == "hello"

    def test_stop_rules_applied_in_order(self):
        raw = "line1\nline2\n\nSubject: person"
        assert parse_generation(raw, PromptKind.CURRENT_DESCRIPTION) == "line1 line2"

    def test_subject_marker(self):
        raw = "caption text\nSubject: person\nActivities: x"
        assert parse_generation(raw, PromptKind.CURRENT_DESCRIPTION) == "caption text"

    def test_description_marker(self):
        raw = "next step\nDescription: something else"
        assert parse_generation(raw, PromptKind.SUBSEQUENT_ACTION) == "next step"

    def test_empty_after_trimming(self):
        with pytest.raises(EmptyGeneration):
            parse_generation("\n\nSubject: person", PromptKind.CURRENT_DESCRIPTION)

    @given(raw=st.text(alphabet=st.sampled_from("ab :.\n"), min_size=0, max_size=80))
    def test_idempotent(self, raw):
        try:
            once = parse_generation(raw, PromptKind.CURRENT_DESCRIPTION)
        except EmptyGeneration:
            return
        assert parse_generation(once, PromptKind.CURRENT_DESCRIPTION) == once


def test_template_version_is_stable():
    assert template_version() == template_version()
    assert len(template_version()) == 12
