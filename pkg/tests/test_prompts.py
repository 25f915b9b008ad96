from pathlib import Path

import pytest

from augforge import prompts

GOLDEN = Path(__file__).parent / "golden"


def golden_bytes(name: str) -> bytes:
    return (GOLDEN / name).read_bytes()


class TestGoldenTemplates:
    """Template line content is contractual; compare bytes, zero tolerance."""

    @pytest.mark.parametrize(
        "filename, segments",
        [
            ("finetune_direct.txt", prompts.FINETUNE_DIRECT.segments),
            ("finetune_direct_output.txt", prompts.FINETUNE_DIRECT.output_segments),
            ("generate_direct.txt", prompts.GENERATE_DIRECT.segments),
            ("generate_cot.txt", prompts.GENERATE_COT.segments),
        ],
    )
    def test_byte_identical(self, filename, segments):
        assert ("\n".join(segments) + "\n").encode("utf-8") == golden_bytes(filename)

    def test_finetune_prompt_keeps_trailing_space(self):
        # The fourth line ends with a space before the closing quote in the
        # source of record; it must survive any editing of this package.
        assert prompts.FINETUNE_DIRECT.segments[3].endswith("'img-classification' ")

    def test_template_ids(self):
        assert set(prompts.TEMPLATES) == {"finetune_direct", "generate_direct", "generate_cot"}


class TestRendering:
    BINDINGS = {
        "accuracy": "0.5123",
        "transform_code": "def transform():\n    return None",
        "addon_accuracy": "0.6001",
        "addon_transform_code": "def transform():\n    return 1",
    }

    def test_generate_direct_substitution(self):
        text = prompts.render_prompt("generate_direct", self.BINDINGS)
        assert "Reference 1 (Accuracy: 0.5123):" in text
        assert "<tr>def transform():\n    return None</tr>" in text
        assert "{" not in text.replace("{accuracy}", "")  # no leftover tokens

    def test_finetune_direct_needs_two_bindings(self):
        text = prompts.render_prompt(
            "finetune_direct", {"accuracy": "0.4000", "transform_code": "x"}
        )
        assert "(Accuracy: 0.4000)" in text
        assert text.count("\n") == len(prompts.FINETUNE_DIRECT.segments) - 1

    def test_missing_binding_raises(self):
        with pytest.raises(KeyError):
            prompts.render_prompt("generate_direct", {"accuracy": "0.5"})

    def test_unknown_template_raises(self):
        with pytest.raises(KeyError):
            prompts.render_prompt("no_such_template", self.BINDINGS)

    def test_code_with_placeholder_tokens_not_rescanned(self):
        # Single-pass substitution: tokens inside bound code stay verbatim.
        bindings = dict(self.BINDINGS, transform_code="print('{accuracy}')")
        text = prompts.render_prompt("generate_direct", bindings)
        assert "print('{accuracy}')" in text
        assert "(Accuracy: 0.5123)" in text

    def test_render_is_pure(self):
        a = prompts.render_prompt("generate_cot", self.BINDINGS)
        b = prompts.render_prompt("generate_cot", self.BINDINGS)
        assert a == b


class TestAccuracyFormat:
    @pytest.mark.parametrize(
        "value, expected",
        [(0.5, "0.5000"), (0.55549, "0.5555"), (1.0, "1.0000"), (0.0, "0.0000")],
    )
    def test_four_decimals(self, value, expected):
        assert prompts.format_accuracy(value) == expected
