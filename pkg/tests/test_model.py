import pytest
from hypothesis import given
from hypothesis import strategies as st

from metaphor_forge.model import (
    Decomposition,
    EmptyMetaphor,
    GenerationParams,
    ImageArtifact,
    InvalidField,
    Metaphor,
    VisualPrompt,
    default_token_counter,
    refined,
    validate_metaphor,
)


class TestValidateMetaphor:
    def test_worked_example(self):
        m = validate_metaphor("The world is a garden")
        assert m.text == "The world is a garden"
        assert m.id

    def test_whitespace_only_rejected(self):
        with pytest.raises(EmptyMetaphor):
            validate_metaphor("   ")

    def test_one_shot_example(self):
        m = validate_metaphor("Ideas are diamonds.")
        assert m.text == "Ideas are diamonds."

    def test_trims(self):
        assert validate_metaphor("  x y  ").text == "x y"

    def test_id_is_deterministic(self):
        assert validate_metaphor("a b c").id == validate_metaphor("a b c").id

    @given(st.text())
    def test_never_silently_invalid(self, raw):
        try:
            m = validate_metaphor(raw)
        except EmptyMetaphor:
            return
        assert m.text == raw.strip()
        assert m.text


class TestDecomposition:
    @pytest.mark.parametrize("field", ["source", "target", "meaning"])
    def test_empty_fields_rejected(self, field):
        kwargs = {"source": "a", "target": "b", "meaning": "c"}
        kwargs[field] = "  "
        with pytest.raises(InvalidField):
            Decomposition(**kwargs)

    @given(st.text(), st.text(), st.text())
    def test_fuzz_construction(self, s, t, m):
        try:
            d = Decomposition(source=s, target=t, meaning=m)
        except InvalidField:
            assert not (s.strip() and t.strip() and m.strip())
            return
        assert d.source.strip() and d.target.strip() and d.meaning.strip()


class TestVisualPrompt:
    def test_from_text_counts_tokens(self):
        p = VisualPrompt.from_text("a glowing diamond, dark background")
        assert p.token_count == default_token_counter(p.text)
        assert not p.over_budget

    def test_over_budget_flagged_not_truncated(self):
        text = " ".join(["word"] * 90)
        p = VisualPrompt.from_text(text)
        assert p.over_budget
        assert p.text == text

    def test_negative_count_rejected(self):
        with pytest.raises(InvalidField):
            VisualPrompt(text="x", token_count=-1)

    def test_refined_origin_starts_at_one(self):
        with pytest.raises(InvalidField):
            refined(0)
        assert refined(3).iteration == 3


class TestGenerationParams:
    def test_documented_default_profile(self):
        p = GenerationParams()
        assert (p.guidance_scale, p.inference_steps) == (4.5, 8)
        assert (p.width, p.height) == (768, 768)

    @pytest.mark.parametrize("kwargs", [
        {"guidance_scale": 0}, {"guidance_scale": -1.5},
        {"inference_steps": 0}, {"width": 0}, {"height": -3}, {"seed": -1},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(InvalidField):
            GenerationParams(**kwargs)


class TestImageArtifact:
    def test_hash_is_pure_function_of_bytes(self):
        a = ImageArtifact(bytes=b"pngdata")
        b = ImageArtifact(bytes=b"pngdata")
        assert a.content_hash == b.content_hash
        c = ImageArtifact(bytes=b"pngdatb")
        assert c.content_hash != a.content_hash

    def test_empty_bytes_rejected(self):
        with pytest.raises(InvalidField):
            ImageArtifact(bytes=b"")

    def test_wrong_hash_rejected(self):
        with pytest.raises(InvalidField):
            ImageArtifact(bytes=b"x", content_hash="00")

    def test_metaphor_requires_nonempty(self):
        with pytest.raises(InvalidField):
            Metaphor(id="a", text="   ")


def test_token_counter_counts_punctuation():
    # Words and punctuation marks each count once.
    assert default_token_counter("A glowing diamond, dark background.") == 7
    assert default_token_counter("") == 0
