import numpy as np
import pytest

from scholarpipe import sectionx
from scholarpipe.errors import EmptyDocument, ZeroVector
from scholarpipe.sectionx import (
    Document, HashEmbedder, Section, SelectionStrategy,
    cosine_similarity, find_methods_section, segment_sections,
)


def doc(*pairs, doc_id="D1"):
    return Document(doc_id, tuple(Section(t, b) for t, b in pairs))


class TestSegmentation:
    def test_structured_sections(self):
        d = segment_sections("D1", sections=[("Intro", "a"), ("Methods", "b")])
        assert [s.title for s in d.sections] == ["Intro", "Methods"]

    def test_plain_text_headings(self):
        text = "Opening remarks before any heading.\nIntroduction\nBody one.\nMATERIALS AND METHODS\nBody two."
        d = segment_sections("D1", fulltext=text)
        assert [s.title for s in d.sections] == ["PREAMBLE", "Introduction", "MATERIALS AND METHODS"]
        assert d.sections[2].body == "Body two."

    def test_no_preamble_when_text_starts_with_heading(self):
        d = segment_sections("D1", fulltext="Introduction\nBody.")
        assert [s.title for s in d.sections] == ["Introduction"]

    def test_sentence_lines_are_not_headings(self):
        text = "Introduction\nThis line ends with a period.\nAnother lowercase continuation line"
        d = segment_sections("D1", fulltext=text)
        assert len(d.sections) == 1

    def test_empty_document(self):
        with pytest.raises(EmptyDocument):
            segment_sections("D1", fulltext="   \n  ")
        with pytest.raises(EmptyDocument):
            segment_sections("D1", sections=[])


class TestCosine:
    def test_known_values(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == pytest.approx(-1.0)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity(np.zeros(3), np.ones(3))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity(np.ones(2), np.ones(3))


class TestHashEmbedder:
    def test_deterministic_unit_vectors(self):
        e = HashEmbedder()
        v1, v2 = e.embed("methods text"), e.embed("methods text")
        assert np.allclose(v1, v2)
        assert np.linalg.norm(v1) == pytest.approx(1.0)
        assert not np.allclose(v1, e.embed("other text"))


class TestFindMethodsSection:
    def test_keyword_first_hit(self):
        d = doc(("Introduction", "a"), ("Methods", "b"), ("Experimental Setup", "c"))
        section, strategy = find_methods_section(d, HashEmbedder())
        assert section.title == "Methods"
        assert strategy is SelectionStrategy.KEYWORD_MATCH

    @pytest.mark.parametrize("title", ["METHODS", "Materials and methods", "Procedure", "Experimental design"])
    def test_keyword_variants(self, title):
        d = doc(("Intro", "a"), (title, "b"))
        _, strategy = find_methods_section(d, HashEmbedder())
        assert strategy is SelectionStrategy.KEYWORD_MATCH

    def test_semantic_fallback_is_stable(self):
        d = doc(("Background", "narrative one"), ("Approach", "narrative two"), ("Findings", "narrative three"))
        picks = {find_methods_section(d, HashEmbedder())[0].title for _ in range(3)}
        assert len(picks) == 1
        _, strategy = find_methods_section(d, HashEmbedder())
        assert strategy is SelectionStrategy.SEMANTIC_FALLBACK

    def test_fallback_tie_prefers_earlier(self):
        # Identical bodies embed identically, so every score ties.
        d = doc(("First", "same body"), ("Second", "same body"))
        section, _ = find_methods_section(d, HashEmbedder())
        assert section.title == "First"

    def test_empty_document(self):
        with pytest.raises(EmptyDocument):
            find_methods_section(Document("D1", ()), HashEmbedder())

    def test_truncation_budget(self):
        body = "word " * (sectionx.EMBED_TOKEN_BUDGET + 100)
        assert len(sectionx._truncate_for_embedding(body).split()) == sectionx.EMBED_TOKEN_BUDGET


class TestLoadDocuments:
    def test_jsonl(self, tmp_path):
        path = tmp_path / "ft.jsonl"
        path.write_text(
            '{"doc_id": "A", "sections": [{"title": "Methods", "body": "x"}]}\n\n'
            '{"doc_id": "B", "sections": [{"title": "Intro", "body": "y"}]}\n',
            encoding="utf-8",
        )
        docs = list(sectionx.load_documents(path))
        assert [d.doc_id for d in docs] == ["A", "B"]
