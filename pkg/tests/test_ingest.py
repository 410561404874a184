import sys

import pytest
from hypothesis import given, strategies as st

import scenario
from lecquiz.ingest import (
    EmptyDocumentError,
    ExtractorError,
    PlanError,
    extract_text,
    parse_topic_lines,
    plan_topics,
    segment,
    split_pages,
)


def test_form_feeds_split_pages(tmp_path):
    p = tmp_path / "lec.txt"
    p.write_text("one\fsecond page\fthird")
    assert extract_text(p) == [(1, "one"), (2, "second page"), (3, "third")]


def test_trailing_form_feed_is_not_a_page():
    assert split_pages("a\fb\f") == ["a", "b"]


def test_marker_lines(tmp_path):
    p = tmp_path / "lec.md"
    p.write_text("one\n---page---\ntwo\n")
    assert [t.strip() for _, t in extract_text(p, marker="---page---")] == ["one", "two"]


def test_empty_document(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("  \n\f ")
    with pytest.raises(EmptyDocumentError):
        extract_text(p)


def test_pdf_goes_through_extractor(tmp_path):
    pdf = tmp_path / "lec.pdf"
    pdf.write_bytes(b"%PDF-fake")
    script = tmp_path / "extract.py"
    script.write_text("import sys\nsys.stdout.write('p1\\fp2\\fp3\\f')\n")
    pages = extract_text(pdf, extractor_command=f"{sys.executable} {script} {{path}}")
    assert pages == [(1, "p1"), (2, "p2"), (3, "p3")]


def test_extractor_failure(tmp_path):
    pdf = tmp_path / "lec.pdf"
    pdf.write_bytes(b"%PDF-fake")
    cmd = f"{sys.executable} -c \"import sys; sys.stderr.write('broken'); sys.exit(3)\""
    with pytest.raises(ExtractorError, match="broken"):
        extract_text(pdf, extractor_command=cmd)


def test_short_lecture_is_one_chunk(tmp_path):
    pages = extract_text(scenario.write_lecture(tmp_path, "InfoTheory"))
    chunks = segment(pages)
    assert len(chunks) == 1
    assert chunks[0].pages_label == "p.1-3"


def test_long_pages_split_into_ranges():
    pages = [(i, f"Paragraph {i}. " + "word " * 60) for i in range(1, 6)]
    chunks = segment(pages, max_chunk_chars=400)
    assert len(chunks) >= 2
    assert chunks[0].start_page == 1 and chunks[-1].end_page == 5
    for a, b in zip(chunks, chunks[1:]):
        assert b.start_page == a.end_page + 1
    assert all(len(c.text) <= 400 for c in chunks)


def test_oversized_paragraph_splits_on_sentences():
    para = " ".join(f"Sentence number {i} ends here." for i in range(40))
    chunks = segment([(1, para), (2, "Short tail.")], max_chunk_chars=200)
    assert len(chunks) > 2
    assert all(len(c.text) <= 200 for c in chunks)
    assert all(c.text.endswith(".") for c in chunks)
    squash = lambda s: "".join(s.split())
    assert squash("".join(c.text for c in chunks)) == squash(para + "Short tail.")
    assert chunks[-1].end_page == 2


paragraphs = st.text(alphabet="abc .!?\n", min_size=0, max_size=300)


@given(st.lists(paragraphs, min_size=1, max_size=6), st.integers(20, 400))
def test_segment_properties(texts, limit):
    pages = list(enumerate(texts, start=1))
    chunks = segment(pages, limit)
    assert segment(pages, limit) == chunks
    if not any(t.strip() for t in texts):
        assert chunks == []
        return
    squash = lambda s: "".join(s.split())
    assert "".join(squash(c.text) for c in chunks) == "".join(squash(t) for t in texts)
    assert all(len(c.text) <= limit for c in chunks)
    assert chunks[0].start_page == 1 and chunks[-1].end_page == len(texts)
    for a, b in zip(chunks, chunks[1:]):
        # no gaps; a shared page only where that page is split between chunks
        assert b.start_page in (a.end_page, a.end_page + 1)
        assert a.start_page <= a.end_page


def test_topic_plan_provided():
    chunks = segment([(1, "text")])
    topics = ["Chain rule", "Biased coin entropy"]
    assert plan_topics(chunks, "provided", provided=topics) == topics
    with pytest.raises(PlanError):
        plan_topics(chunks, "provided", provided=["a", "a"])
    with pytest.raises(PlanError):
        plan_topics(chunks, "provided", provided=[])


def test_topic_plan_generated_dedupes():
    chunks = segment([(1, "text")])
    reply = "1. Chain rule\n- Biased coin\n\n* Chain rule\nMutual information\n"
    seen = []
    topics = plan_topics(chunks, "generated", ask=lambda p: seen.append(p) or reply, n_topics=8)
    assert topics == ["Chain rule", "Biased coin", "Mutual information"]
    assert "text" in seen[0]


def test_parse_topic_lines_limit():
    assert parse_topic_lines("a\nb\nc", limit=2) == ["a", "b"]


def test_unknown_plan_mode():
    with pytest.raises(PlanError):
        plan_topics(segment([(1, "x")]), "magic")
