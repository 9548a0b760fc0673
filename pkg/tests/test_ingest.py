import random

import pytest

from regqa.errors import EmptyInputError, NoContentError
from regqa.ingest import Block, Document, detect_format, parse_html, parse_marked_text


class TestDetectFormat:
    def test_tag_prefixed_content_is_html(self):
        assert detect_format(b"<html><p>x</p></html>") == "html"

    def test_marked_text_without_markup(self):
        assert detect_format(b"# Heading\ntext", hint="a.txt") == "marked_text"

    def test_empty_input_raises(self):
        with pytest.raises(EmptyInputError):
            detect_format(b"")

    def test_hint_extension_wins(self):
        assert detect_format(b"plain words only", hint="page.html") == "html"

    def test_leading_whitespace_and_bom_skipped(self):
        assert detect_format("﻿  \n<p>x</p>".encode("utf-8")) == "html"

    def test_angle_bracket_without_known_tag_is_marked_text(self):
        assert detect_format(b"<unknowntag> not html") == "marked_text"


class TestParseHtml:
    def test_minimal_heading_and_paragraph(self):
        doc = parse_html("<h1>T</h1><p>a</p>", "d1")
        kinds = [(b.kind, b.text) for b in doc.blocks]
        assert kinds == [("heading", "T"), ("paragraph", "a")]
        assert doc.blocks[0].level == 1
        assert doc.blocks[1].heading_path == ["T"]

    def test_table_serialization_row_major(self):
        html = "<table><tr><td>f</td><td>limit</td></tr><tr><td>2GHz</td><td>2 W</td></tr></table>"
        doc = parse_html(html, "d1")
        assert len(doc.blocks) == 1
        assert doc.blocks[0].kind == "table"
        assert doc.blocks[0].text == "f|limit\n2GHz|2 W"

    def test_script_only_content_raises(self):
        with pytest.raises(NoContentError):
            parse_html("<script>x=1</script>", "d1")

    def test_style_and_nav_dropped(self):
        doc = parse_html(
            "<nav>menu</nav><style>p{}</style><p>kept</p>", "d1")
        assert [b.text for b in doc.blocks] == ["kept"]

    def test_list_items_become_blocks(self):
        doc = parse_html("<ul><li>one</li><li>two</li></ul>", "d1")
        assert [(b.kind, b.text) for b in doc.blocks] == \
            [("list_item", "one"), ("list_item", "two")]

    def test_pipe_in_cell_is_escaped(self):
        doc = parse_html("<table><tr><td>a|b</td><td>c</td></tr></table>", "d1")
        assert doc.blocks[0].text == "a\\|b|c"

    def test_unclosed_tags_tolerated(self):
        doc = parse_html("<h2>Open<p>text", "d1")
        assert [b.kind for b in doc.blocks] == ["heading", "paragraph"]

    def test_title_tag_feeds_document_title_not_blocks(self):
        doc = parse_html("<title>My Doc</title><p>body</p>", "d1")
        assert doc.title == "My Doc"
        assert [b.text for b in doc.blocks] == ["body"]

    def test_heading_path_resets_at_same_level(self):
        doc = parse_html("<h1>A</h1><h2>B</h2><p>p1</p><h2>C</h2><p>p2</p>", "d1")
        by_text = {b.text: b.heading_path for b in doc.blocks}
        assert by_text["p1"] == ["A", "B"]
        assert by_text["p2"] == ["A", "C"]
        assert by_text["C"] == ["A"]

    def test_subject_metadata_key_always_present(self):
        doc = parse_html("<p>x</p>", "d1")
        assert "subject" in doc.metadata
        doc2 = parse_html("<p>x</p>", "d1", {"subject": "licensing"})
        assert doc2.metadata["subject"] == "licensing"

    def test_nested_table_merges_into_outer_cell(self):
        html = "<table><tr><td>outer <table><tr><td>inner</td></tr></table></td></tr></table>"
        doc = parse_html(html, "d1")
        assert len([b for b in doc.blocks if b.kind == "table"]) == 1


class TestParseMarkedText:
    def test_heading_then_paragraph(self):
        doc = parse_marked_text("# A\n\npara", "d1")
        assert [(b.kind, b.text) for b in doc.blocks] == \
            [("heading", "A"), ("paragraph", "para")]

    def test_consecutive_pipe_lines_form_one_table(self):
        doc = parse_marked_text("a|b\nc|d", "d1")
        assert len(doc.blocks) == 1
        assert doc.blocks[0].kind == "table"
        assert doc.blocks[0].text == "a|b\nc|d"

    def test_heading_paragraph_table_trace(self):
        doc = parse_marked_text("## B\ntext\n\na|b\nc|d", "d1")
        assert [b.kind for b in doc.blocks] == ["heading", "paragraph", "table"]
        assert doc.blocks[0].level == 2
        assert doc.blocks[2].heading_path == ["B"]

    def test_blank_line_splits_tables(self):
        doc = parse_marked_text("a|b\n\nc|d", "d1")
        assert [b.kind for b in doc.blocks] == ["table", "table"]

    def test_escaped_pipe_is_paragraph(self):
        doc = parse_marked_text("not \\| a table", "d1")
        assert doc.blocks[0].kind == "paragraph"

    def test_seven_hashes_is_paragraph(self):
        doc = parse_marked_text("####### too deep", "d1")
        assert doc.blocks[0].kind == "paragraph"

    def test_paragraph_lines_merge_until_blank(self):
        doc = parse_marked_text("one\ntwo\n\nthree", "d1")
        assert [b.text for b in doc.blocks] == ["one two", "three"]

    def test_empty_input_raises_no_content(self):
        with pytest.raises(NoContentError):
            parse_marked_text("\n\n  \n", "d1")


def _random_marked_doc(rng: random.Random) -> tuple[str, list[tuple[str, int, str]]]:
    """Random document source plus the (kind, level, text) events it encodes."""
    lines = []
    events = []
    n = rng.randint(1, 14)
    for i in range(n):
        roll = rng.random()
        if roll < 0.4:
            level = rng.randint(1, 6)
            text = f"head{i}"
            lines.append("#" * level + " " + text)
            events.append(("heading", level, text))
        elif roll < 0.8:
            text = f"para{i} words here"
            lines.append(text)
            events.append(("paragraph", 0, text))
        else:
            rows = [f"r{i}a|r{i}b", f"r{i}c|r{i}d"]
            lines.extend(rows)
            events.append(("table", 0, "\n".join(rows)))
        lines.append("")
    return "\n".join(lines), events


def _oracle_paths(events):
    """Independent stack-based heading-path computation."""
    stack: list[tuple[int, str]] = []
    paths = []
    for kind, level, text in events:
        if kind == "heading":
            while stack and stack[-1][0] >= level:
                stack.pop()
            paths.append([t for _, t in stack])
            stack.append((level, text))
        else:
            paths.append([t for _, t in stack])
    return paths


class TestProperties:
    def test_round_trip_order_preserved(self):
        rng = random.Random(7)
        for _ in range(50):
            raw, events = _random_marked_doc(rng)
            doc = parse_marked_text(raw, "d")
            assert [b.text for b in doc.blocks] == [t for _, _, t in events]

    def test_table_atomicity_one_block_per_table(self):
        rng = random.Random(11)
        for _ in range(50):
            raw, events = _random_marked_doc(rng)
            doc = parse_marked_text(raw, "d")
            want = sum(1 for k, _, _ in events if k == "table")
            assert sum(1 for b in doc.blocks if b.kind == "table") == want

    def test_heading_paths_match_stack_oracle(self):
        rng = random.Random(13)
        for _ in range(100):
            raw, events = _random_marked_doc(rng)
            doc = parse_marked_text(raw, "d")
            assert [b.heading_path for b in doc.blocks] == _oracle_paths(events)

    def test_block_indices_contiguous(self):
        rng = random.Random(17)
        for _ in range(20):
            raw, _ = _random_marked_doc(rng)
            doc = parse_marked_text(raw, "d")
            assert [b.block_index for b in doc.blocks] == list(range(len(doc.blocks)))


class TestDocumentModel:
    def test_round_trips_through_dict(self):
        doc = parse_marked_text("# A\n\npara\n\nx|y", "d1", {"subject": "s"})
        again = Document.from_dict(doc.to_dict())
        assert again == doc

    def test_rejects_missing_subject(self):
        with pytest.raises(ValueError):
            Document(doc_id="d", title="t", source_uri="", format="html",
                     blocks=(Block(0, "paragraph", "x"),), metadata={})

    def test_rejects_empty_doc_id(self):
        with pytest.raises(ValueError):
            Document(doc_id="", title="t", source_uri="", format="html",
                     blocks=(), metadata={"subject": ""})
