"""Parse HTML and layout-marked text into a structural document model.

Both parsers produce the same block model: headings (levels 1..6),
paragraphs, list items, and atomic tables whose cells are serialized
row-major with "|" between cells and newlines between rows ("|" inside a
cell is escaped as "\\|"). Every block carries the chain of headings above
it so downstream chunks keep their place in the document.

Marked-text convention (the contract for externally extracted PDF text):
a heading is a line starting with 1-6 "#" followed by a space; a table row
is a line containing at least one unescaped "|"; any other non-blank line
belongs to a paragraph, merged until the next blank line. Consecutive
table-row lines form one atomic table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

from .errors import EmptyInputError, NoContentError

HEADING = "heading"
PARAGRAPH = "paragraph"
TABLE = "table"
LIST_ITEM = "list_item"

_BLOCK_KINDS = {HEADING, PARAGRAPH, TABLE, LIST_ITEM}

_MARKED_HEADING_RE = re.compile(r"^(#{1,6}) (.*)$")
_UNESCAPED_PIPE_RE = re.compile(r"(?<!\\)\|")
_WS_RE = re.compile(r"\s+")
_HTML_TAG_RE = re.compile(
    r"<\s*(?:!doctype|html|head|body|title|meta|link|div|span|p|br|h[1-6]"
    r"|table|thead|tbody|tr|td|th|ul|ol|li|a|section|article|nav|header|footer"
    r"|main|aside|b|i|em|strong|pre|blockquote|script|style|img)\b",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Block:
    """One structural element of a parsed document."""

    block_index: int
    kind: str
    text: str
    heading_path: list[str] = field(default_factory=list)
    level: int = 0  # 1..6 for headings, 0 otherwise

    def __post_init__(self):
        if self.kind not in _BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == HEADING and not 1 <= self.level <= 6:
            raise ValueError(f"heading level {self.level} out of range 1..6")

    def to_dict(self) -> dict:
        return {
            "block_index": self.block_index,
            "kind": self.kind,
            "text": self.text,
            "heading_path": list(self.heading_path),
            "level": self.level,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(
            block_index=d["block_index"],
            kind=d["kind"],
            text=d["text"],
            heading_path=list(d.get("heading_path", [])),
            level=d.get("level", 0),
        )


@dataclass(frozen=True)
class Document:
    """Parsed source document with ordered blocks and metadata.

    Metadata always carries a "subject" key (possibly empty): per-document
    subject summaries are supplied by the caller, not generated here.
    """

    doc_id: str
    title: str
    source_uri: str
    format: str  # "html" | "marked_text"
    blocks: tuple[Block, ...]
    metadata: dict[str, str]

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        for i, block in enumerate(self.blocks):
            if block.block_index != i:
                raise ValueError(f"block indices not contiguous at {i}")
        if "subject" not in self.metadata:
            raise ValueError('metadata must contain a "subject" key')

    @property
    def text(self) -> str:
        return "\n\n".join(b.text for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "source_uri": self.source_uri,
            "format": self.format,
            "blocks": [b.to_dict() for b in self.blocks],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(
            doc_id=d["doc_id"],
            title=d["title"],
            source_uri=d.get("source_uri", ""),
            format=d["format"],
            blocks=tuple(Block.from_dict(b) for b in d["blocks"]),
            metadata=dict(d["metadata"]),
        )


def escape_cell(text: str) -> str:
    """Escape "|" inside a table cell so the row serialization stays unambiguous."""
    return text.replace("|", "\\|")


def detect_format(raw_bytes: bytes, hint: str | None = None) -> str:
    """Classify raw input as "html" or "marked_text".

    HTML requires the content to start with "<" (after whitespace/BOM) and
    contain a recognized tag, or the filename hint to end in .html/.htm.
    """
    if not raw_bytes:
        raise EmptyInputError("empty input")
    if hint and hint.lower().endswith((".html", ".htm")):
        return "html"
    text = raw_bytes.decode("utf-8", errors="replace").lstrip("﻿").lstrip()
    if text.startswith("<") and _HTML_TAG_RE.search(text):
        return "html"
    return "marked_text"


def _collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


class _HtmlDocParser(HTMLParser):
    """Lenient HTML parser emitting (kind, level, text) block events.

    Content inside script/style/nav is dropped entirely. Table content is
    captured cell by cell; nested tables merge into the enclosing cell.
    """

    _DROP_TAGS = {"script", "style", "nav"}
    _FLUSH_TAGS = {
        "p", "div", "section", "article", "header", "footer", "main",
        "aside", "ul", "ol", "blockquote", "pre", "figure", "form", "body",
    }

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.events: list[tuple[str, int, str]] = []
        self.title_parts: list[str] = []
        self._drop_depth = 0
        self._in_title = False
        self._buf: list[str] = []
        self._heading_level = 0
        self._in_li = False
        self._table_depth = 0
        self._rows: list[list[str]] = []
        self._cell: list[str] | None = None

    # -- block buffer helpers --

    def _flush_paragraph(self):
        text = _collapse_ws("".join(self._buf))
        self._buf = []
        if not text:
            return
        if self._heading_level:
            self.events.append((HEADING, self._heading_level, text))
        elif self._in_li:
            self.events.append((LIST_ITEM, 0, text))
        else:
            self.events.append((PARAGRAPH, 0, text))

    def _finish_table(self):
        rows = ["|".join(row) for row in self._rows if row]
        self._rows = []
        self._cell = None
        if rows:
            self.events.append((TABLE, 0, "\n".join(rows)))

    # -- HTMLParser hooks --

    def handle_starttag(self, tag, attrs):
        if tag in self._DROP_TAGS:
            self._drop_depth += 1
            return
        if self._drop_depth:
            return
        if tag == "title":
            self._in_title = True
            return
        if self._table_depth:
            if tag == "table":
                self._table_depth += 1
            elif self._table_depth == 1 and tag == "tr":
                self._rows.append([])
                self._cell = None
            elif self._table_depth == 1 and tag in ("td", "th"):
                self._cell = []
            return
        if tag == "table":
            self._flush_paragraph()
            self._heading_level = 0
            self._in_li = False
            self._table_depth = 1
            self._rows = []
        elif len(tag) == 2 and tag[0] == "h" and tag[1].isdigit() and 1 <= int(tag[1]) <= 6:
            self._flush_paragraph()
            self._in_li = False
            self._heading_level = int(tag[1])
        elif tag == "li":
            self._flush_paragraph()
            self._heading_level = 0
            self._in_li = True
        elif tag == "br":
            self._buf.append(" ")
        elif tag in self._FLUSH_TAGS:
            # an unclosed heading is implicitly ended by the next block element
            self._flush_paragraph()
            self._heading_level = 0
            self._in_li = False

    def handle_endtag(self, tag):
        if tag in self._DROP_TAGS:
            self._drop_depth = max(0, self._drop_depth - 1)
            return
        if self._drop_depth:
            return
        if tag == "title":
            self._in_title = False
            return
        if self._table_depth:
            if tag == "table":
                self._table_depth -= 1
                if self._table_depth == 0:
                    self._finish_table()
            elif self._table_depth == 1 and tag in ("td", "th") and self._cell is not None:
                text = escape_cell(_collapse_ws("".join(self._cell)))
                if self._rows:
                    self._rows[-1].append(text)
                self._cell = None
            return
        if len(tag) == 2 and tag[0] == "h" and tag[1].isdigit():
            self._flush_paragraph()
            self._heading_level = 0
        elif tag == "li":
            self._flush_paragraph()
            self._in_li = False
        elif tag in self._FLUSH_TAGS or tag == "p":
            self._flush_paragraph()
            self._in_li = False

    def handle_data(self, data):
        if self._drop_depth:
            return
        if self._in_title:
            self.title_parts.append(data)
            return
        if self._table_depth:
            if self._cell is not None:
                self._cell.append(data)
            return
        self._buf.append(data)

    def finish(self):
        self.close()
        if self._table_depth:
            self._finish_table()
        self._flush_paragraph()


def _build_document(
    events: list[tuple[str, int, str]],
    doc_id: str,
    fmt: str,
    metadata: dict[str, str],
    title_hint: str = "",
    source_uri: str = "",
) -> Document:
    """Assemble blocks from events, deriving heading paths with a level stack."""
    if not events:
        raise NoContentError(f"no blocks extracted from {doc_id!r}")
    blocks: list[Block] = []
    stack: list[tuple[int, str]] = []  # (level, heading text)
    for kind, level, text in events:
        if kind == HEADING:
            while stack and stack[-1][0] >= level:
                stack.pop()
            path = [t for _, t in stack]
            stack.append((level, text))
        else:
            path = [t for _, t in stack]
        blocks.append(Block(len(blocks), kind, text, path, level))

    meta = dict(metadata or {})
    meta.setdefault("subject", "")
    title = meta.get("title") or title_hint
    if not title:
        first_heading = next((b.text for b in blocks if b.kind == HEADING), "")
        title = first_heading or doc_id
    return Document(
        doc_id=doc_id,
        title=title,
        source_uri=source_uri or meta.get("source_uri", ""),
        format=fmt,
        blocks=tuple(blocks),
        metadata=meta,
    )


def parse_html(raw: str, doc_id: str, metadata: dict[str, str] | None = None,
               source_uri: str = "") -> Document:
    """Parse (possibly sloppy) HTML into a Document.

    One block per heading/paragraph/table/list-item in source order;
    script/style/nav content is dropped. Raises NoContentError when nothing
    survives extraction.
    """
    parser = _HtmlDocParser()
    parser.feed(raw)
    parser.finish()
    title = _collapse_ws("".join(parser.title_parts))
    return _build_document(parser.events, doc_id, "html", metadata or {}, title, source_uri)


def parse_marked_text(raw: str, doc_id: str, metadata: dict[str, str] | None = None,
                      source_uri: str = "") -> Document:
    """Parse marked text (see module docstring for the line conventions)."""
    events: list[tuple[str, int, str]] = []
    para_lines: list[str] = []
    table_rows: list[str] = []

    def flush_para():
        if para_lines:
            events.append((PARAGRAPH, 0, " ".join(para_lines)))
            para_lines.clear()

    def flush_table():
        if table_rows:
            events.append((TABLE, 0, "\n".join(table_rows)))
            table_rows.clear()

    for line in raw.split("\n"):
        stripped = line.strip()
        if not stripped:
            flush_para()
            flush_table()
            continue
        m = _MARKED_HEADING_RE.match(stripped)
        if m:
            flush_para()
            flush_table()
            events.append((HEADING, len(m.group(1)), m.group(2).strip()))
            continue
        if _UNESCAPED_PIPE_RE.search(stripped):
            flush_para()
            table_rows.append(stripped)
            continue
        flush_table()
        para_lines.append(stripped)
    flush_para()
    flush_table()

    return _build_document(events, doc_id, "marked_text", metadata or {}, "", source_uri)


def parse_document(raw_bytes: bytes, doc_id: str, metadata: dict[str, str] | None = None,
                   hint: str | None = None, source_uri: str = "") -> Document:
    """Detect the format of raw bytes and parse accordingly."""
    fmt = detect_format(raw_bytes, hint)
    text = raw_bytes.decode("utf-8", errors="replace").lstrip("﻿")
    if fmt == "html":
        return parse_html(text, doc_id, metadata, source_uri)
    return parse_marked_text(text, doc_id, metadata, source_uri)
