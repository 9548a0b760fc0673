from pathlib import Path

import pytest

from regqa.chunker import Chunk, count_tokens

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def pcs_text() -> str:
    return (DATA_DIR / "pcs.json").read_text(encoding="utf-8")


def make_chunk(chunk_id: str, text: str, doc_id: str | None = None,
               ordinal: int | None = None, **kw) -> Chunk:
    """Hand-built chunk for index tests; id format 'doc#k' is parsed."""
    if doc_id is None:
        doc_id, _, ord_str = chunk_id.partition("#")
        ordinal = int(ord_str) if ord_str else 0
    return Chunk(
        chunk_id=chunk_id,
        doc_id=doc_id,
        ordinal=ordinal if ordinal is not None else 0,
        text=text,
        token_count=count_tokens(text),
        **kw,
    )
