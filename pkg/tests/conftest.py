import pathlib

import pytest

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


@pytest.fixture
def corpus():
    def load(name: str) -> str:
        return (CORPUS / name).read_text(encoding="utf-8")

    return load
