import shutil
from pathlib import Path

import pytest

from esgkg.clients import EmbeddingClient, HashingEmbedder, GenerationClient, ScriptedLLM

REPO = Path(__file__).resolve().parents[1]
SYNTHETIC = REPO / "data" / "synthetic"

# criterion name -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def embedder():
    return EmbeddingClient(HashingEmbedder(dim=64), max_workers=1)


@pytest.fixture
def scripted():
    def make(replies=None, default=None):
        kw = {} if default is None else {"default": default}
        return GenerationClient(ScriptedLLM(replies, **kw), max_workers=2)
    return make


@pytest.fixture
def synthetic_config(tmp_path):
    """A copy of the bundled synthetic corpus whose output goes to tmp_path/out."""
    dst = tmp_path / "synthetic"
    shutil.copytree(SYNTHETIC, dst)
    cfg = dst / "config.yaml"
    text = cfg.read_text().replace("output_dir: ../../runs/synthetic", f"output_dir: {tmp_path / 'out'}")
    cfg.write_text(text)
    return cfg


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
