import json
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from opskg import cli

DATA_DIR = Path(str(resources.files("opskg") / "data"))

TURNAROUND = DATA_DIR / "turnaround.txt"
TURNAROUND_TRUTH = DATA_DIR / "turnaround_truth.json"
OVERNIGHT = DATA_DIR / "overnight.txt"
OVERNIGHT_TRUTH = DATA_DIR / "overnight_truth.json"


@pytest.fixture(scope="session")
def runner():
    return CliRunner()


def run_cli(args, expect_exit=0):
    result = CliRunner().invoke(cli.main, args, catch_exceptions=False)
    assert result.exit_code == expect_exit, \
        f"exit {result.exit_code} for {args}:\n{result.output}"
    return result


@pytest.fixture(scope="session")
def pipeline_out(tmp_path_factory) -> Path:
    """One shared mock-backend pipeline run over the bundled corpus."""
    out = tmp_path_factory.mktemp("pipeline")
    run_cli(["pipeline", str(TURNAROUND), "--out-dir", str(out)])
    return out


@pytest.fixture(scope="session")
def pipeline_out_document(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("pipeline_doc")
    run_cli(["pipeline", str(TURNAROUND), "--out-dir", str(out),
             "--chunking", "document"])
    return out


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text("utf-8").splitlines()]
