import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from entityflow.compiler import compile_files, compile_sources, program_path  # noqa: E402


@pytest.fixture(scope="session")
def shop():
    result = compile_files([program_path("shop")])
    assert result.ok, [str(d) for d in result.diagnostics]
    return result


def compile_one(text: str):
    return compile_sources([("t.sf", text)])


def codes(result) -> list[str]:
    return [d.code for d in result.diagnostics]
