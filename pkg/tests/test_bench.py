import json
import subprocess
import sys
from pathlib import Path

import pytest

from errorcalc import kernels

BENCH = Path(__file__).resolve().parent.parent / "bench" / "bench_kernels.py"


@pytest.mark.skipif("cython" not in kernels.implementations(), reason="compiled extension not built")
def test_benchmark_runs_and_backends_match(tmp_path):
    out = tmp_path / "bench.json"
    proc = subprocess.run(
        [sys.executable, str(BENCH), "--bits", "20000", "--repeat", "1", "--json", str(out)],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 6 and all(r["match"] for r in rows)
