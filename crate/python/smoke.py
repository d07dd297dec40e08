"""Smoke test for the compiled `figtab` module.

    maturin develop -m crates/py/Cargo.toml && python python/smoke.py
"""
import json
import pathlib
import sys

import figtab

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    t = figtab.parse_reply("Region\tSales\nNorth\t1,200\nSouth\t2.5k\n")
    assert t.header == ["Region", "Sales"]
    assert t.numeric == [[None, 1200.0], [None, 2500.0]]

    edited = t.apply_edit(1, 1, "2.3 million")
    assert edited.numeric[1][1] == 2_300_000.0
    for fmt in ("csv", "tsv", "json"):
        assert figtab.import_table(edited.export(fmt), fmt) == edited, fmt
    assert edited.export("xlsx")[:2] == b"PK"

    score = figtab.rmsf1([[1.0, 2.0, 3.0]], [[3.1, 2.0, 1.0]], tol=0.05)
    assert score.f1 == 1.0, score
    assert figtab.bootstrap_ci([1.0] * 5, seed=1) == (1.0, 1.0)

    try:
        figtab.detect_figures(b"%PDF-1.4 truncated")
    except figtab.MalformedPdfError:
        pass
    else:
        raise AssertionError("malformed PDF accepted")

    manifest = ROOT / "datasets" / "mini" / "manifest.json"
    if manifest.exists():
        report = json.loads(figtab.run_eval(str(manifest), backend="echo", seed=7))
        assert report["overall"]["mean"] == 1.0, report["overall"]

    print("figtab", figtab.__version__, "smoke ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
