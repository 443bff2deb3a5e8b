"""Smoke test for the rotscore_py extension module.

Build first with `cargo build -p rotscore-py --release`. The script looks for
the shared library under target/ unless rotscore_py is already importable.
"""

import importlib.util
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        import rotscore_py

        return rotscore_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "librotscore_py.so"
        if lib.exists():
            break
    else:
        sys.exit("librotscore_py.so not found; run cargo build -p rotscore-py --release")
    tmp = Path(tempfile.mkdtemp())
    target = tmp / "rotscore_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("rotscore_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    rs = load_module()
    ref = "SELECT fname FROM student WHERE age > 20"

    assert "pets" in rs.schema_ids()
    engine = rs.Engine()
    assert engine.parse("select  1")["canonical"] == "SELECT 1"
    assert "TableScan[student]" in engine.plan(ref, "pets")["tree"]
    assert engine.score(ref, ref, "pets") == 1.0
    assert engine.score("SELEC 1", ref, "pets") == -1.0
    assert engine.score("SELECT nope FROM student", ref, "pets") == -0.6
    assert engine.outcome(ref, ref, "pets", scorer="ex")["grade"] == "correct"

    cte = "WITH a AS (SELECT * FROM student WHERE age > 20) SELECT fname FROM a"
    tokens = engine.parse(cte)["tokens"]
    kl = [0.01 * i for i in range(len(tokens))]
    trace = engine.reward_trace(cte, ref, "pets", kl=kl, tokens=tokens)
    expected = trace["outcome"]["value"] + sum(trace["increments"]) - 0.05 * sum(kl)
    assert math.isclose(sum(trace["rewards"]), expected, abs_tol=1e-9)
    assert len(trace["rewards"]) == len(tokens)

    model = rs.Model(seed=3)
    assert model.parameter_count == 83010
    gmn = rs.Engine(scorer="gmn", model=model)
    assert abs(gmn.score(ref, ref, "pets") - 1.0) <= 1e-5
    again = rs.Model.from_checkpoint(model.checkpoint())
    assert again.checkpoint() == model.checkpoint()

    custom = engine.with_schema(
        "tiny",
        '{"tables":[{"name":"t","columns":[{"name":"a","type":"number"}],"primary_key":["a"]}]}',
        '{"tables":{"t":{"columns":["a"],"rows":[[1],[2]]}}}',
    )
    assert custom.execute("SELECT SUM(a) FROM t", "tiny")["rows"] == [[3]]

    line = '{"id":"q","op":"score","schema":"pets","gen":"%s","ref":"%s"}' % (ref, ref)
    out = engine.handle_batch([line, "not json"])
    assert '"ok":true' in out[0] and "malformed-request" in out[1]

    assert rs.auc([0.1, 0.9, 0.4], [False, True, True]) == 1.0
    try:
        engine.score(ref, ref, "nowhere")
    except rs.RotscoreError as e:
        assert "unknown-schema" in str(e)
    else:
        raise AssertionError("unknown schema accepted")

    train, held, held_ids = rs.gen_pairs(n=60, held_out_n=30, seed=1)
    assert len(train) == 60 and len(held) == 30
    assert all(p["schema_id"] in held_ids for p in held)
    print("rotscore_py smoke test passed")


if __name__ == "__main__":
    main()
