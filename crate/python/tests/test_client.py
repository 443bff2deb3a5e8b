import json
import math
import re
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from rotscore_client import Client, ClientConfig, TransportError, score_batch  # noqa: E402

ROOT = Path(__file__).resolve().parents[2]
REF = "SELECT fname FROM student WHERE age > 20"


def binary():
    for profile in ("release", "debug"):
        p = ROOT / "target" / profile / "rotscore"
        if p.exists():
            return str(p)
    pytest.skip("rotscore binary not built")


def stdio():
    return ClientConfig(endpoint=[binary(), "serve", "--workers", "2"], timeout=30)


def req(i, gen=REF, op="score"):
    return {"id": f"r{i}", "op": op, "schema": "pets", "gen": gen, "ref": REF}


def test_identical_sql_scores_one_like_the_cli():
    [resp] = score_batch([req(0)], stdio())
    cli = subprocess.run(
        [binary(), "score", "--schema", "pets", "--gen-sql", REF, "--ref-sql", REF],
        capture_output=True, text=True, check=True,
    )
    assert resp["ok"]
    assert resp["payload"]["score"] == 1.0
    assert resp["payload"]["score"] == json.loads(cli.stdout)["score"]


PARITY = [
    ("pets", "SELECT fname FROM student WHERE age > 20", "SELECT fname FROM student WHERE age > 20"),
    ("pets", "SELECT lname FROM student WHERE age > 21", "SELECT fname FROM student WHERE age > 20"),
    ("pets", "SELECT fname FROM student", "SELECT fname FROM student WHERE age >= 20"),
    ("pets", "SELECT COUNT(*) FROM student", "SELECT COUNT(*) FROM student WHERE sex = 'F'"),
    ("pets", "SELEC fname", "SELECT fname FROM student"),
    ("pets", "SELECT nope FROM student", "SELECT fname FROM student"),
    ("singer", "SELECT name FROM singer WHERE birth_year IN (1980, 1990)", "SELECT name FROM singer WHERE birth_year = 1980 OR birth_year = 1990"),
    ("singer", "SELECT name FROM singer ORDER BY birth_year DESC LIMIT 3", "SELECT name FROM singer ORDER BY birth_year LIMIT 3"),
    ("singer", "SELECT COUNT(*) FROM singer", "SELECT name FROM singer"),
    ("forum", "SELECT id FROM users WHERE reputation > 100", "SELECT id FROM users WHERE 100 < reputation"),
    ("forum", "WITH a AS (SELECT * FROM users WHERE reputation > 100) SELECT id FROM a", "SELECT id FROM users WHERE reputation > 100"),
    ("forum", "SELECT displayname FROM users ORDER BY reputation DESC LIMIT 3", "SELECT id FROM users WHERE reputation > 100"),
    ("forum", "SELECT AVG(score) FROM posts", "SELECT MAX(score) FROM posts"),
    ("workshop", "SELECT Name FROM technician WHERE Age IN (36, 37)", "SELECT Name FROM technician WHERE Age = 36 OR Age = 37"),
    ("workshop", "SELECT * FROM Products WHERE Price >= 60 OR Price <= 120", "SELECT * FROM Products WHERE Price >= 60 AND Price <= 120"),
    ("workshop", "SELECT Name FROM technician WHERE Age < 40", "SELECT Name FROM technician WHERE Age > 40"),
    ("workshop", "SELECT Name, Age FROM technician", "SELECT Name FROM technician"),
    ("workshop", "SELECT Name FROM technician WHERE", "SELECT Name FROM technician"),
    ("singer", "SELECT s.name FROM singer AS s WHERE s.birth_year > 1980", "SELECT name FROM singer WHERE birth_year > 1980"),
    ("pets", "SELECT fname, lname FROM student WHERE age BETWEEN 19 AND 21", "SELECT fname FROM student WHERE age >= 19 AND age <= 21"),
]


def test_twenty_requests_match_cli_score_text():
    t = time.monotonic()
    reqs = [{"id": f"p{i}", "op": "score", "schema": s, "gen": g, "ref": r} for i, (s, g, r) in enumerate(PARITY)]
    out = score_batch(reqs, stdio())
    for resp, (s, g, r) in zip(out, PARITY):
        cli = subprocess.run(
            [binary(), "score", "--schema", s, "--gen-sql", g, "--ref-sql", r],
            capture_output=True, text=True, check=True,
        )
        text = re.search(r'"score":([^,}]+)', cli.stdout).group(1)
        assert resp["ok"], resp
        assert json.dumps(resp["payload"]["score"]) == text, (g, r)
        assert resp["payload"] == json.loads(cli.stdout)
    assert time.monotonic() - t < 30


def test_one_malformed_among_64():
    requests = [req(i, REF if i % 2 else "SELECT lname FROM student") for i in range(64)]
    requests[17] = {"id": "r17", "op": "score"}
    out = score_batch(requests, stdio())
    assert len(out) == 64
    assert [r["id"] for r in out] == [f"r{i}" for i in range(64)]
    errors = [r for r in out if not r["ok"]]
    assert len(errors) == 1 and errors[0]["id"] == "r17"
    assert sum(1 for r in out if r["ok"] and "score" in r["payload"]) == 63


def test_raw_garbage_line_gets_an_error_record():
    out = score_batch([req(0), "{nope", req(2)], stdio())
    assert out[0]["id"] == "r0" and out[2]["id"] == "r2"
    assert out[1]["ok"] is False and out[1]["error"]["class"] == "malformed-request"


def test_reward_trace_identity_client_side():
    cte = "WITH a AS (SELECT * FROM student WHERE age > 20) SELECT fname FROM a"
    with Client(stdio()) as c:
        [parsed] = c.score_batch([{"id": "p", "op": "parse", "gen": cte}])
        tokens = parsed["payload"]["tokens"]
        kl = [0.03 * (i % 5) for i in range(len(tokens))]
        r = dict(req("t", cte, "reward_trace"), kl=kl, tokens=tokens)
        [trace] = c.score_batch([r])
    t = trace["payload"]
    expected = t["outcome"]["value"] + sum(t["increments"]) - 0.05 * sum(kl)
    assert math.isclose(sum(t["rewards"]), expected, abs_tol=1e-9)
    assert t["subquery_ends"][-1] == t["eos"] == len(tokens) - 1


def test_client_reuses_and_reorders_over_tcp():
    proc = subprocess.Popen([binary(), "serve", "--port", "0", "--workers", "3"], stdout=subprocess.PIPE, text=True)
    try:
        addr = json.loads(proc.stdout.readline())["listening"]
        with Client(ClientConfig(endpoint=addr, timeout=30)) as c:
            for batch in range(3):
                reqs = [req(f"{batch}-{i}", "SELECT lname FROM student" if i % 3 else REF) for i in range(20)]
                out = c.score_batch(reqs)
                assert [r["id"] for r in out] == [r["id"] for r in reqs]
    finally:
        proc.kill()
        proc.wait()


def test_retries_then_fails_on_dead_endpoint():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    cfg = ClientConfig(endpoint=f"127.0.0.1:{port}", timeout=1, retries=2)
    t = time.monotonic()
    with pytest.raises(TransportError, match="3 attempts"):
        score_batch([req(0)], cfg)
    assert time.monotonic() - t < 10


def test_timeout_must_be_positive():
    with pytest.raises(ValueError):
        ClientConfig(endpoint="localhost:1", timeout=0)


def test_silent_endpoint_times_out():
    server = socket.socket()
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    try:
        cfg = ClientConfig(endpoint="127.0.0.1:%d" % server.getsockname()[1], timeout=0.3, retries=0)
        with pytest.raises(TimeoutError):
            score_batch([req(0)], cfg)
    finally:
        server.close()
