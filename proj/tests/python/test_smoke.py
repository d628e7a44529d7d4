import json

import pytest

import ccprobe


def test_sample_and_recognize():
    s = ccprobe.sample_sentence("train", seed=3, label="positive")
    r = ccprobe.recognize(s["text"], "train")
    assert r["verdict"] == "positive"
    assert r["features"] == s["features"]
    assert ccprobe.recognize("the cat sat .", "train")["verdict"] == "reject"


def test_negate_core():
    core = "The harder the two cats fight".split()
    assert ccprobe.negate_core(core) == "The harder two fight the cats".split()


def test_lexical_overlap_is_reported():
    overlap = ccprobe.lexical_overlap()
    assert overlap["KNOWNWORD"] == ["clear", "known"]


def test_pool_and_dataset():
    pool = ccprobe.artificial_pool("train", 3000, seed=1)
    assert len(pool) == 6000
    assert pool[0]["pair_id"] == pool[1]["pair_id"]
    d = ccprobe.build_dataset(pool, "length", 5, split="train", seed=2)
    assert d["balanced"]
    hi = ccprobe.quartile_upper(d["v_min"], d["v_max"])
    assert max(item["feature_value"] for item in d["items"]) <= hi


def test_probe_separates_a_line():
    x = [[float(i)] for i in range(-5, 6) if i != 0]
    labels = ["positive" if v[0] > 0 else "negative" for v in x]
    model = ccprobe.train_probe(x, labels)
    assert model["train_predictions"] == labels


def test_bag_mock_ignores_order():
    a = ccprobe.mock_embed("a b c", mode="bag", seed=4)
    b = ccprobe.mock_embed("c a b", mode="bag", seed=4)
    for la, lb in zip(a["pooled"], b["pooled"]):
        assert la == pytest.approx(lb, abs=1e-12)
    p = ccprobe.mock_embed("a b c", mode="positional", seed=4)
    q = ccprobe.mock_embed("c a b", mode="positional", seed=4)
    assert p["pooled"][1] != q["pooled"][1]


def test_semantics_helpers():
    slots = {"ADJ1": "stronger", "ANT1": "weaker", "ADJ2": "faster", "ANT2": "slower",
             "NAME1": "Terry", "NAME2": "John"}
    s1 = ccprobe.render_scenario("S1", slots)
    assert s1["text"].endswith("Therefore, Terry is [MASK] than John.")
    assert s1["correct"] == "faster"
    cal = ccprobe.calibrate({"A": 0.3, "B": 0.1}, [{"A": 0.15, "B": 0.2}] * 5)
    assert cal["A"] == pytest.approx(2.0)
    assert cal["B"] == pytest.approx(0.5)
    assert ccprobe.decision_flip([True, True, False, False], [True, False, False, True]) == 50.0


def test_errors_carry_codes():
    with pytest.raises(ccprobe.CcprobeError, match="missing_slot"):
        ccprobe.render_scenario("S1", {"ADJ1": "x"})
    with pytest.raises(ccprobe.CcprobeError, match="invalid_config"):
        ccprobe.config_hash(json.dumps({"bogus": 1}))


def test_cli_round_trip(tmp_path):
    status, out, err = ccprobe.run_cli("--out", tmp_path, "generate", "--grammar", "test", "--n", "50", "--seed", "7")
    assert status == 0, err
    lines = (tmp_path / "artificial" / "test.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["meta"]["seed"] == 7
    assert len(lines) == 101
    status, out, err = ccprobe.run_cli("--out", tmp_path, "probe")
    assert status == 1
    assert json.loads(err.strip().splitlines()[-1])["error"]["code"] == "missing_input"
