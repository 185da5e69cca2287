"""Smoke test for the claprobe extension module.

Build and run from the workspace root:

    cargo build -p claprobe-py --release
    cp target/release/libclaprobe.so crates/python/python/claprobe.so
    python3 crates/python/python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import claprobe  # noqa: E402


def main():
    assert claprobe.rouge1("it is paris", ["paris"]) == 0.5
    assert claprobe.rouge1("it is paris", ["paris"], variant="recall") == 1.0
    assert claprobe.label_qa("london", ["paris"]) == 1
    assert claprobe.label_qa("paris", ["paris", "the capital"]) == 0
    assert claprobe.label_cot("... so the answer is yes", "yes") == 0
    assert claprobe.is_refusal("I'm sorry, I cannot answer that.")

    assert claprobe.auc([0.1, 0.9, 0.4, 0.8], [0, 1, 0, 1]) == 1.0
    assert claprobe.auc([0.1, 0.2], [1, 1]) is None
    t, f1 = claprobe.pick_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert f1 == 1.0 and 0.2 < t <= 0.8
    assert claprobe.macro_f1([0, 1, 1], [0, 1, 1]) == 1.0
    assert math.isclose(claprobe.pct_gain(53.8, 42.1), 100 * 11.7 / 42.1)
    assert math.isclose(claprobe.lr_at(4, 1e-3), 1e-3)
    assert claprobe.pe_score([-0.5, -1.5]) == 1.0

    assert claprobe.decide("clap_ii", True, True) == "abstain"
    assert claprobe.decide("clap_i", True, False) == "emit_alt"
    assert claprobe.decide("def", True) == "emit_greedy"
    report = claprobe.mitigate(
        [(1, 0.9, 0, 0.1), (0, 0.2, 1, 0.8), (1, 0.7, 1, 0.9)], threshold=0.5
    )
    by_name = {s["strategy"]: s for s in report["strategies"]}
    assert by_name["clap_ii"]["pct_nh"] == 100.0
    assert by_name["clap_i"]["h_to_nh"] == 1

    ds = claprobe.Dataset.synth(n_prompts=300, n_layers=6, d_llm=16, signal_layer=3, seed=1)
    assert (ds.n_layers, ds.d_llm, len(ds)) == (6, 16, 300)
    probe = claprobe.Probe.train(ds, kind="clap", d_model=16, n_heads=2, max_epochs=15, seed=0)
    test_auc = probe.evaluate(ds, "test")
    assert test_auc > 0.9, test_auc
    scores = probe.score(ds, "test")
    assert all(0.0 < s < 1.0 for s in scores)
    assert len(probe.history()["epochs"]) == 15

    with tempfile.TemporaryDirectory() as tmp:
        ds.save(os.path.join(tmp, "data"))
        again = claprobe.Dataset.load(os.path.join(tmp, "data"))
        assert again.fingerprint() == ds.fingerprint()
        probe.save(os.path.join(tmp, "probe.ckpt"), ds)
        loaded = claprobe.Probe.load(os.path.join(tmp, "probe.ckpt"))
        assert loaded.score(again, "test") == scores

    try:
        claprobe.Probe.train(ds, kind="svm")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown probe kind accepted")

    print(f"claprobe smoke test ok (clap test auc {test_auc:.3f})")


if __name__ == "__main__":
    main()
