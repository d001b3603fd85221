"""Smoke test for the itop extension module.

Build and run from the repository root:

    cargo build --release -p itop-py
    cp target/release/libitop.so python/itop.so
    python3 python/smoke_test.py
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import itop  # noqa: E402

TOY = """
dataset = synth:classes=3,features=16,train_per_class=40,test_per_class=10,spread=0.3
hidden_widths = 12,8
epochs = 3
batch_size = 16
sparsity = 0.6
lr = 0.05
"""


def main():
    text = itop.config(TOY, ["method=set", "delta_t=4"])
    assert "method = set" in text, text

    dense = itop.allocate([[20, 10], [10, 4]], 0.3, "er")
    assert len(dense) == 2 and all(0 < d <= 1 for d in dense)
    assert math.isclose(itop.prune_rate(0.5, 10, 5), 0.25, abs_tol=1e-12)

    static = itop.train(TOY, ["method=static"])
    rs = [e["rs"] for e in static["epochs"]]
    assert len(rs) == 3 and len(set(rs)) == 1, rs

    dst = itop.train(TOY, ["method=set", "delta_t=4"])
    curve = [e["rs"] for e in dst["epochs"]]
    assert all(a <= b for a, b in zip(curve, curve[1:])), curve
    assert curve[-1] > rs[-1], (curve, rs)

    try:
        itop.config(TOY, ["sparsity=2"])
    except ValueError:
        pass
    else:
        raise AssertionError("bad sparsity accepted")

    failed = [c for c in itop.verify() if not c[1]]
    assert not failed, failed
    print(f"itop {itop.__version__}: smoke test passed (final R_s {curve[-1]:.3f})")


if __name__ == "__main__":
    main()
