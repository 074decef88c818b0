"""Smoke test for the cilsynth Python extension.

Build and install first:
    pip install maturin
    pip install --no-build-isolation ./crates/python
"""

import math
import tempfile
from pathlib import Path

import cilsynth_py as cs


def main() -> None:
    cfg = cs.Config(overrides={"CILSYNTH_TRAIN_ITERATIONS": "2000"})
    assert cfg.to_dict()["train"]["iterations"] == 2000
    assert len(cfg.hash()) == 64

    data = cs.generate(cfg, seed=3)
    again = cs.generate(cfg, seed=3)
    assert len(data) == 8 and data.scans == again.scans
    assert all(len(y) == 420 for y in data.scans)

    bank = cs.train(data, cfg, constrained=True)
    assert bank.certified_pairs() == ["12", "13"]
    checks = bank.verify()
    assert all(ok for ok, _ in checks.values()), checks

    tampered = bank.to_dict()
    tampered["certificates"]["12"]["witness"]["lambda"][0] = 0.25
    ok, failing = cs.Bank.from_dict(tampered).verify()["12"]
    assert not ok and any("lambda" in name for name in failing)

    with tempfile.TemporaryDirectory() as d:
        path = str(Path(d) / "bank.json")
        bank.save(path)
        assert cs.Bank.load(path).to_dict() == bank.to_dict()

    y = cs.scan(0.1, -0.2, config=cfg)
    assert len(y) == 420 and all(0.0 <= v <= 10.0 for v in y)
    assert bank.predict(y) in (1, 2, 3)
    assert bank.predict(y) == cs.decide(*bank.scores(y))

    run = cs.simulate(bank, 0.1, -0.2, cfg, seed=5)
    assert run["outcome"]["kind"] in {"crash", "oscillation", "converged", "not_converged"}
    assert all(math.isfinite(t) for t in run["trajectory"]["times"])

    try:
        cs.Config(overrides={"CILSYNTH_TRAIN_GAMMA": "-1"})
    except ValueError:
        pass
    else:
        raise AssertionError("negative gamma accepted")

    print(f"smoke test ok: outcome {run['outcome']['kind']}, cilsynth {cs.__version__}")


if __name__ == "__main__":
    main()
