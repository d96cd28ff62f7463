import json
import time

import pytest

from unipatch import verify


@pytest.fixture(scope="module")
def full_run():
    t0 = time.perf_counter()
    summary = verify.run_all(seed=0)
    return summary, time.perf_counter() - t0


def test_default_seed_passes_everything(full_run):
    summary, _ = full_run
    failed = [r["name"] for s in summary["suites"].values() for r in s["results"] if not r["passed"]]
    assert failed == []
    assert summary["properties"] == summary["passed"] >= 20


def test_every_suite_is_present(full_run):
    summary, _ = full_run
    assert set(summary["suites"]) == {
        "numkit", "vistream", "rope2d", "tokred", "encoder", "projector", "fusion", "gradients", "pipeline",
    }


def test_gradient_suite_under_a_minute(full_run):
    summary, _ = full_run
    assert summary["timings_s"]["gradients"] < 60


def test_rope_sign_flip_is_caught():
    summary = verify.run_all(seed=0, suites=["rope2d"], trials=200, mutation="rope_sign_flip")
    failed = {r["name"] for r in summary["suites"]["rope2d"]["results"] if not r["passed"]}
    assert "relative_position_invariance" in failed
    assert summary["failed"] > 0


def test_deterministic_counts_per_seed():
    a = verify.run_all(seed=3, suites=["tokred", "rope2d"], trials=50)
    b = verify.run_all(seed=3, suites=["tokred", "rope2d"], trials=50)
    strip = lambda s: {k: v for k, v in s.items() if k != "timings_s"}  # noqa: E731
    assert json.dumps(strip(a), default=float) == json.dumps(strip(b), default=float)


def test_unknown_suite_rejected():
    with pytest.raises(KeyError):
        verify.run_all(suites=["nope"])


def test_main_exit_status(capsys):
    assert verify.main(["--suite", "numkit", "--trials", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["suites"]["numkit"]["properties"] == 7
    assert verify.main(["--suite", "rope2d", "--trials", "20", "--mutate", "rope_sign_flip"]) == 1
