import time

import pytest

from bcsnet.config import TrainConfig, dump_config
from bcsnet.training import evaluate_records, model_from_checkpoint, resolve_dataset, train

TINY = dict(image_size=(32, 32), encoder_channels=(4, 8, 8, 8), decoder_width=8, boundary_width=8,
            batch_size=2, epochs=2, data="synthetic:4")


def tiny_config(**kw) -> TrainConfig:
    return TrainConfig(**{**TINY, **kw})


@pytest.fixture
def tiny_toml(tmp_path):
    def write(**kw):
        path = tmp_path / "tiny.toml"
        path.write_text(dump_config(tiny_config(**kw)))
        return path
    return write


class OverfitRuns:
    """Full-size 300-epoch runs on synthetic:20, cached for the session so the
    acceptance criteria that share a run do not retrain it."""

    def __init__(self):
        self._cache = {}

    def get(self, seed=0, disable_aggc=False, disable_sg=False):
        key = (seed, disable_aggc, disable_sg)
        if key not in self._cache:
            self._cache[key] = self.run(*key)
        return self._cache[key]

    @staticmethod
    def run(seed=0, disable_aggc=False, disable_sg=False):
        cfg = TrainConfig(epochs=300, seed=seed, disable_aggc=disable_aggc, disable_sg=disable_sg)
        records = resolve_dataset(cfg.data, cfg.image_size, cfg.seed)
        start = time.perf_counter()
        ckpt, curve = train(cfg, records)
        elapsed = time.perf_counter() - start
        model = model_from_checkpoint(ckpt)
        report = evaluate_records(model, records)
        return {"ckpt": ckpt, "curve": curve, "records": records, "model": model,
                "report": report, "seconds": elapsed}


@pytest.fixture(scope="session")
def overfit_runs():
    return OverfitRuns()


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    def check(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append((number, f"[{status}] criterion {number}: {title} ({detail})"))
        assert ok, f"criterion {number} failed: {title} ({detail})"
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
