import json
from contextlib import contextmanager

import pytest

from attribias.corpus import save_benchmark
from attribias.demo import make_toy_benchmark, write_all_pass_verdicts
from attribias.retrieval.kernel import BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


@pytest.fixture(scope="session")
def toy_bench():
    return make_toy_benchmark(n_queries=40, seed=1)


@pytest.fixture
def toy_config(tmp_path, toy_bench):
    """Normalized config for an oracle run over the toy benchmark."""
    from attribias.config import normalize

    qpath, cpath, rpath = save_benchmark(toy_bench, tmp_path / "bench")
    verdicts = write_all_pass_verdicts(toy_bench, tmp_path / "verdicts.csv")

    def make(**overrides):
        raw = {
            "benchmark": {"queries": str(qpath), "collection": str(cpath), "qrels": str(rpath)},
            "output_dir": str(tmp_path / "run"),
            "seed": 7,
            "audit": {"verdicts": str(verdicts)},
            "gateway": {"oracle": {"bias_strength": 0.5}},
        }
        for key, value in overrides.items():
            node = raw
            parts = key.split("__")
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = value
        return normalize(raw)

    return make


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def criterion(request):
    """``with criterion(name) as notes:`` records one PASS/FAIL line for ``name``."""
    lines = request.config.stash[_VERDICTS]

    @contextmanager
    def run(name):
        notes = []
        try:
            yield notes
        except BaseException as e:
            line = f"FAIL  {name}: " + "; ".join(notes + [f"{type(e).__name__}: {e}".splitlines()[0]])
            print(line)
            lines.append(line)
            raise
        line = f"PASS  {name}" + (": " + "; ".join(notes) if notes else "")
        print(line)
        lines.append(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
