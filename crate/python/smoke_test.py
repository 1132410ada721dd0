"""Smoke test for the pymechnli extension.

Build first:  cargo build -p mechnli-py --features extension-module
Then run:     python3 python/smoke_test.py   (or pytest python/smoke_test.py)

Set PYMECHNLI_LIB to point at a specific shared library.
"""

import importlib.util
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def _library():
    env = os.environ.get("PYMECHNLI_LIB")
    if env:
        return Path(env)
    for profile in ("debug", "release"):
        for name in ("libpymechnli.so", "libpymechnli.dylib", "pymechnli.dll"):
            p = ROOT / "target" / profile / name
            if p.exists():
                return p
    raise FileNotFoundError("build the extension with cargo first")


def load():
    tmp = Path(tempfile.mkdtemp())
    suffix = ".pyd" if sys.platform == "win32" else ".so"
    target = tmp / ("pymechnli" + suffix)
    shutil.copy(_library(), target)
    spec = importlib.util.spec_from_file_location("pymechnli", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def record(i):
    support = [
        f"ATP{i} was measured in yeast cells.",
        "Uptake was measured at 30 C.",
        "Levels rose after treatment.",
    ]
    conclusion = f"We conclude that ATP{i} inhibits uracil{i} transport."
    start = conclusion.index(f"ATP{i}")
    other = conclusion.index(f"uracil{i}")
    entities = [
        {"sentence": 0, "start": 0, "end": len(f"ATP{i}"), "type": "SIMPLE_CHEMICAL", "role": "none"},
        {"sentence": 3, "start": start, "end": start + len(f"ATP{i}"), "type": "SIMPLE_CHEMICAL", "role": "regulator"},
        {"sentence": 3, "start": other, "end": other + len(f"uracil{i}"), "type": "SIMPLE_CHEMICAL", "role": "regulated"},
    ]
    return {"id": f"abs{i}", "sentences": support + [conclusion], "entities": entities}


def corpus(n=12):
    return "".join(json.dumps(record(i)) + "\n" for i in range(n))


def test_pipeline_round_trip():
    m = load()
    extracted = m.extract_jsonl(corpus())
    rows = [json.loads(l) for l in extracted.splitlines()]
    assert len(rows) == 12
    assert rows[0]["abstract_id"] == "abs0"

    groups = m.perturb_jsonl(extracted, seed=7)
    assert groups == m.perturb_jsonl(extracted, seed=7)
    gs = [json.loads(l) for l in groups.splitlines()]
    kinds = {n["kind"] for g in gs for n in g["negatives"]}
    assert {"SEN", "SEP"} <= kinds

    train, dev, test = m.assemble_jsonl(groups, seed=7)
    instances = [json.loads(l) for part in (train, dev, test) for l in part.splitlines()]
    assert sum(1 for x in instances if x["label"] == "entailed") == 12

    everything = test + dev + train
    preds = "".join(
        json.dumps({"id": x["id"], "label": "not_entailed"}) + "\n" for x in map(json.loads, everything.splitlines())
    )
    report = json.loads(m.evaluate_json(everything, preds))
    assert report["report"]["category_recall"]["SEN"] == 1.0
    assert report["report"]["positive_f1"] == 0.0


def test_conclusion_helpers():
    m = load()
    assert m.perturb_conclusion("<re> A <er> inhibits <el> B <le>.", "SEN") == "<re> B <er> inhibits <el> A <le>."
    assert "<re>" in m.tokenize("<re> ATP <er> drives it")
    assert isinstance(m.__version__, str)


def test_errors_raise_value_error():
    m = load()
    for call in (
        lambda: m.extract_jsonl("not json"),
        lambda: m.perturb_conclusion("no markers", "SEN"),
        lambda: m.perturb_conclusion("<re> A <er> x <el> B <le>", "GEN"),
    ):
        try:
            call()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok  {name}")
