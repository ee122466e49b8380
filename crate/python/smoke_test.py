"""Smoke test for the pinject_py extension module.

Build and install first:
    pip install maturin
    maturin develop -m crates/python/Cargo.toml
"""

import json
import pathlib
import tempfile

import pinject_py as pj

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        store = pathlib.Path(tmp) / "store"
        count, malformed = pj.Corpus.ingest(str(FIXTURES / "corpus.jsonl"), str(store))
        assert (count, malformed) == (5, [])

        corpus = pj.Corpus.open(str(store))
        assert len(corpus) == 5 and "fr" in corpus
        index = pj.Bm25Index.build(corpus)
        index.save(str(store))
        hits = pj.Bm25Index.load(corpus).retrieve("capital of France", k=2)
        assert hits[0][0] == "fr", hits

        noise = corpus.sample(3, seed=1, exclude=["fr"])
        assert len(noise) == 3 and all(p.id != "fr" for p in noise)
        assert [p.id for p in noise] == [p.id for p in corpus.sample(3, seed=1, exclude=["fr"])]

        gold = corpus.get("ni")
        text, digest = pj.build_prompt("passage_injection", "Which country is Northern Ireland part of?", [gold])
        assert text.index(gold.text) > text.index("<think>")
        assert len(digest) == 64

        cf = pj.make_counterfactual(gold, "United Kingdom", "United States")
        assert pj.count_occurrences(cf.text, "united kingdom") == 0
        assert pj.pick_distractor(["United States", "Canada"], "United Kingdom", 3) in ("United States", "Canada")

        reasoning, answer, done = pj.split_reasoning("The passage is wrong.</think>\nAnswer: United Kingdom")
        assert done and reasoning == "The passage is wrong."
        prediction = pj.extract_answer(answer)
        assert pj.best_f1(prediction, ["United Kingdom", "UK"]) == 1.0
        assert pj.token_f1("Guido", "Guido van Rossum")[2] == 0.5
        assert pj.normalize_answer("The  U.S.!") == "us"
        assert pj.micro_average([1.0, 0.0, 0.5]) == 0.5
        assert pj.tokenize("Hello, World") == ["hello", "world"]

        config = pathlib.Path(tmp) / "exp.toml"
        config.write_text(
            "\n".join(
                [
                    f"datasets = [{{ path = {json.dumps(str(FIXTURES / 'questions.jsonl'))} }}]",
                    'strategies = ["vanilla_rag", "passage_injection"]',
                    "k_values = [2]",
                    'condition = "retrieved"',
                    'store_dir = "store"',
                    'output_dir = "run"',
                    "",
                    "[endpoint]",
                    'kind = "mock"',
                    f"script = {json.dumps(str(FIXTURES / 'mock_script.jsonl'))}",
                ]
            )
        )
        planned, skipped, added, errors = pj.run_experiment(str(config))
        assert (planned, skipped, added, errors) == (24, 0, 24, 0)
        assert pj.run_experiment(str(config))[2] == 0
        table = pj.report(str(pathlib.Path(tmp) / "run" / "results.jsonl"))
        assert "Micro-Average" in table

    print(f"pinject_py {pj.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
