"""Benchmark the compiled scanner kernels against the pure-Python fallback.

Feeds both implementations an identical seeded synthetic corpus, checks
they produce identical output, and reports tokens/second for tokenize and
the full tokenize+scan pipeline. Runs fine when the compiled extension is
absent; it then reports the pure implementation only.

Usage: python benchmarks/bench_kernels.py [--docs N] [--repeats N] [--seed N]
"""

import argparse
import random
import time

from kgmon import _scan_py

try:
    from kgmon import _speedups
except ImportError:
    _speedups = None

SURFACES = [
    "Acme Corp",
    "Globex Inc",
    "初音 Research Group",
    "Jane Doe",
    "John Smith",
    "Maria Garcia-Lopez",
    "Berlin",
    "Paris",
    "New York City",
    "Lake Victoria",
]


def synth_corpus(n_docs: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    vocab = [f"word{i}" for i in range(500)]
    docs = []
    for _ in range(n_docs):
        words = []
        for _ in range(rng.randrange(150, 400)):
            if rng.random() < 0.08:
                words.append(rng.choice(SURFACES))
            else:
                words.append(rng.choice(vocab))
            if rng.random() < 0.12:
                words[-1] += "."
        docs.append(" ".join(words))
    return docs


def build_index(surfaces: list[str]) -> dict:
    index: dict = {}
    for surface in surfaces:
        toks = tuple(t for t, _ in _scan_py.tokenize(surface))
        index.setdefault(toks[0], []).append((toks, surface))
    for candidates in index.values():
        candidates.sort(key=lambda c: (-len(c[0]), c[1]))
    return index


def run_once(impl, docs: list[str], index: dict) -> tuple[float, int, int]:
    start = time.perf_counter()
    tokens = 0
    matches = 0
    for doc in docs:
        toks = impl.tokenize(doc)
        texts = [t for t, _ in toks]
        matches += len(impl.find_matches(texts, index))
        tokens += len(toks)
    return time.perf_counter() - start, tokens, matches


def bench(impl, docs: list[str], index: dict, repeats: int) -> tuple[float, int, int]:
    best = float("inf")
    tokens = matches = 0
    for _ in range(repeats):
        elapsed, tokens, matches = run_once(impl, docs, index)
        best = min(best, elapsed)
    return best, tokens, matches


def check_equivalence(docs: list[str], index: dict) -> None:
    for doc in docs[:50]:
        a = _scan_py.tokenize(doc)
        b = _speedups.tokenize(doc)
        if a != b:
            raise AssertionError("tokenize outputs differ between implementations")
        texts = [t for t, _ in a]
        if _scan_py.find_matches(texts, index) != _speedups.find_matches(
            texts, index
        ):
            raise AssertionError("find_matches outputs differ between implementations")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=300)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    docs = synth_corpus(args.docs, args.seed)
    index = build_index(SURFACES)
    total_chars = sum(len(d) for d in docs)
    print(f"corpus: {len(docs)} docs, {total_chars} chars, seed {args.seed}")

    pure_time, tokens, pure_matches = bench(_scan_py, docs, index, args.repeats)
    print(
        f"pure     : {pure_time:8.4f} s   {tokens / pure_time:12.0f} tokens/s"
        f"   ({pure_matches} matches)"
    )

    if _speedups is None:
        print("compiled : extension not built, skipping comparison")
        return

    check_equivalence(docs, index)
    fast_time, tokens, fast_matches = bench(_speedups, docs, index, args.repeats)
    print(
        f"compiled : {fast_time:8.4f} s   {tokens / fast_time:12.0f} tokens/s"
        f"   ({fast_matches} matches)"
    )
    if fast_matches != pure_matches:
        raise AssertionError("match counts diverged")
    print(f"speedup  : {pure_time / fast_time:.2f}x")


if __name__ == "__main__":
    main()
