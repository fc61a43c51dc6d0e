"""Scanner kernels, pure-Python reference implementation.

`kgmon._speedups` mirrors this module statement for statement; any change
here must be reflected there. Import through `kgmon.kernels`, which picks
whichever variant is available.
"""

import string

_PUNCT = frozenset(string.punctuation)


def tokenize(text: str) -> list[tuple[str, int]]:
    """Split text into (token, char_offset) pairs.

    Whitespace separates tokens and is never emitted. ASCII punctuation
    characters are single-character tokens; everything else forms maximal
    runs.
    """
    tokens: list[tuple[str, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append((ch, i))
            i += 1
            continue
        start = i
        i += 1
        while i < n:
            ch = text[i]
            if ch.isspace() or ch in _PUNCT:
                break
            i += 1
        tokens.append((text[start:i], start))
    return tokens


def find_matches(
    token_texts: list[str],
    index: dict[str, list[tuple[tuple[str, ...], str]]],
) -> list[tuple[int, int, str]]:
    """Greedy longest-match scan over a token sequence.

    `index` maps a first token to candidate (token_tuple, surface) pairs,
    longest candidate first. Comparison is exact (case-sensitive). Matches
    never overlap: after a hit the scan resumes past the matched span.
    Returns (token_start, token_count, surface) per match, left to right.
    """
    matches: list[tuple[int, int, str]] = []
    i = 0
    n = len(token_texts)
    while i < n:
        candidates = index.get(token_texts[i])
        if candidates is not None:
            hit = False
            for toks, surface in candidates:
                k = len(toks)
                if i + k > n:
                    continue
                ok = True
                for j in range(k):
                    if token_texts[i + j] != toks[j]:
                        ok = False
                        break
                if ok:
                    matches.append((i, k, surface))
                    i += k
                    hit = True
                    break
            if hit:
                continue
        i += 1
    return matches
