# cython: language_level=3, boundscheck=False, wraparound=False
"""Scanner kernels, compiled variant of `kgmon._scan_py`.

Behaviour must stay token-for-token identical to the pure module; the
equivalence test feeds both the same corpora.
"""

import string

cdef extern from "Python.h":
    bint Py_UNICODE_ISSPACE(Py_UCS4 ch)

cdef bint[128] _PUNCT_TABLE
for _ch in string.punctuation:
    _PUNCT_TABLE[ord(_ch)] = True


cdef inline bint _is_punct(Py_UCS4 ch):
    return ch < 128 and _PUNCT_TABLE[<Py_ssize_t>ch]


def tokenize(str text):
    """Split text into (token, char_offset) pairs.

    Whitespace separates tokens and is never emitted. ASCII punctuation
    characters are single-character tokens; everything else forms maximal
    runs.
    """
    cdef list tokens = []
    cdef Py_ssize_t i = 0, start
    cdef Py_ssize_t n = len(text)
    cdef Py_UCS4 ch
    while i < n:
        ch = text[i]
        if Py_UNICODE_ISSPACE(ch):
            i += 1
            continue
        if _is_punct(ch):
            tokens.append((text[i], i))
            i += 1
            continue
        start = i
        i += 1
        while i < n:
            ch = text[i]
            if Py_UNICODE_ISSPACE(ch) or _is_punct(ch):
                break
            i += 1
        tokens.append((text[start:i], start))
    return tokens


def find_matches(list token_texts, dict index):
    """Greedy longest-match scan over a token sequence.

    `index` maps a first token to candidate (token_tuple, surface) pairs,
    longest candidate first. Comparison is exact (case-sensitive). Matches
    never overlap: after a hit the scan resumes past the matched span.
    Returns (token_start, token_count, surface) per match, left to right.
    """
    cdef list matches = []
    cdef Py_ssize_t i = 0, j, k
    cdef Py_ssize_t n = len(token_texts)
    cdef list candidates
    cdef tuple toks
    cdef bint ok, hit
    while i < n:
        candidates = index.get(token_texts[i])
        if candidates is not None:
            hit = False
            for cand in candidates:
                toks = <tuple>(<tuple>cand)[0]
                k = len(toks)
                if i + k > n:
                    continue
                ok = True
                for j in range(k):
                    if <str>token_texts[i + j] != <str>toks[j]:
                        ok = False
                        break
                if ok:
                    matches.append((i, k, (<tuple>cand)[1]))
                    i += k
                    hit = True
                    break
            if hit:
                continue
        i += 1
    return matches
