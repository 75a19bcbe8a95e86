#!/usr/bin/env python3
"""Reference GPT2 byte-level BPE, used to freeze tests/fixtures/tokenizer_cases.json.

Follows the original GPT2 encoder: `regex` pre-tokenization, bytes mapped to
printable unicode, greedy lowest-rank merging. Every case is cross-checked
against tiktoken built from the same vocab/merges when tiktoken is installed.

usage: tokenizer_oracle.py VOCAB MERGES STIMULI_JSON OUT_JSON
"""
import json
import random
import sys

import regex

PATTERN = regex.compile(r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+""")


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


class Encoder:
    def __init__(self, vocab_path, merges_path):
        with open(vocab_path, encoding="utf-8") as f:
            self.encoder = json.load(f)
        with open(merges_path, encoding="utf-8") as f:
            lines = [l for l in f.read().split("\n") if l and not l.startswith("#version")]
        self.ranks = {tuple(l.split()): i for i, l in enumerate(lines)}
        self.byte_encoder = bytes_to_unicode()

    def bpe(self, token):
        word = tuple(token)
        while len(word) > 1:
            pairs = {(word[i], word[i + 1]) for i in range(len(word) - 1)}
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            first, second = best
            out, i = [], 0
            while i < len(word):
                if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                    out.append(first + second)
                    i += 2
                else:
                    out.append(word[i])
                    i += 1
            word = tuple(out)
        return word

    def encode(self, text):
        ids = []
        for piece in PATTERN.findall(text):
            mapped = "".join(self.byte_encoder[b] for b in piece.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self.bpe(mapped))
        return ids


FIXED = [
    "",
    " ",
    "Sue remembered the plate",
    "The plate that the butler with the cup accidentally shattered was expensive.",
    "Hello world's 123  end",
    "I'm sure they'll say we've done what you'd expect, isn't it?",
    "'S 'T 'RE uppercase contractions don't merge",
    "tabs\tand\nnewlines\r\n  double  spaces   ",
    "trailing spaces   ",
    "   leading spaces",
    "numbers 3.14159 and 1,000,000 and ٣٤٥ and ½",
    "café naïve façade déjà vu",
    "日本語のテキストと中文",
    "emoji 😀👍🏽 and ZWJ 👨‍👩‍👧",
    "combining é and ä",
    "nbsp here and em space and　ideographic",
    "file separators \x1c\x1d\x1e\x1f between",
    "vertical\x0btab and form\x0cfeed and next\x85line",
    "!!!???... --- ***",
    "<|endoftext|> is plain text here",
]

POOLS = [
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ",
    "0123456789",
    " " * 8 + "\t\n\r\x0b\x0c",
    "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~",
    "'sltrevmd",
    "éüñçøåßÆŒ",
    "日本語中文한국어",
    "😀🎉👍🏽‍",
    "   　\x1c\x1f\x85",
    "٣½²Ⅻ",
    "́̈‍",
]


def random_strings(seed, count):
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.randint(1, 40)
        out.append("".join(rng.choice(rng.choice(POOLS)) for _ in range(n)))
    return out


def main(vocab, merges, stimuli, out_path):
    enc = Encoder(vocab, merges)
    texts = list(FIXED)
    with open(stimuli, encoding="utf-8") as f:
        for s in json.load(f):
            texts.extend(v["text"] for v in s["variants"])
    texts.extend(random_strings(20231015, 300))

    cases = [{"text": t, "ids": enc.encode(t)} for t in texts]

    try:
        import tiktoken
        from tiktoken.load import data_gym_to_mergeable_bpe_ranks
    except ImportError:
        print("tiktoken not installed; skipping cross-check", file=sys.stderr)
    else:
        tk = tiktoken.Encoding(
            "gpt2-local",
            pat_str=PATTERN.pattern,
            mergeable_ranks=data_gym_to_mergeable_bpe_ranks(merges, vocab),
            special_tokens={},
        )
        mismatches = [c["text"] for c in cases if tk.encode_ordinary(c["text"]) != c["ids"]]
        print(f"tiktoken cross-check: {len(cases) - len(mismatches)}/{len(cases)} agree", file=sys.stderr)
        for t in mismatches:
            print(f"  differs: {t!r}", file=sys.stderr)

    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"vocab_size": len(enc.encoder), "merges": len(enc.ranks), "cases": cases}, f, ensure_ascii=True, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(*sys.argv[1:5])
