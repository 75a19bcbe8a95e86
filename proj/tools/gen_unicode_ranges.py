#!/usr/bin/env python3
"""Regenerates src/unicode_ranges.inc.

Classifies every code point with the same `regex` engine the reference GPT2
tokenizer uses for pre-tokenization (\\p{L}, \\p{N}, \\s) and emits sorted,
merged [first, last] ranges.
"""
import sys

import regex

CLASSES = {
    "kLetterRanges": regex.compile(r"\p{L}"),
    "kNumberRanges": regex.compile(r"\p{N}"),
    "kSpaceRanges": regex.compile(r"\s"),
}


def ranges(pattern):
    out = []
    start = None
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            hit = False
        else:
            hit = pattern.match(chr(cp)) is not None
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def main(path):
    lines = [
        "// Generated by tools/gen_unicode_ranges.py; do not edit.",
        f"// regex module {regex.__version__}",
        "",
    ]
    for name, pattern in CLASSES.items():
        rs = ranges(pattern)
        lines.append(f"constexpr CodepointRange {name}[] = {{")
        for a, b in rs:
            lines.append(f"    {{0x{a:X}, 0x{b:X}}},")
        lines.append("};")
        lines.append("")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/unicode_ranges.inc")
