#!/usr/bin/env python3
"""Writes data/stimuli_demo.json: small constructed 2x2 sets in the stimulus
schema, with byte spans computed from the sentence text.

These are demonstration items for exercising the pipeline, not the
materials of any published study.
"""
import json
import pathlib
import sys

TEMPLATE = "{subj} remembered that the {dep} that the {agent} with the {dis} accidentally {verb} {tail}"

# set_id, subject, agent, (dep plausible, dep implausible), (distractor plausible, implausible), verb, tail
SETS = [
    ("shatter", "Sue", "butler", ("plate", "letter"), ("cup", "tie"), "shattered", "was expensive."),
    ("break", "Tom", "maid", ("bowl", "rumor"), ("mirror", "coat"), "broke", "had been a gift."),
    ("spill", "Ann", "waiter", ("coffee", "book"), ("milk", "hat"), "spilled", "was on the table."),
    ("burn", "Joe", "cook", ("toast", "song"), ("paper", "spoon"), "burned", "was for breakfast."),
    ("tear", "Kim", "tailor", ("shirt", "spoon"), ("paper", "rock"), "tore", "was in the shop."),
    ("eat", "Max", "guest", ("cake", "chair"), ("apple", "shoe"), "ate", "was on the menu."),
    ("melt", "Eve", "chef", ("butter", "piano"), ("cheese", "rope"), "melted", "was very old."),
    ("wash", "Dan", "nurse", ("shirt", "idea"), ("towel", "noise"), "washed", "was still wet."),
    # "chandelier" is several tokens, so the whole set is dropped at alignment.
    ("shatter-long", "Liz", "butler", ("chandelier", "letter"), ("cup", "tie"), "shattered", "was expensive."),
]

CONDITIONS = [("pl-pl", 0, 0), ("pl-impl", 0, 1), ("impl-pl", 1, 0), ("impl-impl", 1, 1)]


def span(text, word, start):
    begin = text.index(word, start)
    return [len(text[:begin].encode()), len(text[:begin].encode()) + len(word.encode())], begin + len(word)


def variant(subj, agent, dep, dis, verb, tail, label):
    text = TEMPLATE.format(subj=subj, dep=dep, agent=agent, dis=dis, verb=verb, tail=tail)
    pos = len(f"{subj} remembered that the ")
    dep_span, pos = span(text, dep, pos)
    dis_span, pos = span(text, dis, pos + len(f" that the {agent} with the "))
    verb_span, _ = span(text, verb, pos)
    return {"condition": label, "text": text, "dependent": dep_span, "distractor": dis_span, "verb": verb_span}


def main(out):
    sets = []
    for set_id, subj, agent, deps, diss, verb, tail in SETS:
        variants = [variant(subj, agent, deps[d], diss[x], verb, tail, label) for label, d, x in CONDITIONS]
        sets.append({"set_id": set_id, "variants": variants})
    pathlib.Path(out).write_text(json.dumps(sets, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/stimuli_demo.json")
