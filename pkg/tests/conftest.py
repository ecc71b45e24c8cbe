import random

import pytest

from polyrank.loopnest import parse_nest

VARS = ("i", "j", "k", "l")


def random_nest_document(rng: random.Random) -> str:
    """At most 4 loops with bounds up to 8, at most 3 arrays and 4 references.

    Some loops are triangular (bounded by an outer variable) or strided so
    the corpus is not all rectangles.
    """
    depth = rng.randint(1, 4)
    names = VARS[:depth]
    lines = ["nest random"]
    for d, v in enumerate(names):
        shape = rng.random()
        lower, upper, step = "0", str(rng.randint(1, 8)), 1
        if d and shape < 0.15:
            upper = f"{rng.choice(names[:d])} + 1"
        elif d and shape < 0.25:
            lower = rng.choice(names[:d])
            upper = str(rng.randint(1, 8))
        elif shape > 0.9:
            step = 2
        lines.append(f"loop {v} lower {lower} upper {upper} step {step}")
    lines.append("statement S")
    arrays = ["A", "B", "C"][: rng.randint(1, 3)]
    arity = {a: rng.randint(1, 2) for a in arrays}
    for _ in range(rng.randint(1, 4)):
        a = rng.choice(arrays)
        subs = []
        for _ in range(arity[a]):
            terms = [f"{rng.choice((1, 1, 2))} * {v}" for v in names if rng.random() < 0.5]
            const = rng.randint(0, 2)
            subs.append(" + ".join(terms + [str(const)]))
        mode = "write" if rng.random() < 0.35 else "read"
        lines.append(f"  {mode} {a}" + "".join(f"[{s}]" for s in subs))
    return "\n".join(lines) + "\n"


def random_corpus(count: int, seed: int = 2024):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        doc = random_nest_document(rng)
        try:
            out.append(parse_nest(doc))
        except ValueError:
            # e.g. a lower bound above every upper bound leaves nothing to run
            continue
    return out


@pytest.fixture(scope="session")
def corpus():
    return random_corpus(200)
