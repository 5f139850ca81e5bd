"""Print the compiled extraction prompt, or its ablation variants, for one sentence.

    python scripts/print_prompt.py "We cut water use by 12 percent." --variant no_examples
    python scripts/print_prompt.py --write-golden tests/golden
"""

from __future__ import annotations

import argparse
from pathlib import Path

from esgkg.extraction import compile_prompt, default_examples, default_schema

GOLDEN_SENTENCE = "We reduced plastic packaging by 30 percent across our stores."
VARIANTS = {
    "full": dict(include_schema=True, include_examples=True),
    "no_examples": dict(include_schema=True, include_examples=False),
    "no_schema": dict(include_schema=False, include_examples=True),
}


def render(sentence: str, variant: str) -> str:
    return compile_prompt(default_schema(), default_examples(), sentence, **VARIANTS[variant])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("sentence", nargs="?", default=GOLDEN_SENTENCE)
    ap.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    ap.add_argument("--write-golden", metavar="DIR", help="write every variant for the golden sentence")
    args = ap.parse_args(argv)
    if args.write_golden:
        out = Path(args.write_golden)
        out.mkdir(parents=True, exist_ok=True)
        for v in VARIANTS:
            (out / f"prompt_{v}.txt").write_text(render(GOLDEN_SENTENCE, v), encoding="utf-8")
        print(f"wrote {len(VARIANTS)} golden prompts to {out}")
        return 0
    print(render(args.sentence, args.variant))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
