"""Split a CoNLL file into train/dev/test by sentence order.

    python scripts/split_treebank.py heb_train_tb.conll10 OUT_DIR --prefix heb --train 5000 --dev 500
"""

import argparse
import pathlib


def blocks(text):
    return [b for b in text.replace("\r\n", "\n").split("\n\n") if b.strip()]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("out_dir")
    ap.add_argument("--prefix", default="tb")
    ap.add_argument("--train", type=int, default=5000)
    ap.add_argument("--dev", type=int, default=500)
    args = ap.parse_args()
    sentences = blocks(pathlib.Path(args.source).read_text(encoding="utf-8"))
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cuts = {"train": sentences[: args.train], "dev": sentences[args.train : args.train + args.dev],
            "test": sentences[args.train + args.dev :]}
    for name, part in cuts.items():
        (out / f"{args.prefix}_{name}.conllu").write_text("".join(b.strip("\n") + "\n\n" for b in part), encoding="utf-8")
        print(f"{name}\t{len(part)}")


if __name__ == "__main__":
    main()
