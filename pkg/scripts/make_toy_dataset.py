#!/usr/bin/env python3
"""Generate the synthetic rule-governed toy dataset (train/valid/test/rules)."""

import argparse
from dataclasses import fields

from rpje.synthetic import ToyConfig, generate, write_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="directory for train/valid/test/rules files")
    defaults = ToyConfig()
    for f in fields(ToyConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            parser.add_argument(flag, action="store_true", default=getattr(defaults, f.name))
        else:
            kind = int if f.type == "int" else float
            parser.add_argument(flag, type=kind, default=getattr(defaults, f.name))
    args = parser.parse_args()

    cfg = ToyConfig(**{f.name: getattr(args, f.name) for f in fields(ToyConfig)})
    data = generate(cfg)
    files = write_dataset(data, args.out_dir)
    print(f"train: {len(data.train)} triples -> {files['train']}")
    print(f"valid: {len(data.valid)} triples -> {files['valid']}")
    print(f"test:  {len(data.test)} triples -> {files['test']}")
    print(f"rules: {len(data.rules)} -> {files['rules']}")


if __name__ == "__main__":
    main()
