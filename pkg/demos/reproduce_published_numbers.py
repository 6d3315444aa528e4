"""Full-scale reproduction against the published reference numbers.

Needs the released Snopes and PolitiFact corpora (converted to JSONL with
``mac-factcheck convert``) and the 300-d GloVe vectors. Expect several hours
of CPU time per corpus. Not part of the test suite.

    python demos/reproduce_published_numbers.py \
        --snopes snopes.jsonl --politifact politifact.jsonl --glove glove.840B.300d.txt
"""
import argparse
import json
import sys

from mac_factcheck.cli import resolve_config
from mac_factcheck.data import load_corpus, load_glove
from mac_factcheck.training import run_cv

TOLERANCE = 0.03
# schema -> (head overrides, {metric: reference value})
TARGETS = {
    "snopes": (["word_heads=5", "doc_heads=2"], {"auc": 0.88715, "f1_macro": 0.78660}),
    "politifact": (["word_heads=3", "doc_heads=1"], {"auc": 0.75756}),
}


def run(schema, corpus, glove, seed, overrides):
    cfg, tcfg = resolve_config(schema, None, overrides)
    records, stats = load_corpus(corpus, schema)
    print(f"{schema}: {stats.true_claims} true / {stats.false_claims} false claims, "
          f"{stats.documents} documents", flush=True)
    return run_cv(records, cfg, tcfg, seed, glove).aggregate.mean()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snopes")
    ap.add_argument("--politifact")
    ap.add_argument("--glove", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)

    glove, report = load_glove(args.glove, 300)
    print(f"GloVe: {report.loaded} vectors", flush=True)
    results, ok = {}, True
    for schema, (heads, targets) in TARGETS.items():
        corpus = getattr(args, schema)
        if not corpus:
            continue
        mean = run(schema, corpus, glove, args.seed, heads + args.set)
        results[schema] = mean
        for metric, target in targets.items():
            good = abs(mean[metric] - target) <= TOLERANCE
            ok &= good
            print(f"  [{'PASS' if good else 'FAIL'}] {schema} {metric}: {mean[metric]:.5f} "
                  f"(reference {target:.5f} +/- {TOLERANCE})")
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0 if ok and results else 1


if __name__ == "__main__":
    sys.exit(main())
