"""Spearman(degree, ICP) across hop counts on the synthetic corpus.

    python3 scripts/icp_vs_degree.py --max-hops 5
"""

import argparse

from degbias import experiments as E


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-hops", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    corpus = E.synthetic_corpus(args.seed)
    hops = range(1, args.max_hops + 1)
    print(f"{'graph':24s}" + "".join(f"  L={L}" for L in hops))
    for name, ds in corpus.items():
        print(f"{name:24s}" + "".join(f" {E.icp_spearman(ds.graph, L):5.3f}" for L in hops))


if __name__ == "__main__":
    main()
