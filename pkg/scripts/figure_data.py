"""Write the CSV tables behind the standard figures into one directory.

Usage: python3 scripts/figure_data.py OUTDIR [--quick] [--cache DIR]

``--quick`` shrinks grids so the whole set finishes in a few minutes.
"""
import argparse
import pathlib
import sys

from dickestark import cli


def jobs(quick):
    lam_dense = "0.01:1.2:15" if quick else "0.01:1.2:60"
    yield "convergence", ["spectrum", "--n-atoms", "32", "--stark-u", "1", "--lam", "0:0.6:13",
                          "--k-trunc", "6", "--dfs-truncations", "8,16,32" if quick else "8,16,32,64,128"]
    yield "photon", ["photon-sweep", "--n-atoms", "32" if quick else "128", "--stark-u=-1.5,1,1.5",
                     "--lam", "0.1:0.8:15" if quick else "0.1:0.8:71"]
    yield "phase_diagram", ["phase-diagram", "--lam", "0:1:12" if quick else "0:1:60",
                            "--stark-u=" + ("-1.5:1.5:12" if quick else "-1.5:1.5:60")]
    yield "meanfield", ["meanfield", "--stark-u=-1.5:1.5:61", "--temperature", "0,0.1,0.5"]
    yield "dynamics", ["dynamics", "--n-atoms", "8", "--lam", "0.2,0.5,0.8", "--times", "0:40:401"]
    yield "g2", ["g2-sweep", "--n-atoms", "8", "--stark-u=-0.3,0,0.3,0.9", "--lam", lam_dense]
    yield "negativity", ["stats-sweep", "--n-atoms", "8", "--temperature", "0.1,0.5,0.9,1.7,2",
                         "--lam", "0.05:2:12" if quick else "0.05:2:40", "--observables", "negativity"]
    yield "squeezing", ["stats-sweep", "--n-atoms", "8" if quick else "32", "--k-trunc", "25",
                        "--stark-u=-0.9,0,0.9", "--lam", "0.01:1:12" if quick else "0.01:1:34",
                        "--observables", "squeezing"]
    yield "relaxation", ["relax", "--n-atoms", "2,4", "--lam", "0.3,0.8", "--stark-u", "0,1",
                         "--temperature", "0.2,0.5,2", "--levels", "30", "--k-trunc", "30",
                         "--times", "0:16000:9"]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("outdir", type=pathlib.Path)
    parser.add_argument("--quick", action="store_true")
    parser.add_argument("--cache")
    args = parser.parse_args(argv)
    args.outdir.mkdir(parents=True, exist_ok=True)
    worst = 0
    for name, cmd in jobs(args.quick):
        if args.cache:
            cmd = cmd + ["--cache", args.cache]
        code = cli.main(cmd + ["--out", str(args.outdir / f"{name}.csv")])
        print(f"{name}: exit {code}", file=sys.stderr)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
