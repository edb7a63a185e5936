#!/usr/bin/env python3
"""Run the shadow batteries (linear triangle, family agreement,
regularization, slice restriction) and print a summary table."""

import argparse

from acx.suite import (
    SuiteConfig,
    restriction_battery,
    run_equivalence_suite,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--fields", type=int, default=20)
    ap.add_argument("--quadratics", type=int, default=50)
    args = ap.parse_args()

    cfg = SuiteConfig(seed=args.seed, linear_fields=args.fields,
                      quadratics=args.quadratics,
                      restriction_fields=args.fields)
    out = run_equivalence_suite(cfg)
    tri = out["linear_triangle"]
    agree = sum(c["agree"] for c in tri["cases"])
    print(f"linear triangle : {agree}/{len(tri['cases'])} verdict pairs agree"
          f" -> {'PASS' if tri['all_pass'] else 'FAIL'}")
    for row in out["blaplacian_agreement"]["per_dimension"]:
        print(f"family agreement: n={row['n']}: {row['agree']}/{row['total']}")
    print(f"regularization  : "
          f"{'exact' if out['regularization']['all_pass'] else 'FAIL'}")
    rb = restriction_battery(cfg)
    print(f"restriction     : {rb['ambient_psh']}/{rb['total']} ambient-psh, "
          f"{'PASS' if rb['all_pass'] else 'FAIL'}")
    print(f"overall         : "
          f"{'PASS' if out['all_pass'] and rb['all_pass'] else 'FAIL'}")


if __name__ == "__main__":
    main()
