"""Circle anomaly table: reflection h-family plus the vanishing cases, over several N."""

import argparse
import json

from rsmetric.checks import circle_g_family, circle_h_family
from rsmetric.spectral import anomaly_experiment

CASES = {
    "reflection/hF": (circle_h_family, "reflection", "hF"),
    "reflection/gTM": (circle_g_family, "reflection", "gTM"),
    "identity/hF": (circle_h_family, "identity", "hF"),
    "identity/gTM": (circle_g_family, "identity", "gTM"),
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, nargs="+", default=[256, 512, 1024])
    ap.add_argument("--mode", choices=["exact", "window"], default="window")
    ap.add_argument("--step", type=float, default=1e-4)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()
    rows = []
    for name, (make, iso, case) in CASES.items():
        for N in args.N:
            rep = anomaly_experiment(make(N, iso), case, 1, args.step, args.mode)
            rows.append({"experiment": name, **rep.as_dict()})
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(f"{'experiment':<16}{'N':>6}{'LHS':>14}{'RHS':>10}{'abs err':>12}")
        for r in rows:
            print(f"{r['experiment']:<16}{r['N']:>6}{r['lhs']:>14.6f}{r['rhs']:>10.4f}{r['abs_error']:>12.2e}")
