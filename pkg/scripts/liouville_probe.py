"""Sup of positive solutions of Delta_p u + u^(q-1) = 0 on disks B_R against R."""
import argparse
from pathlib import Path

from glap import io
from glap.blowup import liouville_scaling_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--q", type=float, default=4.0)
    ap.add_argument("--radii", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0])
    ap.add_argument("--h", type=float, default=0.125, help="absolute mesh spacing")
    ap.add_argument("--out", default="out/liouville")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    res = liouville_scaling_probe(args.p, args.q, args.radii, h=args.h)
    for R, s, c in zip(res.radii, res.sup_norms, res.converged):
        print(f"R={R:6.2f}  sup u_R={s:.6g}  converged={c}")
    print(f"fitted slope {res.slope:.4f}, scaling predicts {res.expected_slope:.4f}")
    print("pair ratios:", ", ".join(f"{r:.4f}" for r in res.pair_ratios))
    io.write_csv(out / "liouville.csv", ["radius", "sup_norm", "converged"],
                 zip(res.radii, res.sup_norms, res.converged))
    io.write_json(out / "summary.json", res.to_dict())


if __name__ == "__main__":
    main()
