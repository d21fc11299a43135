"""Deviation of the rescaled g_N from t^(p-1) for several Young functions (f = t^(q-1))."""
import argparse
import warnings
from pathlib import Path

import numpy as np

from glap import io
from glap.blowup import gk_limit_check
from glap.source import ScalarLaw
from glap.young import YoungFunction

FIXTURES = {
    "power2": (YoungFunction.power(2), 2.0),
    "plog": (YoungFunction.plog(2, 1), 2.0),
    "double_power": (YoungFunction.double_power(2, 3), 3.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=4.0)
    ap.add_argument("--N", type=float, nargs="+", default=[1e1, 1e2, 1e3, 1e4, 1e5])
    ap.add_argument("--out", default="out/gk")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    f = ScalarLaw("power", exponent=args.q - 1)
    rows, series = [], {}
    for name, (yf, p) in FIXTURES.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tab = gk_limit_check(yf, f, sorted(args.N), t_grid=np.linspace(0, 2, 201), p=p)
        print(f"{name:13s} " + "  ".join(f"{d:.3e}" for d in tab.deviation))
        rows += [(name, n, d) for n, d in zip(tab.N, tab.deviation)]
        series[name] = (tab.N, tab.deviation)
    io.write_csv(out / "gk.csv", ["young", "N", "deviation"], rows)
    io.write_svg(out / "gk.svg", series, title="g_N deviation", xlabel="N", ylabel="sup deviation",
                 logx=True, logy=True)


if __name__ == "__main__":
    main()
