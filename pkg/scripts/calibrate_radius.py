"""Find the toroid radius that matches a quoted operating point.

The amplification captions give every device parameter except the radius,
which sets g = omega0 / radius. Two anchors are supported:

* ``--gain-db G --at-uw P``: peak gain (relative to the optical background)
  equals G at input power P. Default 37 dB at 12 uW, the headline result.
* ``--threshold-uw P``: the model threshold sits at P.

    python3 scripts/calibrate_radius.py --config src/backaction/configs/fig2.cfg
"""
import argparse

import numpy as np
from scipy.optimize import brentq

from backaction.linear_response import default_grid, fit_lorentzian, response, threshold_power
from backaction.params import load_params
from backaction.steady_state import continuation_sweep


def peak_gain_db(p, power, ladder=40):
    pp = p.with_power(power)
    sol = continuation_sweep(p, np.linspace(0.0, power, ladder))[-1]
    fit = fit_lorentzian(sol, pp)
    grid = default_grid(pp, center=fit.omega_peak, points=20001, half_span=20 * p.gamma_m)
    return float(response(sol, pp, grid).gain_db.max())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--gain-db", type=float, default=37.0)
    ap.add_argument("--at-uw", type=float, default=12.0)
    ap.add_argument("--threshold-uw", type=float, default=None)
    ap.add_argument("--lo", type=float, default=1.0e-6)
    ap.add_argument("--hi", type=float, default=3.0e-6)
    args = ap.parse_args()
    base = load_params(args.config)

    if args.threshold_uw is not None:
        target = args.threshold_uw * 1e-6

        def miss(radius):
            rep = threshold_power(base.replace(radius=radius), bracket=(0.0, 4 * target), rtol=1e-9)
            return rep.p_threshold - target
        lo, hi = args.lo, args.hi
    else:
        power = args.at_uw * 1e-6

        def miss(radius):
            return peak_gain_db(base.replace(radius=radius), power) - args.gain_db
        # the gain diverges at the radius where ``power`` is the threshold
        edge = brentq(lambda r: threshold_power(base.replace(radius=r), bracket=(0.0, 4 * power),
                                                rtol=1e-9).p_threshold - power,
                      args.lo, args.hi, xtol=1e-13)
        lo, hi = edge * (1 + 1e-4), args.hi

    radius = brentq(miss, lo, hi, xtol=1e-13)
    rep = threshold_power(base.replace(radius=radius), bracket=(0.0, 1e-4), rtol=1e-9)
    print(f"radius = {radius:.6e}  # model threshold {rep.p_threshold * 1e6:.4f} uW")


if __name__ == "__main__":
    main()
