#!/usr/bin/env python3
"""Grid-search the non-published operating parameters against the headline
targets.  Run from the repo root; prints candidate parameter sets ranked by
distance from the target centers."""
import itertools
import math
import sys

import numpy as np

from uplinkqkd.keyrate import ProtocolParams
from uplinkqkd.windows import BackgroundModel, sweep_and_optimize
from uplinkqkd.passes import max_tolerable_loss


def evaluate(mu, nu, e_d, c_total, sigma):
    p = ProtocolParams(mu=mu, nu=nu, e_detector=e_d, clock_rate=76e6)
    bg = BackgroundModel(rate_total=c_total, rep_rate=p.clock_rate)

    def point(loss):
        sw = sweep_and_optimize(loss, None, p, bg, jitter_sigma=sigma)
        i = sw.optimal_index
        return sw.optimal_width, sw.raw_rate_cps[i], sw.qber[i], sw.secure_rate_bps[i]

    w30, _, q30, r30 = point(30.0)
    w40, _, _, _ = point(40.0)
    w54, _, _, _ = point(54.0)
    w57, _, q57, r57 = point(57.0)

    def rate_fn(loss):
        sw = sweep_and_optimize(float(loss), None, p, bg, jitter_sigma=sigma)
        return sw.secure_rate_bps[sw.optimal_index]

    try:
        cutoff = max_tolerable_loss(rate_fn, 45.0, 66.0)
    except Exception:
        cutoff = float("nan")
    return dict(r30=r30, q30=q30, w30=w30, w40=w40, w54=w54, w57=w57, r57=r57, cutoff=cutoff)


def ok(res):
    checks = [
        55.5 <= res["cutoff"] <= 60.5,
        1.0 <= res["r57"] <= 4.0,
        5670 <= res["r30"] <= 9450,
        0.0139 <= res["q30"] <= 0.0231,
        0.6e-9 <= res["w40"] <= 2.4e-9,
        0.2e-9 <= res["w54"] <= 0.8e-9,
        1e-9 <= res["w30"] <= 4e-9,
        res["w57"] <= 0.16e-9,
    ]
    return checks


def score(res):
    # distance from target centers, in units of half-tolerance
    terms = [
        (res["cutoff"] - 58.0) / 2.0,
        (math.log(max(res["r57"], 1e-9)) - math.log(2.0)) / math.log(2.0),
        (res["r30"] - 7560) / 1890,
        (res["q30"] - 0.0185) / 0.0046,
        (math.log(res["w40"]) - math.log(1.2e-9)) / math.log(2.0),
        (math.log(res["w54"]) - math.log(0.4e-9)) / math.log(2.0),
        (math.log(max(res["w57"], 1e-12)) - math.log(40e-12)) / math.log(4.0),
    ]
    return sum(t * t for t in terms)


def main():
    rows = []
    for mu, nu, e_d, c_total, sigma in itertools.product(
        [0.5],
        [0.08, 0.10, 0.12],
        [0.014, 0.015, 0.016, 0.017],
        [40.0, 60.0, 80.0, 100.0, 140.0],
        [200e-12, 250e-12, 300e-12],
    ):
        res = evaluate(mu, nu, e_d, c_total, sigma)
        checks = ok(res)
        rows.append((score(res), sum(checks), (mu, nu, e_d, c_total, sigma), res, checks))
    rows.sort(key=lambda r: (-r[1], r[0]))
    for s, n_ok, params, res, checks in rows[:12]:
        mu, nu, e_d, c, sig = params
        print(
            f"ok={n_ok}/8 score={s:6.2f} nu={nu} e_d={e_d} C={c:5.0f} sig={sig*1e12:3.0f}ps | "
            f"cutoff={res['cutoff']:5.2f} r57={res['r57']:6.2f} r30={res['r30']:6.0f} "
            f"q30={res['q30']*100:5.2f}% w30={res['w30']*1e9:5.2f} w40={res['w40']*1e9:5.2f} "
            f"w54={res['w54']*1e9:5.2f} w57={res['w57']*1e12:6.1f}ps {''.join('1' if c else '0' for c in checks)}"
        )


if __name__ == "__main__":
    sys.exit(main())
