"""Correction polynomials across eps at fixed delta: degree, bad set, C = eps * sup P*."""

import argparse
import json
import time
from dataclasses import asdict, dataclass

from menshov.correction import build_correction, verify_correction


@dataclass
class SweepConfig:
    delta: float = 0.2
    eps: tuple = (0.4, 0.2, 0.1)
    oversample: int = 1
    check_oversample: int = 2


def run(cfg: SweepConfig) -> dict:
    rows = []
    for e in cfg.eps:
        t0 = time.time()
        C = build_correction(e, cfg.delta, "analytic", oversample=cfg.oversample)
        check = verify_correction(C.poly, e, cfg.delta, cfg.check_oversample)
        rows.append({"eps": e, "degree": C.certificate.degree, "terms": C.certificate.terms,
                     "bad_measure": check.bad_measure, "coeff_inf": check.coeff_inf,
                     "C_achieved": check.C_achieved, "seconds": round(time.time() - t0, 1)})
        print(json.dumps(rows[-1]), flush=True)
    return {"config": asdict(cfg), "rows": rows, "C_max": max(r["C_achieved"] for r in rows)}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=0.2)
    ap.add_argument("--eps", default="0.4,0.2,0.1")
    ap.add_argument("--out", default=None)
    a = ap.parse_args()
    res = run(SweepConfig(a.delta, tuple(float(v) for v in a.eps.split(","))))
    text = json.dumps(res, indent=1)
    if a.out:
        open(a.out, "w").write(text + "\n")
    print(f"C_max = {res['C_max']:.3f}")
