"""Multi-stage representation of a preset target with a per-stage diagnostic table."""

import argparse
import time
from dataclasses import dataclass

from menshov.analysis import convergence_trace
from menshov.representer import (RepresentationState, RepresenterConfig, Schedule,
                                 preset_target, run_stage)
from menshov.spectrum import PerturbedSpectrum, load_profile


@dataclass
class RunConfig:
    target: str = "step"
    stages: int = 4
    schedule: str = "desk"
    seed: int = 0
    profile: str = "default"
    grid_log2: int = 14


COLS = ("N", "k", "l", "terms", "bad_measure_RN", "A_coeff_norm1", "A_coeff_norm1_bound",
        "A_minus_H_sup", "A_minus_H_bound", "A_majorant_sup")


def main(cfg: RunConfig):
    profile = load_profile(cfg.profile)
    state = RepresentationState(PerturbedSpectrum(cfg.seed), preset_target(cfg.target, profile),
                                profile, RepresenterConfig(Schedule.named(cfg.schedule),
                                                           grid_log2=cfg.grid_log2))
    print(" ".join(f"{c:>14}" for c in COLS))
    for _ in range(cfg.stages):
        t0 = time.time()
        st = run_stage(state)
        d = st.diagnostics
        vals = [st.N, st.k, st.l, len(st.A)] + [d.get(c, 0.0) for c in COLS[4:]]
        print(" ".join(f"{v:>14.6g}" if isinstance(v, float) else f"{v:>14}" for v in vals),
              f"({time.time() - t0:.0f}s)", flush=True)
    print(convergence_trace(state, recompute=False).monotonicity())


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for name, default in vars(RunConfig()).items():
        ap.add_argument("--" + name.replace("_", "-"), type=type(default), default=default)
    main(RunConfig(**vars(ap.parse_args())))
