"""Wall-clock time of one registration against mesh size."""
import argparse
import time

import numpy as np

from qcshape.mesh import LandmarkCorrespondence
from qcshape.register import RegistrationConfig, register_surfaces
from qcshape.synth import make_specimen, sample_params


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--resolutions", type=int, nargs="+", default=[30, 50, 71])
    p.add_argument("--n-iter", type=int, default=20)
    a = p.parse_args()
    print("vertices,seconds,iterations,final_ssd")
    for res in a.resolutions:
        rng = np.random.default_rng(3)
        (m1, l1), (m2, l2) = (make_specimen(sample_params(c, rng), res) for c in (0, 1))
        t0 = time.perf_counter()
        reg = register_surfaces(m1, m2, LandmarkCorrespondence(l1, l2), RegistrationConfig(n_iter=a.n_iter))
        print(f"{m1.n_vertices},{time.perf_counter() - t0:.2f},{reg.iterations},{reg.trace[-1]['intensity']:.6g}")


if __name__ == "__main__":
    main()
