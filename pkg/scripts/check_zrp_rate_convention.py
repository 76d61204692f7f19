"""Confirm the injection convention on a single site between two reservoirs.

The generator of the truncated birth-death chain (birth (z_l + z_r)/2,
death g(n)) is solved for its null vector and compared with the product
measure at fugacity z.  A long simulated run is compared as well.

    python scripts/check_zrp_rate_convention.py
"""
import numpy as np
from scipy.linalg import null_space

from lyapunov_lab.zrp import SingleSiteMeasure, ZrpModel, ZrpState, simulate


def exact_stationary(model: ZrpModel, n_max: int) -> np.ndarray:
    birth = 0.5 * (model.z_left + model.z_right)
    death = model.g(np.arange(n_max + 1))
    Q = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        if n < n_max:
            Q[n, n + 1] = birth
        if n > 0:
            Q[n, n - 1] = death[n]
        Q[n, n] = -Q[n].sum()
    p = null_space(Q.T)[:, 0]
    return p / p.sum()


def main():
    rng = np.random.default_rng(20240601)
    for rate, z in (("linear", 1.3), ("constant", 0.45), ((0.5, 1.5, 2.0), 0.8)):
        model = ZrpModel(1, rate, z, z)
        ref = SingleSiteMeasure(model, z)
        p = exact_stationary(model, ref.n_max)
        print(f"g={model.rate_name:<16} z={z}  max|p_chain - p_product| = {np.max(np.abs(p - ref.p)):.2e}")

        # time-averaged occupation histogram from one long run
        times = 50.0 + 0.5 * np.arange(200_000)
        res = simulate(model, ZrpState(np.zeros(1, dtype=np.int64)), rng, times[-1] + 1, sample_times=times)
        n = res.samples[:, 0]
        print(f"  events={res.events}  mean={n.mean():.4f}  exact={ref.density:.4f}")


if __name__ == "__main__":
    main()
