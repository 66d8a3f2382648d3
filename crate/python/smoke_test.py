"""Smoke test for the qcomp extension module.

Build and install first:
    maturin develop --release -m crates/python/Cargo.toml
"""

import math

import qcomp


def main():
    alpha, beta = qcomp.quant_gain(1)
    assert abs(beta - (1 - 2 / math.pi)) < 1e-3, beta
    assert abs(alpha + beta - 1) < 1e-12
    assert qcomp.quant_gain("inf") == (1.0, 0.0)

    sc = qcomp.Scenario(n_cells=2, n_users_per_cell=2, n_bs_antennas=16, bits=3, seed=5)
    assert qcomp.Scenario.from_toml(sc.to_toml()).n_bs_antennas == 16
    ch = qcomp.generate_channels(sc)
    assert (ch.n_cells, ch.n_users, ch.n_antennas) == (2, 2, 16)

    alpha, _ = qcomp.quant_gain(sc.bits)
    gamma = sc.gamma_linear()
    sol = qcomp.solve_icomp(ch, gamma, alpha)
    assert sol["converged"]
    assert max(abs(s - g) / g for s, g in zip(sol["achieved_sinr"], gamma)) < 1e-6
    assert sol["duality_gap"] is None or sol["duality_gap"] < 1e-6

    ray = qcomp.rayleigh_channels(2, 2, 8, seed=1)
    try:
        qcomp.solve_icomp(ray, [1e6] * 4, 0.5, max_iter=200)
    except qcomp.InfeasibleError:
        pass
    else:
        raise AssertionError("expected an infeasible solve")

    records = qcomp.run_experiment(
        """
        algorithms = ["icomp", "percell"]
        n_trials = 2
        trial_seed_base = 3
        [scenario]
        n_bs_antennas = 16
        """
    )
    assert len(records) == 4
    assert {r["algorithm"] for r in records} == {"icomp", "percell"}
    print("smoke test passed:", len(records), "records")


if __name__ == "__main__":
    main()
