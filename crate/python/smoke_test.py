"""Quick end-to-end check of the Python bindings.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml --release`.
"""

import math

import spikelab


def main():
    rad = spikelab.Prior("rademacher")
    assert rad.atoms == [-1.0, 1.0]
    sparse = spikelab.Prior("sparse_rademacher:0.04")
    assert abs(sparse.support_radius - 5.0) < 1e-12

    inst = spikelab.Instance.generate(3, 3, 0.25, seed=1, hypothesis="spiked")
    assert inst.shape == (3, 3)
    u, v = inst.planted
    assert all(abs(x) == 1.0 for x in u + v)

    # Brute force over all sign vectors.
    y = inst.data
    terms = []
    for bu in range(8):
        su = [1 - 2 * ((bu >> k) & 1) for k in range(3)]
        for bv in range(8):
            sv = [1 - 2 * ((bv >> k) & 1) for k in range(3)]
            uyv = sum(su[i] * y[i][j] * sv[j] for i in range(3) for j in range(3))
            terms.append(math.sqrt(0.25 / 3) * uyv - 0.25 / 6 * 9)
    top = max(terms)
    brute = top + math.log(sum(math.exp(t - top) for t in terms) / len(terms))
    assert abs(inst.log_lr(0.25, rad, rad) - brute) < 1e-10

    pred = spikelab.lr_asymptotics(1.0, 0.6)
    assert abs(pred["mean_alt"] - 0.25 * -math.log(0.64)) < 1e-12
    assert spikelab.lr_asymptotics(1.0, 1.2) is None
    assert abs(spikelab.kl_limit(1.0, 0.6) - 0.1115718) < 1e-6

    sol = spikelab.solve_rs(1.0, 0.9, rad, rad)
    assert abs(sol["phi_rs"]) < 1e-6

    rep = spikelab.run_experiment("fluctuations", '{"sizes": [{"n": 5}], "samples": 50, "seed": 3}')
    assert rep["schema_version"] == 1 and len(rep["sizes"]) == 1

    try:
        spikelab.Prior("laplace")
    except ValueError:
        pass
    else:
        raise AssertionError("bad prior accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
