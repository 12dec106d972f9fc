"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/python
or
    maturin develop -m crates/python/Cargo.toml
"""

import math

import stoc_order as so


def main() -> None:
    est = so.integrate(1, points=100_000)
    assert abs(est["value"] - math.pi) / math.pi < 0.01, est
    assert est["skipped"] == 0

    roots = so.RootModel(real_poles=[0.5], real_zeros=[-0.8])
    j = roots.fisher_information()
    assert abs(j[0][0] - 4.0 / 3.0) < 1e-12
    assert abs(j[0][1] + 1.0 / 1.4) < 1e-12
    coeffs = roots.to_coeffs()
    assert [round(x, 12) for x in coeffs.a] == [-0.5]
    assert [round(x, 12) for x in coeffs.b] == [0.8]

    model = so.CoeffModel([-1.2, 0.5], sigma2=1.0)
    y = model.simulate(400, seed=7)
    assert len(y) == 400
    fits = so.fit_ar(y, 4)
    assert len(fits) == 4 and fits[1][1] <= fits[0][1]

    (n, m), scores = so.select(y, max_order=6, criterion="nml")
    assert (n, m) == (2, 0), scores
    assert len(scores) == 6

    arma = so.CoeffModel([-0.5], [0.8])
    z = arma.simulate(300, seed=3)
    fitted, s2 = so.fit_arma(z, 1, 1)
    assert 0.5 < s2 < 1.5
    (n, m), _ = so.select(z, max_order=4, criterion="bic", arma=True)
    assert n >= 1 and m >= 1

    table = so.IntegralTable.bundled()
    assert abs(table.ln_integral(2) - math.log(47.414593)) < 1e-5

    csv = so.run_experiment(3, runs_outer=3, sizes=[50], cases=[1])
    first = csv.splitlines()[0]
    assert first.startswith("criterion,case,N"), first
    assert csv == so.run_experiment(3, runs_outer=3, sizes=[50], cases=[1], jobs=1)

    try:
        so.CoeffModel([-1.5])
    except ValueError:
        pass
    else:
        raise AssertionError("unstable model accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
