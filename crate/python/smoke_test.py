"""Smoke test for the flockadapt extension module.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""

import math

import flockadapt as fa

SHIFTS = [2 * math.pi / 3, 9 * math.pi / 13, 18 * math.pi / 29]


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def check_topology():
    t = fa.Topology.chain([1, 2, 3, 4])
    assert t.edges == [(1, 2), (2, 3), (3, 4)]
    assert t.rank == 3
    assert t.incidence()[0] == [-1.0, 1.0, 0.0, 0.0]
    assert all(abs(r) < 1e-12 for r in t.attainability_residual(SHIFTS))

    cycle = fa.Topology.from_edges([1, 2, 3], [(1, 2), (2, 3), (3, 1)])
    res = cycle.attainability_residual([1.0, 1.0, 1.0])
    assert all(abs(r - 1.0) < 1e-12 for r in res), res

    try:
        fa.Topology.chain([1])
    except ValueError:
        pass
    else:
        raise AssertionError("single-agent chain accepted")


def check_loss():
    t = fa.Topology.chain([1, 2, 3, 4])
    copies = [(s, s) for s in SHIFTS]
    t2, c2 = fa.lose_agent(t, copies, 3)
    assert t2.edges == [(1, 2), (2, 4)]
    assert c2 == [(SHIFTS[0], SHIFTS[0]), (SHIFTS[1], SHIFTS[2])]
    close(fa.objective(SHIFTS, copies), 0.0, 0.0)


def check_coupling():
    close(fa.coupling(0.0), 0.0, 0.0)
    close(fa.coupling(1e9) * 100.0, 3.0, 1e-6)
    delta = (SHIFTS[2] - SHIFTS[1]) / 3
    close(fa.coupling(delta), 0.03 * 2 / math.pi * math.atan(5 * delta), 1e-15)


def check_runs():
    loss = fa.Scenario.bundled("canonical_loss3_noadapt")
    pred = fa.predict(loss)
    assert pred["method"] == "closed_form"
    close(pred["delta"], (SHIFTS[2] - SHIFTS[1]) / 3, 1e-12)

    trace = fa.run(loss)
    speeds = trace.final_speeds()
    assert sorted(speeds) == [1, 2, 4]
    for v in speeds.values():
        close(v, 12.0 + pred["speed_offsets"][0], 1e-6)

    cured = fa.run(fa.Scenario.bundled("canonical_loss3_adapt"))
    for v in cured.final_speeds().values():
        close(v, 12.0, 0.05)

    s = fa.Scenario.canonical()
    s.duration = 5.0
    a, b = fa.run(s), fa.run(s)
    assert a.to_csv() == b.to_csv()
    assert len(a) == 51
    assert fa.Scenario.from_toml(s.to_toml()).duration == 5.0


if __name__ == "__main__":
    check_topology()
    check_loss()
    check_coupling()
    check_runs()
    print("smoke test passed")
