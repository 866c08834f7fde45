"""Smoke test for the ksmix Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                 python python/smoke_test.py
"""

import math

import ksmix


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    g = ksmix.Grid([16, 16])
    check(g.dim == 2 and g.cell_count() == 256, "grid shape")
    c = g.domain_constants()
    h = g.spacing[0]
    expect = 2.0 / h**2 * (1.0 - math.cos(math.pi * h))
    check(abs(c["lambda1_h"] - expect) < 1e-8 * expect, "discrete spectral gap")

    try:
        ksmix.Grid([1, 4])
        check(False, "bad grid rejected")
    except ValueError:
        check(True, "bad grid rejected")

    s = ksmix.Scenario.preset("two-layer")
    a1, a2, mode = s.check_h4()
    check(mode == "verified" and a1 > 0.0 and a2 > 0.0, "coercivity margin of the two-layer preset")

    try:
        s.tau = 5.0
        check(False, "oversized time step rejected")
    except ValueError:
        check(True, "oversized time step rejected")

    s.t_final = 0.2
    traj = s.run()
    check(traj.steps == 20, "run length")
    rows = traj.ledger()
    header = ksmix.Trajectory.ledger_header()
    check(len(rows) == 21 and len(rows[0]) == len(header), "ledger shape")
    mass = header.index("mass")
    drift = abs(rows[-1][mass] - rows[0][mass]) / rows[0][mass]
    check(drift < 1e-9, f"mass conserved (drift {drift:.2e})")
    rho = traj.density(traj.steps)
    check(0.9 - 1e-8 <= min(rho) and max(rho) <= 1.1 + 1e-8, "density stays in range")

    audit = traj.audit()
    failed = [k for k, (binding, passed, _) in audit.items() if binding and not passed]
    check(not failed, f"binding audit criteria pass ({len(audit)} evaluated)")
    check(traj.ledger_csv().splitlines()[0] == ",".join(header), "ledger CSV header")

    again = ksmix.Scenario.parse(s.to_text())
    check(again.run().fingerprint == traj.fingerprint, "scenario text round trip")
    print("smoke test passed")


if __name__ == "__main__":
    main()
