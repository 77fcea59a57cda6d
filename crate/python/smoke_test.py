"""Smoke test for the Python bindings.

Build first:
    cargo build -p padic-spectra-py --release --features extension-module
then run `python3 python/smoke_test.py`.
"""

import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    for profile in ("release", "debug"):
        for name in ("libpadic_spectra.so", "libpadic_spectra.dylib"):
            lib = os.path.join(ROOT, "target", profile, name)
            if os.path.exists(lib):
                tmp = tempfile.mkdtemp()
                shutil.copy(lib, os.path.join(tmp, "padic_spectra.so"))
                sys.path.insert(0, tmp)
                import padic_spectra

                return padic_spectra
    sys.exit("extension not built; see the module docstring")


ps = load()
print("padic_spectra", ps.__version__)

fp = ps.FieldParams(2, 1, 1)
assert fp.q_res == 2 and fp.degree == 1
assert abs(fp.q * fp.big_q - 1.0) < 1e-15
assert ps.FieldParams(2) == fp

roots = ps.roots(fp, 12)
assert len(roots) == 12
vals = roots.values()
assert all(a < b for a, b in zip(vals, vals[1:]))
assert max(roots.residuals()) < 1e-12
assert abs(roots[0] - 0.69310229165060436) < 1e-15

# the operator on a depth-10 window reproduces the analytic spectrum
rep = ps.validate_spectrum(fp, 10, k=6)
assert rep["passed"], rep

table = ps.spectrum_table(fp, roots, 3, 5)
assert len(table) == 24

z, tail = ps.zeta(fp, roots, complex(2.0, 0.5), 12)
assert tail < 1e-3 and math.isfinite(z.real)
try:
    ps.zeta(fp, roots, complex(0.5, 0.0), 12)
except ValueError:
    pass
else:
    raise AssertionError("expected a pole at s = 1/2")

sch = ps.schatten(fp, roots, 2.0, 30, 10)
assert sch["m_factor_direct"] <= sch["m_factor_closed"]

reports = ps.seminorm_reports(fp, 8)
assert len(reports) == len(ps.library_ids(fp))
assert all(r["sandwich_ok"] for r in reports)

closed, direct = ps.hs_norm_dg_inverse(fp, 2)
assert abs(closed - direct) < 1e-10 * closed

doc = json.loads(ps.run_spectrum(fp, m_max=2, n_max=3))
assert doc["command"] == "spectrum" and len(doc["results"]) == 12
doc = json.loads(ps.run_zeta(fp, [1.5, 2.0], n_roots=[5, 10]))
assert len(doc["results"]) == 4

print("smoke test ok")
