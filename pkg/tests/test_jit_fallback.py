import json
import os
import subprocess
import sys

import numpy as np

import glucokin

SCRIPT = """
import json
import numpy as np
import glucokin
from glucokin.protocols import reduced_scenario, complete_scenario
from glucokin.sensitivity import assemble_sensitivity_matrix
from glucokin.solver import integrate
out = {"jit": glucokin.JIT_ENABLED}
for name, sc in (("reduced", reduced_scenario(1)), ("complete", complete_scenario(1))):
    out[name] = integrate(None, sc.params, sc.x0, sc.schedule).glucose.tolist()
sc = reduced_scenario(1, hours=2.0)
out["sens"] = assemble_sensitivity_matrix(None, sc.params, sc.x0, sc.schedule).rows.tolist()
print(json.dumps(out))
"""


def run(disable):
    env = dict(os.environ)
    env.pop("GLUCOKIN_DISABLE_JIT", None)
    if disable:
        env["GLUCOKIN_DISABLE_JIT"] = "1"
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                          text=True, check=True, timeout=600)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_interpreted_path_matches_compiled():
    slow = run(True)
    fast = run(False)
    assert slow["jit"] is False
    assert fast["jit"] is glucokin.JIT_ENABLED
    for key in ("reduced", "complete", "sens"):
        a, b = np.array(fast[key]), np.array(slow[key])
        assert a.shape == b.shape
        # same operation order; fused multiply-adds may differ in the last bit
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
