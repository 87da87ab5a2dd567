"""Freeze reference power-flow solutions for the stock IEEE cases.

Loads data/<case>.m, solves with PYPOWER (plain Newton, no Q limits) and
writes data/reference/<case>_pf.json with per-bus V (p.u.), angle (rad)
and net injections (p.u.), in the bus order of the case file. The 14-bus
file also carries the dense admittance matrix.
"""
import json
import os
import re
import sys

import numpy as np
from pypower.api import makeYbus, ppoption, runpf
from pypower.ext2int import ext2int

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")


def load_m(path):
    txt = open(path).read()
    ppc = {"version": "2"}
    ppc["baseMVA"] = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", txt).group(1))
    for name in ["bus", "gen", "branch"]:
        body = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, txt, re.S).group(1)
        rows = []
        for line in body.split("\n"):
            line = line.split("%")[0].strip().rstrip(";")
            if line:
                rows.append([float(x) for x in line.split()])
        ppc[name] = np.array(rows)
    return ppc


def main(case):
    ppc = load_m(os.path.join(ROOT, "data", case + ".m"))
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_ALG=1, PF_TOL=1e-11, PF_MAX_IT=50, ENFORCE_Q_LIMS=0)
    res, ok = runpf(ppc, opt)
    assert ok == 1, "reference solve failed"
    vm = res["bus"][:, 7]
    va = np.deg2rad(res["bus"][:, 8])
    V = vm * np.exp(1j * va)
    i2e = ext2int(ppc)
    Ybus, _, _ = makeYbus(i2e["baseMVA"], i2e["bus"], i2e["branch"])
    Ybus = Ybus.toarray()
    # ext2int keeps bus order when all buses are in service; ids are remapped only.
    assert np.allclose(i2e["bus"][:, 0], np.arange(len(vm)))
    S = V * np.conj(Ybus @ V)
    out = {
        "case": case,
        "bus_ids": [int(b) for b in res["bus"][:, 0]],
        "vm": vm.tolist(),
        "va_rad": va.tolist(),
        "p_inj": S.real.tolist(),
        "q_inj": S.imag.tolist(),
    }
    if case == "case14":
        out["ybus_g"] = Ybus.real.tolist()
        out["ybus_b"] = Ybus.imag.tolist()
    with open(os.path.join(ROOT, "data", "reference", case + "_pf.json"), "w") as f:
        json.dump(out, f, indent=1)
    print("wrote", case, len(vm), "buses")


if __name__ == "__main__":
    for c in sys.argv[1:] or ["case14", "case57", "case300"]:
        main(c)
