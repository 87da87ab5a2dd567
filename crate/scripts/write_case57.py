"""Write pypower's bundled IEEE 57-bus case as a MATPOWER .m file."""
import sys
from pypower.api import case57

BUS_HDR = "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
GEN_HDR = "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\tQc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf"
BR_HDR = "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"


def fmt(x):
    return ("%d" % x) if float(x).is_integer() else repr(float(x))


def matrix(name, rows, ncol):
    out = ["mpc.%s = [" % name]
    for r in rows:
        out.append("\t" + "\t".join(fmt(v) for v in r[:ncol]) + ";")
    out.append("];")
    return "\n".join(out)


def main(path):
    ppc = case57()
    text = [
        "function mpc = case57",
        "%CASE57    Power flow data for IEEE 57 bus test case.",
        "%   Please see CASEFORMAT for details on the case file format.",
        "",
        "%% MATPOWER Case Format : Version 2",
        "mpc.version = '2';",
        "",
        "%%-----  Power Flow Data  -----%%",
        "%% system MVA base",
        "mpc.baseMVA = %s;" % fmt(ppc["baseMVA"]),
        "",
        "%% bus data",
        BUS_HDR,
        matrix("bus", ppc["bus"], 13),
        "",
        "%% generator data",
        GEN_HDR,
        matrix("gen", ppc["gen"], 21),
        "",
        "%% branch data",
        BR_HDR,
        matrix("branch", ppc["branch"], 13),
        "",
        "%%-----  OPF Data  -----%%",
        "%% generator cost data",
        matrix("gencost", ppc["gencost"], ppc["gencost"].shape[1]),
        "",
    ]
    with open(path, "w") as f:
        f.write("\n".join(text))


if __name__ == "__main__":
    main(sys.argv[1])
