"""Compare the six discretisations against a fine reference on the periodic coefficient.

    python demos/02_compare_methods.py [coarse_n] [fine_n]

The defaults (16, 160) take well under a minute.  The errors are relative to
the fine P1 reference in the broken energy norm.
"""
import sys

from msdpg.experiments import RunConfig, run_experiment

coarse_n = int(sys.argv[1]) if len(sys.argv) > 1 else 16
fine_n = int(sys.argv[2]) if len(sys.argv) > 2 else 160

cfg = RunConfig(name="compare", coarse_n=coarse_n, fine_n=fine_n, coefficient={"kind": "periodic", "eps": 1 / 20},
                out="demo_out", render=False)
res = run_experiment(cfg)
print(f"{'method':8s} {'L2':>10s} {'Linf':>10s} {'energy':>10s}")
for r in res.rows:
    print(f"{r.method:8s} {r.err_L2:10.4f} {r.err_Linf:10.4f} {r.err_energy:10.4f}")
print(f"\nCSV: {res.csv_path}")
# Expect: FEM worst, MsPGM in between, the oversampled methods close together.
# DFEM with rho = h and gamma0 = 20 is not coercive for this contrast; raising
# gamma0 or switching to rho = eps repairs it.
