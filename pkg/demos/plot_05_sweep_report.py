"""
A full sweep written to CSV
===========================

The harness runs every mode and horizon from a config and writes one
report; running it twice gives byte-identical files.
"""

from dcreward.harness import export_report, load_config, read_report, run_experiment

cfg = load_config("configs/demo.yaml", d_values=[0, 2, 10])
report = run_experiment(cfg)
path = export_report(report, "sweep_report.csv")
for row in read_report(path):
    print(f"{row['mode']:<10} D={row['D']:<3} peak {row['peak_norm']:.3f} cost {row['cost_norm']:.3f} {row['status']}")
