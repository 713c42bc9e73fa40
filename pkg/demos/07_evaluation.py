"""Walkthrough: the evaluation harness (memory, bandwidth, sizes, startup).

Time is simulated throughout; the interesting outputs are structural:
samepage savings grow with nym count, parallel downloads scale linearly,
persistent archives grow while preconfigured ones stay flat, and restored
nyms start faster thanks to reusable transport state.
"""

from pathlib import Path

from nymkit import metrics
from nymkit.ctl import build_engine
from nymkit.nymcore import NymMode
from nymkit.transports import TransportKind

engine = build_engine(local_store="/tmp/nymkit-demo-store")

print("== samepage merging across 1..8 nyms ==")
for n in range(1, 9):
    engine.create_nym(NymMode.EPHEMERAL, TransportKind.INCOGNITO)
    report = engine.ksm_sample()
    if n in (1, 4, 8):
        print(f"  {n} nyms: {report.used_bytes_no_merge >> 20} MB raw, "
              f"{report.used_bytes_merged >> 20} MB merged "
              f"({report.saving_fraction:.1%} saved, "
              f"{report.shared_page_count} shared pages)")
series = [(n, r.used_bytes_merged) for n, r in engine.collector.ksm_samples]
print(f"  per-nym RAM slope: {metrics.per_nym_ram(series) / 2**20:.0f} MB/nym")

print("\n== parallel downloads over a shared 10 Mbit/s link ==")
for result in engine.bandwidth_experiment(TransportKind.ONION_SIM, 5_000_000):
    worst = max(result.completion_times)
    print(f"  {result.nym_count} nym(s): {worst:7.1f} s "
          f"(overhead ratio {result.overhead_ratio:.4f})")

print("\n== archive size across save/restore cycles ==")
grow = engine.size_series_experiment(NymMode.PERSISTENT, "eval-p", "pw",
                                     "local", cycles=5)
flat = engine.size_series_experiment(NymMode.PRECONFIGURED, "eval-c", "pw",
                                     "local", cycles=5)
print("  persistent   :", grow.archive_sizes())
print("  preconfigured:", flat.archive_sizes())
print(f"  anon share of the last persistent archive: "
      f"{grow.points[-1].anon_fraction:.0%}")

print("\n== startup phases per usage model (5 runs each) ==")
engine.startup_time_experiment(NymMode.EPHEMERAL, runs=5)
engine.startup_time_experiment(NymMode.PRECONFIGURED, runs=5, backend="local")
engine.startup_time_experiment(NymMode.PERSISTENT, runs=5, backend="local")
report = engine.collector.phase_report()
for model in ("ephemeral", "preconfigured", "persistent"):
    phases = report[model]
    line = ", ".join(f"{k}={v:.1f}s" for k, v in sorted(phases.items()))
    print(f"  {model:14} {line}")

out = Path("/tmp/nymkit-demo-exports")
out.mkdir(exist_ok=True)
header, rows = metrics.export_ram_per_nym(engine.collector.ksm_samples)
(out / "ram_per_nym.csv").write_text(metrics.rows_to_csv(header, rows))
header, rows = metrics.export_bandwidth(engine.collector.bandwidth_results)
(out / "bandwidth.csv").write_text(metrics.rows_to_csv(header, rows))
header, rows = metrics.export_size_series(grow)
(out / "size_series.csv").write_text(metrics.rows_to_csv(header, rows))
header, rows = metrics.export_phase_breakdown(report)
(out / "phases.csv").write_text(metrics.rows_to_csv(header, rows))
print(f"\nwrote plot-ready CSV exports to {out}/")
