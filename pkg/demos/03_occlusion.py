"""A day cruiser passes between the ferry and the kayak.

For about two seconds the kayak returns almost no points. Its visibility
collapses within a few frames while its existence decays slowly, so the
track coasts on the constant-velocity prediction and picks the kayak up
again under the same id.

    python demos/03_occlusion.py
"""
from nearshore.pipeline import run_mapping, run_tracking
from nearshore.simulator import builtin_scenarios, generate
from nearshore.tracker import TrackStatus

bundle, truth = generate(builtin_scenarios(seed=0)["kayak_undock"])
res = run_tracking(bundle, run_mapping(bundle).final, "precise")
hits = truth.target_hits[1]
kayak_id = next(r.track_id for r in res.rows if r.status == TrackStatus.CONFIRMED.value)

print(f"{'t (s)':>6}{'kayak returns':>15}{'track':>7}{'r':>8}{'v':>8}")
for k in range(110, 160, 3):
    snap = res.snapshots[k]
    tr = next((t for t in snap.tracks if t.id == kayak_id), None)
    state = "lost" if tr is None else f"{tr.id:>7}{tr.existence:8.3f}{tr.visibility:8.3f}"
    print(f"{k / 10:6.1f}{int(hits[k]):>15}{state}")
