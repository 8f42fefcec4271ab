"""
Severity versus time of day
===========================

Build contingency tables from synthetic events and test them for
independence from severity.
"""
from dataclasses import replace

from crashspot.ingest import Severity
from crashspot.synth import STUDY_WINDOW, CANONICAL_BBOX, SynthScenario, generate
from crashspot.temporal import (
    Period,
    build_table,
    format_p,
    high_share_ratio,
    independence_test,
    make_factor,
    severity_share_by_bin,
)

# A background-only scenario in which every period is equally busy
scenario = SynthScenario(seed=3, n_background=5000, bbox=CANONICAL_BBOX, window=STUDY_WINDOW)
events = generate(scenario)

for name in ("time_of_day", "day_of_week", "month"):
    factor = make_factor(name, STUDY_WINDOW)
    rep = independence_test(build_table(events, factor))
    print(f"{name:12s} chi2={rep.chi2:7.2f} df={rep.df} p={format_p(rep.p_value):>6s} V={rep.cramers_v:.3f}")

# Severity was drawn independently of time, so nothing above should stand out.
# Now make night-time events more severe and look again.
night_heavy = [
    replace(e, severity=Severity.High) if e.timestamp.hour < 6 and i % 3 == 0 else e for i, e in enumerate(events)
]
tod = make_factor("time_of_day")
rep = independence_test(build_table(night_heavy, tod))
print("\nafter raising night severity:")
for share in severity_share_by_bin(night_heavy, tod):
    print(f"  {share.category:10s} n={share.count:5d} high={share.percent_high:5.1f}%")
print(f"  chi2={rep.chi2:.1f}, p {format_p(rep.p_value)}, V={rep.cramers_v:.3f}")
print(f"  night/afternoon high-share ratio {high_share_ratio(night_heavy, Period.Night, Period.Afternoon):.2f}")
