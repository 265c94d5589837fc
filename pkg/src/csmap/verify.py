"""Trace verification: delay bound, collision accounting, regime labels.

The checks re-derive everything from the raw packet intervals recorded in
the trace, independently of the engine's own flags and of the classifier in
``analysis`` (this module is the second route of those dual checks).

Verdict semantics: a synchronized run must be violation-free.  A
desynchronized run is EXPECTED to show collisions (and may exceed the delay
bound, which presumes correct synchronization); those are reported as
expected violations rather than failures so callers can assert both the
positive and the negative experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .trace import PacketRecord, SimTrace

PASS = "pass"
EXPECTED = "expected_violations"
FAIL = "fail"


@dataclass
class CheckResult:
    name: str
    status: str  # pass | expected_violations | fail
    detail: str
    violations: list[str] = field(default_factory=list)


@dataclass
class VerifyReport:
    checks: list[CheckResult]

    @property
    def status(self) -> str:
        if any(c.status == FAIL for c in self.checks):
            return FAIL
        if any(c.status == EXPECTED for c in self.checks):
            return EXPECTED
        return PASS


def _overlap_pairs(packets: list[PacketRecord]) -> set[tuple[int, int]]:
    """Brute-force pairwise interval overlaps, by packet list index."""
    pairs = set()
    for i in range(len(packets)):
        a = packets[i]
        for j in range(i + 1, len(packets)):
            b = packets[j]
            if a.t < b.t + b.duration and b.t < a.t + a.duration:
                pairs.add((i, j))
    return pairs


def _oracle_regime(window: list[PacketRecord], context: list[PacketRecord], period: float) -> str:
    """Independent re-derivation of the per-window regime label."""
    if not window:
        return "unclassified"
    ids = {id(p) for p in window}
    ordered = sorted(context, key=lambda p: p.t)
    overlaps = _overlap_pairs(ordered)
    for i, j in overlaps:
        if id(ordered[i]) in ids or id(ordered[j]) in ids:
            return "simultaneous"
    for k in range(len(ordered) - 1):
        a, b = ordered[k], ordered[k + 1]
        if id(a) not in ids and id(b) not in ids:
            continue
        if a.source != b.source and a.source > b.source and b.t - a.t < 1.5 * period:
            return "reversed_order"
    return "correct_order"


def verify_trace(trace: SimTrace) -> VerifyReport:
    meta = trace.meta
    sync = meta.get("sync_mode") == "synchronized"
    n_slots = int(meta.get("n_slots", 0))
    period = float(meta.get("period_s", 1.0))
    bound = n_slots + 1
    packets = [p for p in trace.packets if not p.truncated]
    checks: list[CheckResult] = []

    # 1. Collision flags must agree with brute-force interval overlap.
    flagged = {i for i, p in enumerate(packets) if p.collided}
    overlapping: set[int] = set()
    for i, j in _overlap_pairs(packets):
        overlapping.add(i)
        overlapping.add(j)
    mismatches = sorted(flagged.symmetric_difference(overlapping))
    checks.append(
        CheckResult(
            name="collision_flags",
            status=PASS if not mismatches else FAIL,
            detail=(
                "collision flags match pairwise interval overlap"
                if not mismatches
                else f"{len(mismatches)} packets with inconsistent collision flags"
            ),
            violations=[
                f"packet source={packets[i].source} id={packets[i].packet_id} t={packets[i].t}"
                for i in mismatches[:20]
            ],
        )
    )

    # 2. Collision freedom (expected to fail when desynchronized).
    n_collided = len(overlapping)
    if n_collided == 0:
        checks.append(CheckResult("collision_freedom", PASS, "no overlapping transmissions"))
    else:
        checks.append(
            CheckResult(
                "collision_freedom",
                EXPECTED if not sync else FAIL,
                f"{n_collided} packets in overlapping transmissions"
                + ("" if sync else " (expected for a desynchronized run)"),
                violations=[
                    f"packet source={packets[i].source} id={packets[i].packet_id} t={packets[i].t}"
                    for i in sorted(overlapping)[:20]
                ],
            )
        )

    # 3. Delay bound: every packet starts within N+1 rounds of becoming
    # pending.  The bound presumes correct synchronization.
    late = [p for p in packets if p.delay_rounds > bound]
    if not late:
        checks.append(
            CheckResult("delay_bound", PASS, f"all access delays <= {bound} rounds")
        )
    else:
        checks.append(
            CheckResult(
                "delay_bound",
                EXPECTED if not sync else FAIL,
                f"{len(late)} packets exceeded the {bound}-round bound"
                + ("" if sync else " (bound presumes synchronization)"),
                violations=[
                    f"packet source={p.source} id={p.packet_id} delay={p.delay_rounds}"
                    for p in late[:20]
                ],
            )
        )

    # 4. Recorded regime labels must match the independent oracle.
    if trace.regimes:
        mismatched = []
        for rec in trace.regimes:
            window = [p for p in packets if rec.t_start <= p.t < rec.t_end]
            margin = 1.5 * period
            context = [
                p
                for p in packets
                if rec.t_start - margin <= p.t < rec.t_end + margin
            ]
            expect = _oracle_regime(window, context, period)
            if expect != rec.label:
                mismatched.append(
                    f"window [{rec.t_start}, {rec.t_end}): recorded {rec.label}, oracle {expect}"
                )
        checks.append(
            CheckResult(
                "regime_labels",
                PASS if not mismatched else FAIL,
                "regime labels match the brute-force oracle"
                if not mismatched
                else f"{len(mismatched)} windows disagree with the oracle",
                violations=mismatched[:20],
            )
        )

    return VerifyReport(checks=checks)
