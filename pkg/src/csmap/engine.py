"""Deterministic discrete-event engine composing clocks, sync, MAC and PHY.

The event queue runs on integer-nanosecond ticks; co-timed events dispatch
in a fixed kind order, then insertion order, so a scenario plus its seed
fully determines the trace.  Clocks advance lazily to each event time; all
randomness flows from per-component generators derived from the scenario
seed through fixed seed-sequence keys.

Event kinds per cycle of the data plane: each terminal's PPS edge anchors
its arbitration window in local time; at the window end the sensed I/Q is
accumulated and arbitrated; a vacant verdict starts a packet transmission
whose decode at the base station happens when it leaves the air.  Sync
links revise every revision interval and discipline follower clocks unless
the scenario runs desynchronized.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import SPEED_OF_LIGHT, __version__
from .analysis import segment_regimes
from .mac import CarrierSenseState, Verdict, carrier_sense, update_thresholds
from .packet import FRAME_BITS, apply_bit_errors, decode_frame, encode_frame, packet_ber
from .phy import CfoState, dbpsk_bit_errors, received_power, synthesize_iq
from .scenario import Role, Scenario, SyncMode
from .timebase import Oscillator, make_params
from .timesync import PidController, WiWiLink, link_power_ok
from .trace import (
    MacDecisionRecord,
    PacketRecord,
    SimTrace,
    TelemetryRecord,
    RegimeRecord,
)
from .trajectory import distance, trajectory_position

NS = 1_000_000_000

# Event kinds; the numeric rank breaks ties at equal event times.
EV_REVISION = 0
EV_PPS = 1
EV_AP_END = 2
EV_TX_END = 3
EV_TELEMETRY = 4
EV_PHASE_SAMPLE = 5
EV_SYNC_LOSS = 6


def _ns(t: float) -> int:
    return round(t * 1e9)


def _sec(t_ns: int) -> float:
    return t_ns / 1e9


def _seeded(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *key)))


def _seed_int(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence((seed, *key)).generate_state(1)[0])


class _Terminal:
    def __init__(self, spec, idx: int, scenario: Scenario):
        self.spec = spec
        self.idx = idx
        params = make_params(
            spec.oscillator_preset,
            rng_seed=_seed_int(scenario.seed, 10, idx),
            initial_fractional_offset=spec.y0,
        )
        self.osc = Oscillator(params, start_time_error=spec.x0)
        self.y_disc = 0.0
        self.pps_rng = _seeded(scenario.seed, 30, idx)
        self.iq_rng = _seeded(scenario.seed, 40, idx)
        self.pps_generation = 0
        self.pps_count = -1
        self.next_pps_target = math.floor(self.osc.local_time()) + 1.0
        self.transmitting_until_ns = -1
        self.packet_counter = 0
        self.saturated = not spec.arrivals
        self.pending_since_round: int | None = 0 if self.saturated else None
        self.arrival_queue = list(spec.arrivals)
        self.cs: CarrierSenseState | None = None
        if spec.role is Role.STA:
            self.cs = CarrierSenseState(
                queue_len=scenario.queue_len,
                scale_factor=scenario.scale_factor,
                dc_offset=scenario.dc_offset,
            )
        self.source_id = spec.slot + 1 if spec.role is Role.STA else 0

    def y_eff(self) -> float:
        return self.osc.state.fractional_frequency + self.y_disc

    def advance_to(self, t: float) -> None:
        self.osc.advance_to(t, y_extra=self.y_disc)

    def time_error(self) -> float:
        return self.osc.time_error()

    def position(self, t: float) -> tuple[float, float]:
        if self.spec.trajectory is not None:
            return trajectory_position(self.spec.trajectory, t)
        return self.spec.position

    def predict_pps(self) -> float:
        st = self.osc.state
        local = st.local_time(self.osc.params)
        rate = 1.0 + st.fractional_frequency + self.y_disc
        return st.true_time + (self.next_pps_target - local) / rate

    def check_pending(self, t: float, rnd: int) -> bool:
        """Whether a packet is waiting at time t (round rnd)."""
        if self.saturated:
            return self.pending_since_round is not None
        if self.pending_since_round is not None:
            return True
        if self.arrival_queue and self.arrival_queue[0] <= t:
            arrival = self.arrival_queue.pop(0)
            # Round indexing for scripted arrivals assumes near-zero clock
            # offset (the delay-bound scenarios run ideal clocks).
            self.pending_since_round = int(math.floor(arrival))
            return True
        return False


@dataclass
class _TxInFlight:
    terminal_idx: int
    source: int
    packet_id: int
    start_ns: int
    end_ns: int
    y_tx: float
    enqueue_round: int
    tx_round: int
    bits: np.ndarray
    collided: bool = False


class _LinkState:
    def __init__(self, sta: _Terminal, link: WiWiLink, pid: PidController | None):
        self.sta = sta
        self.link = link
        self.pid = pid
        self.sync_lost = False
        self.power_lost = False
        self.last_estimate = None
        self.reported_lost = False

    @property
    def lost(self) -> bool:
        return self.link.lost or self.sync_lost or self.power_lost


class SimulationRun:
    """One scenario execution; construct and call :meth:`run` once."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        self.end_ns = _ns(scenario.run_duration)
        self.heap: list[tuple[int, int, int, tuple]] = []
        self.seq = 0

        self.terminals = [
            _Terminal(spec, idx, scenario) for idx, spec in enumerate(scenario.terminals)
        ]
        self.bs = next(t for t in self.terminals if t.spec.role is Role.BS)
        self.stas = sorted(
            (t for t in self.terminals if t.spec.role is Role.STA),
            key=lambda t: t.spec.slot,
        )
        self.sched = (
            scenario.schedule_for(self.stas[0].spec) if self.stas else None
        )
        self.ber_rng = _seeded(scenario.seed, 50)
        self.active_tx: list[_TxInFlight] = []

        self.links: list[_LinkState] = []
        if scenario.wiwi_enabled and self.stas:
            disciplined = scenario.sync_mode is SyncMode.SYNCHRONIZED
            for link_idx, sta in enumerate(self.stas):
                rng = _seeded(scenario.seed, 20, link_idx)
                t_c0 = sta.time_error() - self.bs.time_error()
                t_d0 = self._true_delay(sta, 0.0)
                link = WiWiLink(scenario.wiwi, t_c0, t_d0, rng)
                pid = (
                    PidController(
                        k_p=scenario.pid_kp,
                        k_i=scenario.pid_ki,
                        k_d=scenario.pid_kd,
                        update_interval=scenario.wiwi.revision_interval,
                        slew_limit=scenario.pid_slew_limit,
                    )
                    if disciplined
                    else None
                )
                self.links.append(_LinkState(sta, link, pid))
        # The monitored link drives distance telemetry and takes the
        # reflection injection: the first STA with a trajectory, else STA 1.
        self.monitored: _LinkState | None = None
        for state in self.links:
            if state.sta.spec.trajectory is not None:
                self.monitored = state
                break
        if self.monitored is None and self.links:
            self.monitored = self.links[0]

        self.trace = SimTrace(meta=self._meta())
        self._phase_samples: dict[str, list[float]] = {
            sta.spec.name: [] for sta in self.stas
        }

        self._push(0, EV_TELEMETRY, ())
        if scenario.phase_sample_interval > 0:
            self._push(0, EV_PHASE_SAMPLE, ())
        if self.links:
            self._push(_ns(scenario.wiwi.revision_interval), EV_REVISION, ())
        if not scenario.sync_only:
            for sta in self.stas:
                self._schedule_pps(sta)
            if self.bs.spec.pps_jitter or scenario.trace_pps_edges:
                self._schedule_pps(self.bs)
        if scenario.injections.sync_loss_at is not None:
            self._push(_ns(scenario.injections.sync_loss_at), EV_SYNC_LOSS, ())

    # -- helpers ----------------------------------------------------------

    def _meta(self) -> dict:
        sc = self.sc
        return {
            "schema": 1,
            "generator": f"csmap {__version__}",
            "name": sc.name,
            "sync_mode": sc.sync_mode.value,
            "seed": sc.seed,
            "run_duration_s": sc.run_duration,
            "warmup_s": sc.warmup,
            "n_slots": len(self.stas),
            "ap_duration_us": sc.ap_duration * 1e6,
            "ap_offset_us": sc.ap_offset * 1e6,
            "period_s": sc.period,
            "wiwi_enabled": sc.wiwi_enabled,
            "sync_only": sc.sync_only,
        }

    def _push(self, t_ns: int, kind: int, payload: tuple) -> None:
        if t_ns > self.end_ns:
            return
        heapq.heappush(self.heap, (t_ns, kind, self.seq, payload))
        self.seq += 1

    def _true_delay(self, sta: _Terminal, t: float) -> float:
        d = distance(sta.position(t), self.bs.position(t))
        return d / SPEED_OF_LIGHT

    def _schedule_pps(self, term: _Terminal) -> None:
        term.pps_generation += 1
        t_edge = max(term.predict_pps(), term.osc.state.true_time)
        self._push(_ns(t_edge), EV_PPS, (term.idx, term.pps_generation))

    def _reflection_bias(self, t_ns: int) -> float:
        # Integer-tick arithmetic: float division here would jitter the ramp
        # steps and corrupt the intended one-cycle slip per pulse.
        inj = self.sc.injections
        if not inj.reflection_pulse_times:
            return 0.0
        rev_ns = _ns(self.sc.wiwi.revision_interval)
        ramp = inj.reflection_ramp_steps
        bias = 0.0
        for t_p in inj.reflection_pulse_times:
            p_ns = _ns(t_p)
            if p_ns <= t_ns < p_ns + ramp * rev_ns:
                step = (t_ns - p_ns) // rev_ns + 1
                bias += inj.reflection_magnitude * min(step, ramp) / ramp
        return bias

    # -- event handlers ----------------------------------------------------

    def run(self) -> SimTrace:
        handlers = {
            EV_REVISION: self._on_revision,
            EV_PPS: self._on_pps,
            EV_AP_END: self._on_ap_end,
            EV_TX_END: self._on_tx_end,
            EV_TELEMETRY: self._on_telemetry,
            EV_PHASE_SAMPLE: self._on_phase_sample,
            EV_SYNC_LOSS: self._on_sync_loss,
        }
        while self.heap:
            t_ns, kind, _, payload = heapq.heappop(self.heap)
            handlers[kind](t_ns, *payload)
        self._finalize()
        return self.trace

    def _on_revision(self, t_ns: int) -> None:
        t = _sec(t_ns)
        self.bs.advance_to(t)
        for state in self.links:
            sta = state.sta
            sta.advance_to(t)
            if state.sync_lost or state.power_lost:
                continue
            d = distance(sta.position(t), self.bs.position(t))
            if not link_power_ok(d, self.sc.wiwi):
                state.power_lost = True
                self.trace.events.append(
                    {"t": t, "event": "wiwi_power_lost", "terminal": sta.source_id, "distance_m": d}
                )
                continue
            true_t_c = sta.time_error() - self.bs.time_error()
            true_t_d = d / SPEED_OF_LIGHT
            if state is self.monitored:
                state.link.sum_bias = self._reflection_bias(t_ns)
            was_lost = state.link.lost
            est = state.link.revise(true_t_c, true_t_d)
            state.last_estimate = est
            if state.link.lost and not was_lost and not state.reported_lost:
                state.reported_lost = True
                self.trace.events.append(
                    {"t": t, "event": "tracking_lost", "terminal": sta.source_id}
                )
            if state.pid is not None:
                correction = state.pid.update(est.t_c)
                sta.y_disc = -correction
                if not self.sc.sync_only:
                    self._schedule_pps(sta)
        self._push(t_ns + _ns(self.sc.wiwi.revision_interval), EV_REVISION, ())

    def _on_pps(self, t_ns: int, term_idx: int, generation: int) -> None:
        term = self.terminals[term_idx]
        if generation != term.pps_generation:
            return  # superseded by a re-prediction
        t = _sec(t_ns)
        term.advance_to(t)
        term.pps_count += 1
        term.next_pps_target += 1.0
        jitter = 0.0
        if term.spec.pps_jitter > 0:
            jitter = term.spec.pps_jitter * float(term.pps_rng.standard_normal())
        if self.sc.trace_pps_edges:
            self.trace.events.append(
                {
                    "t": t,
                    "event": "pps_edge",
                    "terminal": term.source_id,
                    "round": term.pps_count,
                    "edge_error_s": t + jitter - (term.next_pps_target - 1.0),
                }
            )
        if term.cs is not None and not self.sc.sync_only:
            rate = 1.0 + term.y_eff()
            sched = self.sc.schedule_for(term.spec)
            t_s = t + jitter + sched.terminal_index * (sched.ap_duration + sched.ap_offset) / rate
            t_e = t_s + sched.ap_duration / rate
            self._push(_ns(t_e), EV_AP_END, (term_idx, term.pps_count, _ns(t_s), _ns(t_e)))
        self._schedule_pps(term)

    def _on_ap_end(self, t_ns: int, term_idx: int, rnd: int, t_s_ns: int, t_e_ns: int) -> None:
        term = self.terminals[term_idx]
        t_e = _sec(t_e_ns)
        t_s = _sec(t_s_ns)
        term.advance_to(t_e)
        if term.transmitting_until_ns > t_s_ns:
            self._record_mac(term, rnd, t_e, None, busy=True)
            return
        if not term.check_pending(t_s, rnd):
            return
        window_mid = (t_s + t_e) / 2.0
        intervals = []
        for tx in self.active_tx:
            if tx.terminal_idx == term_idx:
                continue
            src = self.terminals[tx.terminal_idx]
            d = max(distance(src.position(window_mid), term.position(window_mid)), 1e-3)
            amp = math.sqrt(received_power(d, self.sc.channel, self.sc.channel.tx_power))
            intervals.append((_sec(tx.start_ns), _sec(tx.end_ns), amp))
        window = synthesize_iq(t_s, t_e, intervals, self.sc.channel, term.iq_rng)
        decision = carrier_sense(term.cs, window, rnd)
        self._record_mac(term, rnd, t_e, decision)
        if decision.verdict is Verdict.TRANSMIT:
            update_thresholds(term.cs)
            term.cs.packets_sent += 1
            self._start_transmission(term, rnd, t_e_ns)

    def _record_mac(self, term, rnd, t, decision, busy: bool = False) -> None:
        if not self.sc.trace_mac_decisions:
            return
        if busy:
            rec = MacDecisionRecord(
                t=t, terminal=term.source_id, round=rnd, verdict="defer",
                i_acc=0.0, q_acc=0.0, i_thresh=term.cs.i_thresh, q_thresh=term.cs.q_thresh,
                reason="transmitting",
            )
        else:
            rec = MacDecisionRecord(
                t=t, terminal=term.source_id, round=rnd,
                verdict=decision.verdict.value, i_acc=decision.i_acc, q_acc=decision.q_acc,
                i_thresh=term.cs.i_thresh, q_thresh=term.cs.q_thresh, reason=decision.reason,
            )
        self.trace.mac_decisions.append(rec)

    def _start_transmission(self, term: _Terminal, rnd: int, start_ns: int) -> None:
        packet_id = term.packet_counter & 0xFFFF
        term.packet_counter += 1
        y_eff = term.y_eff()
        duration = FRAME_BITS / (self.sc.channel.symbol_rate * (1.0 + y_eff))
        end_ns = start_ns + _ns(duration)
        tx = _TxInFlight(
            terminal_idx=term.idx,
            source=term.source_id,
            packet_id=packet_id,
            start_ns=start_ns,
            end_ns=end_ns,
            y_tx=y_eff,
            enqueue_round=term.pending_since_round if term.pending_since_round is not None else rnd,
            tx_round=rnd,
            bits=encode_frame(term.source_id, packet_id),
        )
        for other in self.active_tx:
            if other.end_ns > tx.start_ns:
                other.collided = True
                tx.collided = True
        self.active_tx.append(tx)
        term.transmitting_until_ns = end_ns
        term.pending_since_round = None
        self._push(end_ns, EV_TX_END, (tx,))

    def _on_tx_end(self, t_ns: int, tx: _TxInFlight) -> None:
        self.active_tx.remove(tx)
        term = self.terminals[tx.terminal_idx]
        t = _sec(t_ns)
        term.advance_to(t)
        self.bs.advance_to(t)
        if term.saturated:
            term.pending_since_round = term.pps_count
        self.trace.packets.append(self._decode_at_bs(tx))

    def _decode_at_bs(self, tx: _TxInFlight) -> PacketRecord:
        ch = self.sc.channel
        term = self.terminals[tx.terminal_idx]
        mid_t = _sec((tx.start_ns + tx.end_ns) // 2)
        d = max(distance(term.position(mid_t), self.bs.position(mid_t)), 1e-3)
        p_r = received_power(d, ch, ch.tx_power)
        snr = p_r / ch.noise_floor
        cfo = CfoState(delta_f=(tx.y_tx - self.bs.y_eff()) * ch.carrier_frequency)
        errors = dbpsk_bit_errors(
            FRAME_BITS, snr, cfo, ch, self.ber_rng, collided=tx.collided
        )
        decoded = decode_frame(apply_bit_errors(tx.bits, errors))
        return PacketRecord(
            t=_sec(tx.start_ns),
            source=tx.source,
            packet_id=tx.packet_id,
            duration=_sec(tx.end_ns - tx.start_ns),
            ber=packet_ber(decoded),
            body_errors=decoded.body_error_count,
            header_valid=decoded.header_valid,
            collided=tx.collided,
            enqueue_round=tx.enqueue_round,
            tx_round=tx.tx_round,
            delay_rounds=tx.tx_round - tx.enqueue_round,
            snr=snr,
            cfo_hz=cfo.delta_f,
        )

    def _on_telemetry(self, t_ns: int) -> None:
        t = _sec(t_ns)
        for term in self.terminals:
            term.advance_to(t)
        pps_diff = None
        if len(self.stas) >= 2:
            pps_diff = self.stas[0].time_error() - self.stas[1].time_error()
        ld_wiwi = ld_truth = None
        status = None
        t_c = None
        if self.monitored is not None:
            state = self.monitored
            status = "lost" if state.lost else "locked"
            ld_truth = distance(state.sta.position(t), self.bs.position(t))
            est = state.last_estimate
            if est is not None:
                t_c = est.t_c
                if not state.link.lost and math.isfinite(est.l_d):
                    ld_wiwi = est.l_d
        self.trace.telemetry.append(
            TelemetryRecord(
                t=t,
                pps_diff=pps_diff,
                ld_wiwi=ld_wiwi,
                ld_truth=ld_truth,
                wiwi_status=status,
                t_c=t_c,
            )
        )
        self._push(t_ns + _ns(self.sc.telemetry_interval), EV_TELEMETRY, ())

    def _on_phase_sample(self, t_ns: int) -> None:
        t = _sec(t_ns)
        self.bs.advance_to(t)
        bs_phase = self.bs.osc.state.phase
        for sta in self.stas:
            sta.advance_to(t)
            self._phase_samples[sta.spec.name].append(sta.osc.state.phase - bs_phase)
        self._push(t_ns + _ns(self.sc.phase_sample_interval), EV_PHASE_SAMPLE, ())

    def _on_sync_loss(self, t_ns: int) -> None:
        # Models the unexplained mid-run loss of lock: the disciplining
        # correction drops out and the follower reverts to its natural
        # frequency offset, so the PPS difference starts drifting.
        t = _sec(t_ns)
        for state in self.links:
            state.sync_lost = True
            state.sta.advance_to(t)
            state.sta.y_disc = 0.0
            if not self.sc.sync_only:
                self._schedule_pps(state.sta)
        self.trace.events.append({"t": t, "event": "sync_loss_injected"})

    # -- finalization ------------------------------------------------------

    def _finalize(self) -> None:
        for tx in self.active_tx:
            term = self.terminals[tx.terminal_idx]
            self.trace.packets.append(
                PacketRecord(
                    t=_sec(tx.start_ns),
                    source=tx.source,
                    packet_id=tx.packet_id,
                    duration=_sec(tx.end_ns - tx.start_ns),
                    ber=None,
                    body_errors=None,
                    header_valid=None,
                    collided=tx.collided,
                    enqueue_round=tx.enqueue_round,
                    tx_round=tx.tx_round,
                    delay_rounds=tx.tx_round - tx.enqueue_round,
                    truncated=True,
                )
            )
        self.active_tx.clear()
        self.trace.packets.sort(key=lambda p: p.t)
        if self.sched is not None and len(self.stas) >= 2 and not self.sc.sync_only:
            for seg in segment_regimes(self.trace.packets, self.sched, self.sc.run_duration):
                self.trace.regimes.append(
                    RegimeRecord(
                        t_start=seg[0],
                        t_end=seg[1],
                        label=seg[2].value,
                        n_packets=seg[3],
                        n_collided=seg[4],
                    )
                )
        if self.sc.phase_sample_interval > 0:
            self.trace.phase_samples = {
                name: (self.sc.phase_sample_interval, np.array(samples))
                for name, samples in self._phase_samples.items()
            }


def run_scenario(scenario: Scenario) -> SimTrace:
    """Execute one scenario and return its trace."""
    return SimulationRun(scenario).run()
