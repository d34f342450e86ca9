"""Breach-escalation state machine: Normal -> BreachPending -> Critical.

The engine consumes one tick per sample period (a Reading, or None during
sensor dropout) and emits MonitorEvents that drive local logging, image
capture, alerting and ledger writes. It is a pure function of the tick
stream and thresholds: no wall clock, no randomness except the seeded
image digest.

Cadence rules:
  - Normal/BreachPending: one local record at the first tick, then every
    normal_log_period on a fixed grid. The grid does not drift when an
    episode or dropout delays a record.
  - Critical: a record every critical_log_period (every sample with the
    defaults); records landing on grid instants count as the scheduled ones.
  - Batch anchors fire every batch_anchor_period from the run origin,
    whether or not a reading arrived on that tick.

Escalation fires at the first out-of-range sample with at least
breach_escalation seconds elapsed since the episode started (closed
bound: 40 minutes exactly qualifies). An episode ends after two
consecutive samples strictly inside the thresholds shrunk by the
hysteresis margin; the margin is applied in each quantity's own tenths
units. Brief in-range excursions shorter than that debounce neither end
the episode nor reset its escalation timer.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from .model import EventKind, MonitorEvent, Reading, Thresholds, Timestamp


class OutOfOrderSample(ValueError):
    """Tick timestamps regressed."""


class Classification(enum.Enum):
    IN_RANGE = "InRange"
    OUT_OF_RANGE = "OutOfRange"


def classify(reading: Reading, thresholds: Thresholds) -> Classification:
    """Closed-interval band check: boundary values are in range; either
    quantity outside its band makes the sample out of range."""
    if not thresholds.temp_min_decic <= reading.temp_decic <= thresholds.temp_max_decic:
        return Classification.OUT_OF_RANGE
    if not thresholds.hum_min_decip <= reading.hum_decip <= thresholds.hum_max_decip:
        return Classification.OUT_OF_RANGE
    return Classification.IN_RANGE


def _inside_hysteresis_band(reading: Reading, th: Thresholds) -> bool:
    h = th.hysteresis_decic
    return (
        th.temp_min_decic + h < reading.temp_decic < th.temp_max_decic - h
        and th.hum_min_decip + h < reading.hum_decip < th.hum_max_decip - h
    )


RESOLVE_DEBOUNCE_SAMPLES = 2

ALERT_SINKS = ("buzzer", "display", "messenger")


class MonitorMode(enum.Enum):
    NORMAL = "Normal"
    BREACH_PENDING = "BreachPending"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class LocalRecord:
    """Periodic local log entry with window extremes since the last record."""

    at: Timestamp
    reading: Reading
    mode: MonitorMode
    window_min_temp_decic: int
    window_max_temp_decic: int
    window_avg_temp_decic: int


@dataclass
class MonitorState:
    mode: MonitorMode = MonitorMode.NORMAL
    episode_start: Timestamp | None = None
    episode_was_critical: bool = False
    consecutive_in_range: int = 0
    last_local_log: Timestamp | None = None
    last_seen: Timestamp | None = None


class MonitorEngine:
    """One state machine per device. Single-threaded by contract."""

    def __init__(
        self,
        thresholds: Thresholds,
        device_id: str,
        origin: Timestamp,
        image_seed: int = 0,
    ):
        self.thresholds = thresholds
        self.device_id = device_id
        self.origin = origin
        self.image_seed = image_seed
        self.state = MonitorState()
        # Record grid is anchored at the first tick; anchor grid at the origin.
        self._record_grid_origin = origin + thresholds.sample_period
        self._next_scheduled_log = self._record_grid_origin
        self._next_anchor = origin + thresholds.batch_anchor_period
        self._window_temps: list[int] = []

    def step(self, reading: Reading | None, now: Timestamp) -> list[MonitorEvent]:
        st = self.state
        th = self.thresholds
        if st.last_seen is not None and now < st.last_seen:
            raise OutOfOrderSample(f"tick at {now} after {st.last_seen}")
        st.last_seen = now

        events: list[MonitorEvent] = []
        if reading is not None:
            if reading.at != now:
                raise OutOfOrderSample(f"reading at {reading.at} fed to tick {now}")
            events.append(MonitorEvent(EventKind.SAMPLE_TAKEN, now, {"reading": reading}))
            self._window_temps.append(reading.temp_decic)
            events.extend(self._transition(reading, now))
            events.extend(self._local_log(reading, now))
        events.extend(self._batch_anchor(now))
        return events

    # -- state transitions ------------------------------------------------

    def _transition(self, reading: Reading, now: Timestamp) -> list[MonitorEvent]:
        st = self.state
        th = self.thresholds
        out = classify(reading, th) is Classification.OUT_OF_RANGE
        events: list[MonitorEvent] = []

        if st.mode is MonitorMode.NORMAL:
            if out:
                st.mode = MonitorMode.BREACH_PENDING
                st.episode_start = now
                st.episode_was_critical = False
                st.consecutive_in_range = 0
                events.append(
                    MonitorEvent(
                        EventKind.BREACH_STARTED,
                        now,
                        {"episode_id": now, "reading": reading},
                    )
                )
            return events

        # BreachPending or Critical.
        assert st.episode_start is not None
        if out:
            st.consecutive_in_range = 0
            if (
                st.mode is MonitorMode.BREACH_PENDING
                and now - st.episode_start >= th.breach_escalation
            ):
                st.mode = MonitorMode.CRITICAL
                st.episode_was_critical = True
                episode = st.episode_start
                events.append(
                    MonitorEvent(
                        EventKind.CRITICAL_ESCALATED,
                        now,
                        {"episode_id": episode, "since": episode, "reading": reading},
                    )
                )
                events.append(
                    MonitorEvent(
                        EventKind.IMAGE_CAPTURED,
                        now,
                        {
                            "episode_id": episode,
                            "content_sha256": self._image_digest(episode, now),
                        },
                    )
                )
                events.append(
                    MonitorEvent(
                        EventKind.ALERT_DISPATCHED,
                        now,
                        {
                            "episode_id": episode,
                            "severity": "critical",
                            "sinks": list(ALERT_SINKS),
                            "reading": reading,
                        },
                    )
                )
        elif _inside_hysteresis_band(reading, th):
            st.consecutive_in_range += 1
            if st.consecutive_in_range >= RESOLVE_DEBOUNCE_SAMPLES:
                episode = st.episode_start
                events.append(
                    MonitorEvent(
                        EventKind.BREACH_RESOLVED,
                        now,
                        {
                            "episode_id": episode,
                            "since": episode,
                            "duration": now - episode,
                            "was_critical": st.episode_was_critical,
                            "reading": reading,
                        },
                    )
                )
                st.mode = MonitorMode.NORMAL
                st.episode_start = None
                st.episode_was_critical = False
                st.consecutive_in_range = 0
        else:
            # Inside the raw band but within the hysteresis margin: neutral,
            # breaks the debounce streak without sustaining the breach.
            st.consecutive_in_range = 0
        return events

    # -- periodic emissions ------------------------------------------------

    def _local_log(self, reading: Reading, now: Timestamp) -> list[MonitorEvent]:
        st = self.state
        th = self.thresholds
        if st.mode is MonitorMode.CRITICAL:
            due = st.last_local_log is None or now - st.last_local_log >= th.critical_log_period
        else:
            due = now >= self._next_scheduled_log
        if not due:
            return []
        record = LocalRecord(
            at=now,
            reading=reading,
            mode=st.mode,
            window_min_temp_decic=min(self._window_temps),
            window_max_temp_decic=max(self._window_temps),
            window_avg_temp_decic=sum(self._window_temps) // len(self._window_temps),
        )
        st.last_local_log = now
        self._window_temps = []
        if now >= self._next_scheduled_log:
            self._next_scheduled_log = self._next_grid_point(
                now, self._record_grid_origin, th.normal_log_period
            )
        return [MonitorEvent(EventKind.LOCAL_LOG_WRITTEN, now, {"record": record})]

    def _batch_anchor(self, now: Timestamp) -> list[MonitorEvent]:
        if now < self._next_anchor:
            return []
        event = MonitorEvent(EventKind.BATCH_ANCHORED, now, {"scheduled_at": self._next_anchor})
        self._next_anchor = self._next_grid_point(
            now, self.origin, self.thresholds.batch_anchor_period
        )
        return [event]

    @staticmethod
    def _next_grid_point(now: Timestamp, origin: Timestamp, period: int) -> Timestamp:
        return origin + ((now - origin) // period + 1) * period

    def _image_digest(self, episode: Timestamp, now: Timestamp) -> str:
        material = f"{self.device_id}:{episode}:{now}:{self.image_seed}".encode()
        return hashlib.sha256(material).hexdigest()
