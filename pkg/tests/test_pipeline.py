import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pufftrace.pipeline import (
    Confidence,
    Episode,
    EpisodeKind,
    FilterConfig,
    LengthMismatch,
    PuffWithTemps,
    analyze_events,
    apply_display_filter,
    associate_temperatures,
    bucket_by_day,
    classify_confidence,
    compute_drift,
    compute_pt_metrics,
    export_episode_table,
    fuse_and_filter,
    merge_consecutive_puffs,
    pair_episodes,
)
from pufftrace.records import (
    DecodedEvent,
    DeviceInstant,
    EventKind,
    ZoneConfig,
    decode_stream,
)

ZONE_M6 = ZoneConfig.parse("UTC-06:00")
UTC = ZoneConfig.utc()

TIMED_KINDS = [EventKind.PUFF_ON, EventKind.PUFF_OFF, EventKind.TOUCH_ON, EventKind.TOUCH_OFF]


def timed(kind: EventKind, seconds: int, ticks: int = 0) -> DecodedEvent:
    return DecodedEvent(kind, instant=DeviceInstant(seconds, ticks))


def temp(kind: EventKind, value: int) -> DecodedEvent:
    return DecodedEvent(kind, temperature=value)


def sequence(kinds: list[EventKind]) -> list[DecodedEvent]:
    """Events of the given kinds at strictly increasing whole seconds."""
    return [timed(k, i) for i, k in enumerate(kinds)]


def puff(start_s: float, end_s: float, confidence=None) -> Episode:
    return Episode(
        kind=EpisodeKind.PUFF,
        start=DeviceInstant.from_unix(start_s),
        end=DeviceInstant.from_unix(end_s),
        confidence=confidence,
    )


def touch(start_s: float, end_s: float) -> Episode:
    return Episode(
        kind=EpisodeKind.TOUCH,
        start=DeviceInstant.from_unix(start_s),
        end=DeviceInstant.from_unix(end_s),
    )


def brute_force_pair(events):
    """Oracle pairer: stateless, by definition -- a pair exists at exactly
    each position of a channel's subsequence where an ON is directly followed
    by an OFF; every record not in such a pair is an orphan."""
    episodes = []
    orphan_positions = []
    for channel in ("PUFF", "TOUCH"):
        indexed = [
            (i, ev)
            for i, ev in enumerate(events)
            if not ev.kind.is_temperature and ev.kind.channel == channel
        ]
        consumed = set()
        for k in range(len(indexed) - 1):
            (i, first), (j, second) = indexed[k], indexed[k + 1]
            if first.kind.is_on and not second.kind.is_on and first.instant <= second.instant:
                episodes.append(
                    Episode(
                        kind=EpisodeKind[channel],
                        start=first.instant,
                        end=second.instant,
                        on_index=i,
                        off_index=j,
                    )
                )
                consumed.update((k, k + 1))
        orphan_positions.extend(i for k, (i, _) in enumerate(indexed) if k not in consumed)
    episodes.sort(key=lambda e: (e.start, e.on_index))
    orphans = [events[i] for i in sorted(orphan_positions)]
    return episodes, orphans


class TestPairEpisodes:
    def test_golden_stream(self, golden_lines):
        events, _ = decode_stream(golden_lines)
        episodes, orphans = pair_episodes(events)
        assert orphans == []
        assert [e.kind for e in episodes] == [EpisodeKind.PUFF, EpisodeKind.TOUCH]
        assert episodes[0].duration_ms == pytest.approx(1115.66162109375, abs=1e-9)
        assert episodes[1].duration_ms == pytest.approx(2012.4053955078125, abs=1e-9)

    def test_empty_stream(self):
        assert pair_episodes([]) == ([], [])

    def test_double_on_orphans_the_first(self):
        events = sequence([EventKind.PUFF_ON, EventKind.PUFF_ON, EventKind.PUFF_OFF])
        episodes, orphans = pair_episodes(events)
        assert len(episodes) == 1
        assert episodes[0].start == events[1].instant
        assert orphans == [events[0]]

    def test_off_without_on_is_orphan(self):
        events = sequence([EventKind.PUFF_OFF, EventKind.PUFF_ON, EventKind.PUFF_OFF])
        episodes, orphans = pair_episodes(events)
        assert len(episodes) == 1
        assert orphans == [events[0]]

    def test_channels_never_cross_match(self):
        events = sequence([EventKind.PUFF_ON, EventKind.TOUCH_OFF, EventKind.PUFF_OFF])
        episodes, orphans = pair_episodes(events)
        assert [e.kind for e in episodes] == [EpisodeKind.PUFF]
        assert orphans == [events[1]]

    def test_time_reversed_pair_reported_not_paired(self):
        events = [timed(EventKind.PUFF_ON, 10), timed(EventKind.PUFF_OFF, 5)]
        episodes, orphans = pair_episodes(events)
        assert episodes == []
        assert orphans == events

    def test_temperatures_ignored(self, golden_lines):
        events, _ = decode_stream(golden_lines)
        only_temp = [e for e in events if e.kind.is_temperature]
        assert pair_episodes(only_temp) == ([], [])

    @given(st.lists(st.sampled_from(TIMED_KINDS), max_size=12))
    @settings(max_examples=300)
    def test_matches_brute_force_oracle(self, kinds):
        events = sequence(kinds)
        assert pair_episodes(events) == brute_force_pair(events)


class TestAssociateTemperatures:
    def test_golden_puff_gains_pair(self, golden_lines):
        events, _ = decode_stream(golden_lines)
        episodes, _ = pair_episodes(events)
        puffs, unassociated = associate_temperatures(events, episodes)
        assert unassociated == []
        assert len(puffs) == 1
        assert (puffs[0].temp_on, puffs[0].temp_off) == (505, 260)

    def test_no_temperature_events(self):
        events = sequence([EventKind.PUFF_ON, EventKind.PUFF_OFF])
        episodes, _ = pair_episodes(events)
        puffs, unassociated = associate_temperatures(events, episodes)
        assert puffs[0].temp_on is None and puffs[0].temp_off is None
        assert unassociated == []

    def test_back_to_back_puffs_each_keep_their_pair(self):
        events = [
            timed(EventKind.PUFF_ON, 0),
            timed(EventKind.PUFF_OFF, 2),
            temp(EventKind.TEMPERATURE_ON, 505),
            temp(EventKind.TEMPERATURE_OFF, 260),
            timed(EventKind.PUFF_ON, 10),
            timed(EventKind.PUFF_OFF, 13),
            temp(EventKind.TEMPERATURE_ON, 520),
            temp(EventKind.TEMPERATURE_OFF, 270),
        ]
        episodes, _ = pair_episodes(events)
        puffs, unassociated = associate_temperatures(events, episodes)
        assert [(p.temp_on, p.temp_off) for p in puffs] == [(505, 260), (520, 270)]
        assert unassociated == []

    def test_touch_bracketing_does_not_steal_the_pair(self):
        events = [
            timed(EventKind.TOUCH_ON, 0),
            timed(EventKind.PUFF_ON, 1),
            timed(EventKind.PUFF_OFF, 3),
            temp(EventKind.TEMPERATURE_ON, 505),
            temp(EventKind.TEMPERATURE_OFF, 260),
            timed(EventKind.TOUCH_OFF, 4),
        ]
        episodes, _ = pair_episodes(events)
        puffs, unassociated = associate_temperatures(events, episodes)
        assert (puffs[0].temp_on, puffs[0].temp_off) == (505, 260)
        assert unassociated == []

    def test_lone_temperature_reported(self):
        events = [
            timed(EventKind.PUFF_ON, 0),
            timed(EventKind.PUFF_OFF, 2),
            temp(EventKind.TEMPERATURE_ON, 505),
        ]
        episodes, _ = pair_episodes(events)
        puffs, unassociated = associate_temperatures(events, episodes)
        assert puffs[0].temp_on is None
        assert len(unassociated) == 1

    def test_pair_before_any_episode_reported(self):
        events = [
            temp(EventKind.TEMPERATURE_ON, 505),
            temp(EventKind.TEMPERATURE_OFF, 260),
            timed(EventKind.PUFF_ON, 5),
            timed(EventKind.PUFF_OFF, 7),
        ]
        episodes, _ = pair_episodes(events)
        puffs, unassociated = associate_temperatures(events, episodes)
        assert puffs[0].temp_on is None
        assert len(unassociated) == 2


def pwt(start_s, end_s, temp_on=None, temp_off=None):
    return PuffWithTemps(puff(start_s, end_s), temp_on, temp_off)


class TestFuseAndFilter:
    def test_duration_only_removes_short_puff(self):
        config = FilterConfig(use_thermistor=False)
        assert fuse_and_filter([pwt(0, 0.150)], config) == []

    def test_duration_only_keeps_long_puff(self):
        config = FilterConfig(use_thermistor=False)
        assert len(fuse_and_filter([pwt(0, 0.250)], config)) == 1

    def test_boundary_duration_removed(self):
        # Exactly at the threshold: "<= threshold -> remove".
        config = FilterConfig(use_thermistor=False, min_puff_ms=200.0)
        assert fuse_and_filter([pwt(0, 0.200)], config) == []

    def test_thermistor_keeps_short_puff_with_swing(self):
        config = FilterConfig(use_thermistor=True)
        kept = fuse_and_filter([pwt(0, 0.150, temp_on=520, temp_off=490)], config)
        assert len(kept) == 1

    def test_thermistor_removes_short_puff_with_small_swing(self):
        config = FilterConfig(use_thermistor=True)
        assert fuse_and_filter([pwt(0, 0.150, temp_on=505, temp_off=497)], config) == []

    def test_thermistor_long_puff_skips_temperature_check(self):
        config = FilterConfig(use_thermistor=True)
        kept = fuse_and_filter([pwt(0, 0.250, temp_on=505, temp_off=497)], config)
        assert len(kept) == 1

    def test_thermistor_short_puff_without_temps_degrades_to_duration(self):
        config = FilterConfig(use_thermistor=True)
        assert fuse_and_filter([pwt(0, 0.150)], config) == []
        assert len(fuse_and_filter([pwt(0, 0.250)], config)) == 1

    def test_merge_when_next_start_reading_not_above_prior_end(self):
        config = FilterConfig(use_thermistor=True)
        puffs = [pwt(0, 2, temp_on=505, temp_off=400), pwt(3, 5, temp_on=390, temp_off=260)]
        kept = fuse_and_filter(puffs, config)
        assert len(kept) == 1
        assert kept[0].start == puffs[0].episode.start
        assert kept[0].end == puffs[1].episode.end

    def test_no_merge_when_next_start_reading_higher(self):
        config = FilterConfig(use_thermistor=True)
        puffs = [pwt(0, 2, temp_on=505, temp_off=400), pwt(3, 5, temp_on=480, temp_off=260)]
        assert len(fuse_and_filter(puffs, config)) == 2

    def test_merge_chains_across_three_puffs(self):
        puffs = [
            pwt(0, 1, temp_on=500, temp_off=450),
            pwt(2, 3, temp_on=440, temp_off=420),
            pwt(4, 5, temp_on=410, temp_off=260),
        ]
        merged = merge_consecutive_puffs(puffs)
        assert len(merged) == 1
        assert merged[0].episode.duration_s == pytest.approx(5.0, abs=1e-4)
        assert (merged[0].temp_on, merged[0].temp_off) == (500, 260)

    def test_merge_conservation(self):
        puffs = [
            pwt(0, 1, temp_on=500, temp_off=450),
            pwt(2, 3, temp_on=440, temp_off=420),
            pwt(10, 11, temp_on=505, temp_off=260),
        ]
        merged = merge_consecutive_puffs(puffs)
        for original in puffs:
            assert any(
                m.episode.start <= original.episode.start
                and original.episode.end <= m.episode.end
                for m in merged
            )

    def test_counting_conservation_without_merging(self):
        config = FilterConfig(use_thermistor=False)
        puffs = [pwt(i * 10, i * 10 + (0.1 if i % 2 else 2.0)) for i in range(8)]
        kept = fuse_and_filter(puffs, config)
        removed = len(puffs) - len(kept)
        assert len(kept) + removed == len(puffs)
        assert sum(k.duration_s for k in kept) <= sum(p.episode.duration_s for p in puffs)


class TestDisplayFilter:
    def test_zero_threshold_is_identity(self):
        episodes = [puff(0, 0.4), puff(10, 12), touch(20, 21)]
        assert apply_display_filter(episodes, 0.0) == episodes

    def test_touches_pass_through(self):
        episodes = [puff(0, 0.4), touch(20, 20.1)]
        assert apply_display_filter(episodes, 5.0) == [episodes[1]]

    def test_validation_style_counts(self):
        episodes = [puff(i * 40, i * 40 + 2.0) for i in range(72)]
        episodes += [puff(3000 + i * 5, 3000 + i * 5 + 0.5) for i in range(17)]
        assert len(apply_display_filter(episodes, 1.0)) == 72

    @given(
        st.lists(st.tuples(st.floats(0, 100), st.floats(0, 5)), max_size=20),
        st.floats(0, 3),
        st.floats(0, 3),
    )
    @settings(max_examples=100)
    def test_monotonic_in_threshold(self, spans, a, b):
        episodes = [puff(s, s + d) for s, d in spans]
        lo, hi = min(a, b), max(a, b)
        assert len(apply_display_filter(episodes, hi)) <= len(apply_display_filter(episodes, lo))


class TestClassifyConfidence:
    def test_overlap_is_high(self):
        puffs = classify_confidence([puff(44.55, 45.67)], [touch(44.0, 46.0)])
        assert puffs[0].confidence is Confidence.HIGH

    def test_no_touches_is_standard(self):
        puffs = classify_confidence([puff(0, 1)], [])
        assert puffs[0].confidence is Confidence.STANDARD

    def test_boundary_touch_counts(self):
        # Touch starting exactly when the puff ends: closed-interval rule.
        puffs = classify_confidence([puff(0, 5)], [touch(5, 6)])
        assert puffs[0].confidence is Confidence.HIGH

    def test_disjoint_is_standard(self):
        puffs = classify_confidence([puff(0, 1)], [touch(2, 3)])
        assert puffs[0].confidence is Confidence.STANDARD

    @given(st.permutations(range(5)))
    def test_invariant_under_touch_reordering(self, order):
        touches = [touch(i * 10, i * 10 + 1) for i in range(5)]
        puffs = [puff(8, 12), puff(100, 101)]
        baseline = classify_confidence(puffs, touches)
        shuffled = classify_confidence(puffs, [touches[i] for i in order])
        assert baseline == shuffled


class TestBucketByDay:
    def test_golden_single_bucket(self, golden_lines):
        events, _ = decode_stream(golden_lines)
        episodes, _ = pair_episodes(events)
        buckets = bucket_by_day(episodes, ZONE_M6)
        assert list(buckets) == [dt.date(2024, 2, 12)]
        assert len(buckets[dt.date(2024, 2, 12)]) == 2

    def test_midnight_span_assigned_to_start_date(self):
        late = puff(86399.5, 86401.2)  # 23:59:59.5 UTC -> 00:00:01.2 next day
        buckets = bucket_by_day([late], UTC)
        assert list(buckets) == [dt.date(1970, 1, 1)]

    def test_empty(self):
        assert bucket_by_day([], UTC) == {}


class TestPTMetrics:
    def test_thirty_second_gap(self):
        episodes = [puff(0, 2), puff(32, 34)]
        metrics = compute_pt_metrics(bucket_by_day(episodes, UTC))
        assert metrics[0].puff_count == 2
        assert metrics[0].inter_puff_intervals_s == [pytest.approx(30.0, abs=1e-4)]

    def test_single_puff_has_no_intervals(self):
        metrics = compute_pt_metrics(bucket_by_day([puff(0, 2)], UTC))
        assert metrics[0].inter_puff_intervals_s == []

    def test_totals_and_touch_counts(self):
        episodes = [puff(0, 2), puff(40, 43), touch(0, 1), touch(50, 52)]
        (m,) = compute_pt_metrics(bucket_by_day(episodes, UTC))
        assert m.puff_count == 2
        assert m.total_puff_duration_s == pytest.approx(5.0, abs=1e-4)
        assert m.touch_count == 2
        assert m.total_touch_duration_s == pytest.approx(3.0, abs=1e-4)

    def test_interval_count_invariant(self):
        episodes = [puff(i * 60, i * 60 + 2) for i in range(5)]
        (m,) = compute_pt_metrics(bucket_by_day(episodes, UTC))
        assert len(m.inter_puff_intervals_s) == m.puff_count - 1


def hms(text: str) -> float:
    h, m, s = text.split(":")
    return int(h) * 3600 + int(m) * 60 + float(s)


MIDNIGHT_SESSION_REF = [("01:37:02.13", "01:37:04.50"), ("01:40:31.96", "01:40:35.13"),
                       ("01:44:37.26", "01:44:41.60")]
MIDNIGHT_SESSION_DEV = [("01:37:01.18", "01:37:03.37"), ("01:40:30.61", "01:40:34.17"),
                       ("01:44:36.98", "01:44:40.36")]
# The reference clock displayed 12-hour times in the evening; normalized to 24 h.
EVENING_SESSION_REF = [("21:04:31.45", "21:04:33.92"), ("21:17:01.90", "21:17:04.99"),
                      ("21:20:45.24", "21:20:49.48")]
EVENING_SESSION_DEV = [("21:04:25.17", "21:04:27.33"), ("21:16:55.26", "21:16:58.41"),
                      ("21:20:38.47", "21:20:42.61")]


def drift_pairs(rows):
    return [(hms(on), hms(off)) for on, off in rows]


class TestComputeDrift:
    def test_identical_inputs_all_zero(self):
        pairs = drift_pairs(MIDNIGHT_SESSION_REF)
        report = compute_drift(pairs, pairs)
        assert report.offsets_s == [0.0] * 6
        assert report.approx_time_diff_s == 0.0

    def test_midnight_session(self):
        report = compute_drift(
            drift_pairs(MIDNIGHT_SESSION_REF), drift_pairs(MIDNIGHT_SESSION_DEV), "midnight"
        )
        assert report.approx_time_diff_s == pytest.approx(1.045, abs=1e-9)
        assert report.display_offset() == "1.0s"
        assert min(report.offsets_s) <= report.approx_time_diff_s <= max(report.offsets_s)

    def test_evening_session(self):
        report = compute_drift(
            drift_pairs(EVENING_SESSION_REF), drift_pairs(EVENING_SESSION_DEV), "evening"
        )
        assert report.approx_time_diff_s == pytest.approx(6.615, abs=1e-9)
        assert abs(report.approx_time_diff_s - 7.0) <= 0.5

    def test_first_pair_offset(self):
        report = compute_drift(drift_pairs(MIDNIGHT_SESSION_REF[:1]),
                               drift_pairs(MIDNIGHT_SESSION_DEV[:1]))
        assert report.offsets_s[0] == pytest.approx(0.95, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            compute_drift([(0.0, 1.0)], [])


class TestExportEpisodeTable:
    def test_empty_is_header_only(self):
        assert export_episode_table([], ZONE_M6) == "Event,Date,Range,Duration(ms)\n"

    def test_golden_rows(self, golden_lines):
        events, _ = decode_stream(golden_lines)
        episodes, _ = pair_episodes(events)
        text = export_episode_table(episodes, ZONE_M6)
        lines = text.strip().splitlines()
        assert lines[0] == "Event,Date,Range,Duration(ms)"
        assert lines[1] == "PUFF,2024-02-12,10:09:44.55 to 10:09:45.67,1115.66"
        assert lines[2] == "TOUCH,2024-02-12,10:09:50.02 to 10:09:52.03,2012.41"


class TestAnalyzeEvents:
    def test_golden_end_to_end(self, golden_lines):
        events, _ = decode_stream(golden_lines)
        result = analyze_events(events, FilterConfig(), ZONE_M6)
        assert result.raw_puff_count == 1
        assert result.raw_touch_count == 1
        assert len(result.puffs) == 1
        # the sample day's touch starts after the puff ends, so no overlap.
        assert result.puffs[0].episode.confidence is Confidence.STANDARD
        assert (result.puffs[0].temp_on, result.puffs[0].temp_off) == (505, 260)
        (metrics,) = result.metrics()
        assert metrics.puff_count == 1 and metrics.touch_count == 1

    def test_display_filter_applied(self):
        events = []
        for i, duration in enumerate((0.5, 2.0)):
            base = i * 100
            events.append(timed(EventKind.PUFF_ON, base))
            events.append(
                DecodedEvent(EventKind.PUFF_OFF,
                             instant=DeviceInstant.from_unix(base + duration))
            )
        config = FilterConfig(display_min_puff_s=1.0)
        result = analyze_events(events, config, UTC)
        assert result.raw_puff_count == 2
        assert len(result.puffs) == 1
