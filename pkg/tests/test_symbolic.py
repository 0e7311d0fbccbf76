import numpy as np
import pytest

from errors import (
    BadHeader,
    EmptyList,
    ParseError,
    RangeError,
    TruncatedTrack,
    UnsupportedDivision,
    UnsupportedFormat,
    ZeroProfile,
)
from symbolic import (
    NoteEvent,
    NoteList,
    PitchClassProfile,
    PitchClassSet,
    chord_degrees,
    decode_vlq,
    encode_vlq,
    estimate_key,
    interval_sequence,
    major_scale,
    melody_distance,
    minor_scale,
    parse_note_csv,
    parse_smf,
    pc_transition_matrix,
    pitch_class_histogram,
    set_partition,
    transition_profile,
)

C4_HALF_SECOND = bytes([0x00, 0x90, 60, 64, 0x83, 0x60, 0x80, 60, 0])


def melody(pitches, durations=None):
    durations = durations or [0.5] * len(pitches)
    return NoteList([NoteEvent(onset=i * 0.5, duration=d, pitch=p) for i, (p, d) in enumerate(zip(pitches, durations))])


# ----------------------------- VLQ -----------------------------

@pytest.mark.parametrize("value, encoded", [
    (0x00, b"\x00"),
    (0x40, b"\x40"),
    (0x7F, b"\x7f"),
    (0x80, b"\x81\x00"),
    (0x2000, b"\xc0\x00"),
    (0x1FFFFF, b"\xff\xff\x7f"),
    (0x0FFFFFFF, b"\xff\xff\xff\x7f"),
])
def test_vlq_reference_encodings(value, encoded):
    assert encode_vlq(value) == encoded
    assert decode_vlq(encoded) == (value, len(encoded))


def test_vlq_sampled_identity(rng):
    for value in rng.integers(0, 2 ** 28, size=500):
        assert decode_vlq(encode_vlq(int(value)))[0] == value


def test_vlq_limits():
    with pytest.raises(RangeError):
        decode_vlq(b"\x81\x80\x80\x80\x00")
    with pytest.raises(RangeError):
        encode_vlq(2 ** 28)
    with pytest.raises(TruncatedTrack):
        decode_vlq(b"\x81")


# ----------------------------- SMF -----------------------------

def test_480_ticks_at_default_tempo_is_half_a_second(make_smf, make_track):
    notes = parse_smf(make_smf([make_track(C4_HALF_SECOND)]))
    assert len(notes) == 1
    note = notes.notes[0]
    assert (note.onset, note.duration, note.pitch, note.velocity) == (0.0, 0.5, 60, 64)
    assert notes.ticks_per_quarter == 480
    assert notes.tempo_map == [(0, 500000)]


def test_running_status_and_zero_velocity_note_off(make_smf, make_track):
    events = bytes([
        0x00, 0x90, 60, 64,
        0x00, 64, 70,          # running status note-on E4
        0x83, 0x60, 60, 0,     # velocity 0 closes C4
        0x00, 64, 0,           # and E4
    ])
    notes = parse_smf(make_smf([make_track(events)]))
    assert [(n.pitch, n.velocity, n.duration) for n in notes.notes] == [(60, 64, 0.5), (64, 70, 0.5)]


def test_tempo_map_from_conductor_track(make_smf, make_track):
    conductor = make_track(bytes([0x00, 0xFF, 0x51, 0x03, 0x03, 0xD0, 0x90]))  # 250000 us per quarter
    notes = parse_smf(make_smf([conductor, make_track(C4_HALF_SECOND)], fmt=1))
    assert notes.notes[0].duration == 0.25


def test_tempo_change_mid_note(make_smf, make_track):
    # quarter at 500000 us, then 250000 us for the second quarter
    events = bytes([0x00, 0x90, 60, 64, 0x83, 0x60, 0xFF, 0x51, 0x03, 0x03, 0xD0, 0x90, 0x83, 0x60, 0x80, 60, 0])
    notes = parse_smf(make_smf([make_track(events)]))
    assert notes.notes[0].duration == pytest.approx(0.75, abs=1e-12)


def test_unmatched_note_on_closes_at_end_of_track(make_smf, make_track):
    events = bytes([0x00, 0x90, 62, 80, 0x87, 0x40, 0xFF, 0x2F, 0x00])
    notes = parse_smf(make_smf([make_track(events, end_of_track=False)]))
    assert notes.notes[0].duration == 1.0


def test_dangling_note_off_is_counted(make_smf, make_track):
    events = bytes([0x00, 0x80, 61, 0]) + C4_HALF_SECOND
    notes = parse_smf(make_smf([make_track(events)]))
    assert notes.dangling_note_offs == 1
    assert len(notes) == 1


def test_tracks_are_merged_in_sorted_order(make_smf, make_track):
    late = make_track(bytes([0x83, 0x60, 0x90, 48, 64, 0x83, 0x60, 0x80, 48, 0]))
    notes = parse_smf(make_smf([late, make_track(C4_HALF_SECOND)], fmt=1))
    assert [(n.onset, n.pitch) for n in notes.notes] == [(0.0, 60), (0.5, 48)]


def test_header_errors(make_smf, make_track):
    track = make_track(C4_HALF_SECOND)
    with pytest.raises(BadHeader):
        parse_smf(b"MTrk" + bytes(20))
    with pytest.raises(UnsupportedFormat):
        parse_smf(make_smf([track], fmt=2))
    with pytest.raises(UnsupportedDivision):
        parse_smf(make_smf([track], division=0xE728))
    with pytest.raises(TruncatedTrack):
        parse_smf(make_smf([track])[:-3])


# ----------------------------- Note CSV -----------------------------

def test_note_csv():
    notes = parse_note_csv("onset,duration,pitch,velocity\n0.5,0.5,64,70\n0,1,60,64\n")
    assert [(n.onset, n.pitch) for n in notes.notes] == [(0.0, 60), (0.5, 64)]


def test_note_csv_optional_channel():
    notes = parse_note_csv("onset,duration,pitch,velocity,channel\n0,1,60,64,9\n")
    assert notes.notes[0].channel == 9


def test_note_csv_reports_line_numbers():
    with pytest.raises(ParseError) as excinfo:
        parse_note_csv("onset,duration,pitch,velocity\n0,1,60,64\n0,x,62,64\n")
    assert excinfo.value.line == 3
    with pytest.raises(ParseError) as excinfo:
        parse_note_csv("onset,duration,pitch,velocity\n0,1,60,64\n0,1,62,64,3,9\n")
    assert excinfo.value.line == 3


def test_note_csv_range_errors():
    with pytest.raises(RangeError) as excinfo:
        parse_note_csv("onset,duration,pitch,velocity\n0,1,200,64\n")
    assert excinfo.value.field == "pitch"
    with pytest.raises(RangeError) as excinfo:
        parse_note_csv("onset,duration,pitch,velocity\n0,1,60,0\n")
    assert excinfo.value.field == "velocity"


@pytest.mark.parametrize("row, field", [
    ("0,1,inf,64", "pitch"),
    ("inf,1,60,64", "onset"),
    ("0,-inf,60,64", "duration"),
    ("0,1,60,inf", "velocity"),
])
def test_note_csv_rejects_non_finite_fields(row, field):
    with pytest.raises(RangeError) as excinfo:
        parse_note_csv(f"onset,duration,pitch,velocity\n{row}\n")
    assert excinfo.value.field == field


def test_note_event_rejects_non_finite_times():
    with pytest.raises(RangeError):
        NoteEvent(onset=float("inf"), duration=1.0, pitch=60)
    with pytest.raises(RangeError):
        NoteEvent(onset=0.0, duration=float("nan"), pitch=60)


# ----------------------------- Histograms / transitions -----------------------------

def test_triad_histogram():
    profile = pitch_class_histogram(melody([60, 64, 67]))
    expected = np.zeros(12)
    expected[[0, 4, 7]] = 1.0
    np.testing.assert_array_equal(profile.weights, expected)
    assert profile.normalization == "raw"


def test_empty_histogram():
    assert np.all(pitch_class_histogram(NoteList([])).weights == 0)


def test_duration_weighting_sums_octaves():
    profile = pitch_class_histogram(melody([60, 72], durations=[2.0, 3.0]), weighting="duration")
    assert profile.weights[0] == 5.0


def test_histogram_total_equals_note_count(rng):
    notes = melody(list(rng.integers(21, 109, size=40)))
    assert pitch_class_histogram(notes).weights.sum() == 40


def test_normalized_profile():
    profile = PitchClassProfile(weights=[2, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0]).normalized()
    assert profile.normalization == "probability"
    assert profile.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(PitchClassProfile(weights=np.zeros(12)).normalized().weights == 0)


def test_transition_matrix_small_cases():
    matrix = pc_transition_matrix(melody([60, 67, 72]))
    expected = np.zeros((12, 12), dtype=int)
    expected[0, 7] = expected[7, 0] = 1
    np.testing.assert_array_equal(matrix, expected)
    assert not pc_transition_matrix(melody([60])).any()


def test_transition_matrix_matches_pair_count(rng):
    pitches = [int(p) for p in rng.integers(40, 80, size=30)]
    matrix = pc_transition_matrix(melody(pitches))
    oracle = np.zeros((12, 12), dtype=int)
    for a, b in zip(pitches, pitches[1:]):
        oracle[a % 12][b % 12] += 1
    np.testing.assert_array_equal(matrix, oracle)
    assert matrix.sum() == len(pitches) - 1


def test_simultaneous_notes_ordered_by_pitch():
    notes = NoteList([NoteEvent(0.0, 1.0, 67), NoteEvent(0.0, 1.0, 60), NoteEvent(1.0, 1.0, 64)])
    matrix = pc_transition_matrix(notes)
    assert matrix[0, 7] == 1 and matrix[7, 4] == 1


def test_transition_profile_rows():
    profile = transition_profile(pc_transition_matrix(melody([60, 67, 60, 64])))
    assert profile[0, 7] == 0.5 and profile[0, 4] == 0.5
    assert profile[7, 0] == 1.0
    assert not profile[4].any()


# ----------------------------- Intervals -----------------------------

def test_interval_sequence():
    assert interval_sequence(melody([60, 64, 67])) == [4, 3]
    with pytest.raises(EmptyList):
        interval_sequence(NoteList([]))


def test_intervals_ignore_octave_and_tritone_transposition():
    reference = [60, 62, 64, 65, 67, 65, 64]
    octave = [p + 12 for p in reference]
    tritone = [p + 6 for p in reference]
    sequences = {tuple(interval_sequence(melody(m))) for m in (reference, octave, tritone)}
    assert len(sequences) == 1
    assert melody_distance(melody(reference), melody(tritone), "interval") == 0.0
    assert melody_distance(melody(reference), melody(tritone), "pitch") == pytest.approx(6 * np.sqrt(7))


def test_chord_degrees():
    assert chord_degrees(melody([62, 65, 69, 72]), root=2) == [0, 3, 7, 10]


# ----------------------------- Sets -----------------------------

def test_major_minor_venn():
    parts = set_partition(major_scale(0), minor_scale(0))
    assert parts.only_a.sorted() == [4, 9, 11]
    assert parts.both.sorted() == [0, 2, 5, 7]
    assert parts.only_b.sorted() == [3, 8, 10]


def test_partition_of_equal_sets():
    a = PitchClassSet(frozenset({0, 4, 7}))
    parts = set_partition(a, a)
    assert parts.only_a.sorted() == [] and parts.only_b.sorted() == []
    assert parts.both == a


def test_partition_pieces_are_disjoint_and_cover_union(rng):
    for _ in range(20):
        a = PitchClassSet(frozenset(int(x) for x in rng.choice(12, size=rng.integers(0, 12), replace=False)))
        b = PitchClassSet(frozenset(int(x) for x in rng.choice(12, size=rng.integers(0, 12), replace=False)))
        parts = set_partition(a, b)
        assert not parts.only_a.members & parts.both.members
        assert not parts.only_b.members & parts.both.members
        assert parts.only_a.members | parts.both.members | parts.only_b.members == a.union(b).members


def test_complement():
    assert PitchClassSet(frozenset(range(12))).complement().sorted() == []
    assert major_scale(0).complement().sorted() == [1, 3, 6, 8, 10]
    with pytest.raises(RangeError):
        PitchClassSet(frozenset({12}))


# ----------------------------- Key -----------------------------

def test_c_major_profile():
    weights = np.zeros(12)
    weights[[0, 2, 4, 5, 7, 9, 11]] = 1.0
    key = estimate_key(PitchClassProfile(weights=weights))
    assert (key.tonic, key.mode) == (0, "major")
    assert key.score == pytest.approx(1.0)


def test_key_rotates_with_profile(rng):
    weights = rng.uniform(0.1, 1.0, 12)
    base = estimate_key(PitchClassProfile(weights=weights))
    for k in range(1, 12):
        rotated = estimate_key(PitchClassProfile(weights=np.roll(weights, k)))
        assert rotated.tonic == (base.tonic + k) % 12
        assert rotated.mode == base.mode


def test_relative_keys_tie_to_lower_tonic():
    # a pure scale matches its major key and its relative minor equally
    weights = np.zeros(12)
    weights[[0, 2, 4, 5, 7, 9, 11]] = 1.0
    key = estimate_key(PitchClassProfile(weights=np.roll(weights, 3)))
    assert (key.tonic, key.mode) == (0, "minor")
    assert key.score == pytest.approx(1.0)


def test_custom_templates():
    harmonic_minor = [1, 0, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1]
    weights = np.roll(harmonic_minor, 9).astype(float)
    templates = {"major": [1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1], "minor": harmonic_minor}
    key = estimate_key(PitchClassProfile(weights=weights), templates=templates)
    assert (key.tonic, key.mode) == (9, "minor")
    assert key.score == pytest.approx(1.0)


def test_zero_profile():
    with pytest.raises(ZeroProfile):
        estimate_key(PitchClassProfile(weights=np.zeros(12)))
