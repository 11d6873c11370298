from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import make_compressed
from trajectory_engine.errors import DataFormatError, EmptyTrajectoryError, MalformedInputError
from trajectory_engine.geometry import Rect
from trajectory_engine.io_model import (CompressedDataset, CompressedTrajectory, RawTrajectory, check_unique_ids,
                                        dataset_bounds, read_compressed, read_raw_csv, write_compressed,
                                        write_raw_csv)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return path


def test_read_raw_csv_groups_by_first_appearance(tmp_path):
    path = write(tmp_path, 'raw.csv', 'id,x,y,t\nb,0,0,0\na,1,1,0\nb,2,0,1\na,3,3,5\n')
    trajectories = read_raw_csv(path)
    assert [t.id for t in trajectories] == ['b', 'a']
    assert trajectories[0].xy.tolist() == [[0.0, 0.0], [2.0, 0.0]]
    assert trajectories[1].t.tolist() == [0.0, 5.0]


def test_read_raw_csv_without_header(tmp_path):
    path = write(tmp_path, 'raw.csv', 'a,1,2,0\na,3,4,1\n')
    assert len(read_raw_csv(path)[0]) == 2


def test_read_raw_csv_empty_file(tmp_path):
    assert read_raw_csv(write(tmp_path, 'raw.csv', '')) == []
    assert read_raw_csv(write(tmp_path, 'head.csv', 'id,x,y,t\n')) == []


def test_read_raw_csv_rejects_unordered_timestamps(tmp_path):
    path = write(tmp_path, 'raw.csv', 'id,x,y,t\na,0,0,0\na,1,0,2\na,2,0,1\n')
    with pytest.raises(MalformedInputError, match="'a'.*index 2"):
        read_raw_csv(path)


def test_read_raw_csv_rejects_bad_rows(tmp_path):
    path = write(tmp_path, 'cols.csv', 'id,x,y,t\na,0,0,0\na,1,0\n')
    with pytest.raises(DataFormatError) as err:
        read_raw_csv(path)
    assert f'{path}:3' in err.value.detail
    assert err.value.exit_code == 2

    with pytest.raises(DataFormatError):
        read_raw_csv(write(tmp_path, 'text.csv', 'id,x,y,t\na,0,zero,0\n'))

    with pytest.raises(MalformedInputError):
        read_raw_csv(write(tmp_path, 'nan.csv', 'id,x,y,t\na,0,nan,0\n'))


def test_read_raw_csv_rejects_invalid_utf8(tmp_path):
    path = tmp_path / 'bytes.csv'
    path.write_bytes(b'id,x,y,t\na,0,0,0\n\xff\xfe,0,0,1\n')
    with pytest.raises(DataFormatError) as err:
        read_raw_csv(path)
    assert f'{path}:3' in err.value.detail
    assert 'UTF-8' in err.value.detail
    assert err.value.exit_code == 2


def test_raw_csv_keeps_every_digit(tmp_path):
    raw = RawTrajectory(id='p', xy=[[0.1, 1 / 3], [2.0e-17, 123456.789]], t=[0.0, 0.25])
    path = tmp_path / 'raw.csv'
    write_raw_csv(path, [raw])
    back = read_raw_csv(path)[0]
    assert np.array_equal(back.xy, raw.xy)
    assert np.array_equal(back.t, raw.t)


def test_compressed_invariants():
    c = make_compressed('c', [(0, 0), (3, 0), (4, 1), (9, 9)], [2, 0, 1])
    assert c.raw_indices.tolist() == [0, 3, 4, 6]
    assert c.raw_point_count == 7
    assert c.segment_count == 3
    assert c.query_segments[:, 4].tolist() == [2.0, 0.0, 1.0]

    with pytest.raises(MalformedInputError):
        make_compressed('c', [(0, 0), (1, 0)], [1, 1])
    with pytest.raises(MalformedInputError):
        make_compressed('c', [(0, 0), (1, 0)], [-1])
    with pytest.raises(EmptyTrajectoryError):
        CompressedTrajectory(id='c', xy=[], t=[], discarded=[], epsilon=1.0)
    with pytest.raises(MalformedInputError):
        CompressedTrajectory(id='c', xy=[(0, 0), (1, 0)], t=[1, 1], discarded=[0], epsilon=1.0)


def test_single_point_has_one_degenerate_query_segment():
    c = make_compressed('dot', [(2, 3)], [])
    assert c.segment_count == 0
    assert c.query_segments.tolist() == [[2.0, 3.0, 2.0, 3.0, 0.0]]


def test_bounds_and_ids():
    a = make_compressed('a', [(0, 0), (5, 1)], [0])
    b = make_compressed('b', [(-2, 4), (1, 7)], [3])
    assert dataset_bounds([a, b]) == Rect(-2.0, 0.0, 5.0, 7.0)
    assert dataset_bounds([]) is None
    assert CompressedDataset.build([a, b], epsilon=1.0, sigma=0.0).bounds() == Rect(-2.0, 0.0, 5.0, 7.0)
    with pytest.raises(MalformedInputError, match="'a'"):
        check_unique_ids([a, b, a])


def test_compressed_file_round_trip(tmp_path, small_dataset):
    path = tmp_path / 'c.jsonl'
    write_compressed(path, small_dataset)
    back = read_compressed(path)
    assert back.header.checksum
    assert back.header.model_copy(update={'checksum': ''}) == small_dataset.header
    for a, b in zip(small_dataset.trajectories, back.trajectories):
        assert a.id == b.id
        assert np.array_equal(a.xy, b.xy)
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.discarded, b.discarded)
        assert b.epsilon == small_dataset.epsilon
    assert back.checksum == small_dataset.checksum


def test_compressed_file_errors(tmp_path, small_dataset):
    path = tmp_path / 'c.jsonl'
    write_compressed(path, small_dataset)
    lines = path.read_text(encoding='utf-8').splitlines(keepends=True)

    short = write(tmp_path, 'short.jsonl', ''.join(lines[:-1]))
    with pytest.raises(DataFormatError, match='truncated'):
        read_compressed(short)

    cut = write(tmp_path, 'cut.jsonl', ''.join(lines)[:-5])
    with pytest.raises(DataFormatError):
        read_compressed(cut)

    record = json.loads(lines[1])
    record['points'][0][0] += 1.0
    tampered = lines[:1] + [json.dumps(record, separators=(',', ':')) + '\n'] + lines[2:]
    with pytest.raises(DataFormatError, match='checksum'):
        read_compressed(write(tmp_path, 'tampered.jsonl', ''.join(tampered)))

    header = json.loads(lines[0])
    header['version'] = 9
    newer = [json.dumps(header) + '\n'] + lines[1:]
    with pytest.raises(DataFormatError, match='version 9'):
        read_compressed(write(tmp_path, 'newer.jsonl', ''.join(newer)))

    with pytest.raises(DataFormatError, match='header'):
        read_compressed(write(tmp_path, 'empty.jsonl', ''))

    with pytest.raises(DataFormatError) as err:
        read_compressed(write(tmp_path, 'junk.jsonl', lines[0] + '{oops\n'))
    assert err.value.line == 2


def _replace_record(lines, index, record):
    return ''.join(lines[:index] + [json.dumps(record, separators=(',', ':')) + '\n'] + lines[index + 1:])


@pytest.mark.parametrize('breakage, message', [
    ('extra_count', 'discarded counts'),
    ('repeated_time', 'index 1 does not increase'),
])
def test_compressed_record_breaking_an_invariant_is_a_format_error(tmp_path, small_dataset, breakage, message):
    path = tmp_path / 'c.jsonl'
    write_compressed(path, small_dataset)
    lines = path.read_text(encoding='utf-8').splitlines(keepends=True)
    record = json.loads(lines[2])
    if breakage == 'extra_count':
        record['discarded'].append(0)
    else:
        record['points'][1][2] = record['points'][0][2]
    bad = write(tmp_path, 'bad.jsonl', _replace_record(lines, 2, record))
    with pytest.raises(DataFormatError, match=message) as err:
        read_compressed(bad)
    assert f'{bad}:3' in err.value.detail
    assert err.value.exit_code == 2


def test_compressed_duplicate_id_names_its_line(tmp_path, small_dataset):
    path = tmp_path / 'c.jsonl'
    write_compressed(path, small_dataset)
    lines = path.read_text(encoding='utf-8').splitlines(keepends=True)
    dup = write(tmp_path, 'dup.jsonl', ''.join(lines[:2] + [lines[1]] + lines[3:]))
    with pytest.raises(DataFormatError, match='duplicate') as err:
        read_compressed(dup)
    assert err.value.line == 3


def test_compressed_invalid_utf8_names_its_line(tmp_path, small_dataset):
    path = tmp_path / 'c.jsonl'
    write_compressed(path, small_dataset)
    data = path.read_bytes()
    start = data.index(b'\n') + 1
    bad = tmp_path / 'bytes.jsonl'
    bad.write_bytes(data[:start] + b'\xff' + data[start + 1:])
    with pytest.raises(DataFormatError, match='UTF-8') as err:
        read_compressed(bad)
    assert err.value.line == 2
