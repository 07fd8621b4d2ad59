import pytest
from hypothesis import given, strategies as st

from deskchain.codec import CodecError, Reader, Writer, check_amount


def test_u64_round_trip():
    data = Writer().u64(0).u64(2**64 - 1).u64(12345).done()
    r = Reader(data)
    assert (r.u64(), r.u64(), r.u64()) == (0, 2**64 - 1, 12345)
    r.expect_end()


def test_out_of_range_rejected():
    with pytest.raises(CodecError):
        Writer().u64(-1)
    with pytest.raises(CodecError):
        Writer().u64(2**64)
    with pytest.raises(CodecError):
        Writer().i64(2**63)
    with pytest.raises(CodecError):
        Writer().u8(256)


def test_fixed_length_enforced():
    with pytest.raises(CodecError):
        Writer().fixed(b"abc", 4)


def test_trailing_bytes_detected():
    r = Reader(Writer().u32(5).done() + b"x")
    r.u32()
    with pytest.raises(CodecError):
        r.expect_end()


def test_truncated_input_detected():
    r = Reader(b"\x00\x01")
    with pytest.raises(CodecError):
        r.u64()


def test_check_amount():
    assert check_amount(0) == 0
    assert check_amount(2**64 - 1) == 2**64 - 1
    with pytest.raises(CodecError):
        check_amount(-1)
    with pytest.raises(CodecError):
        check_amount(2**64)
    with pytest.raises(CodecError):
        check_amount(True)


@given(st.integers(min_value=-(2**63), max_value=2**63 - 1))
def test_i64_round_trip(value):
    assert Reader(Writer().i64(value).done()).i64() == value


@given(st.binary(max_size=64), st.text(max_size=32))
def test_blob_text_round_trip(blob, text):
    data = Writer().blob(blob).text(text).done()
    r = Reader(data)
    assert r.blob() == blob
    assert r.text() == text
    r.expect_end()


@given(st.booleans())
def test_flag_round_trip(flag):
    assert Reader(Writer().flag(flag).done()).flag() == flag


def test_flag_rejects_other_bytes():
    with pytest.raises(CodecError):
        Reader(b"\x02").flag()


def test_state_records_round_trip():
    # every committed record type: encode -> decode -> encode byte-identical
    from deskchain.channels import Channel, SignedState
    from deskchain.oracles import OracleQuestion, Vote
    from deskchain.rewards import AZ, RewardPoolState

    candidate = SignedState(b"\x01" * 32, 4, 30, 70, b"\x02" * 32, (9, -9), b"\x0c" * 64, b"\x0d" * 64)
    records = [
        Channel(b"\x01" * 32, b"\x03" * 32, b"\x04" * 32, 60, 40, "closing", 17, candidate, None),
        Channel(b"\x05" * 32, b"\x03" * 32, b"\x04" * 32, 60, 40, "closed", 0, None, (55, 45)),
        OracleQuestion(
            b"\x06" * 32, b"\x07" * 32, b"\x08" * 32, 3, 9, 12, "contested",
            True, 5, b"\x09" * 32, 12, 15, (Vote(b"\x0a" * 32, False, 1000),), False,
        ),
        AZ(b"\x0b" * 32, b"\x0c" * 32, frozenset({b"\x0c" * 32}), frozenset({b"\x0c" * 32, b"\x0d" * 32}), frozenset(), 77),
        RewardPoolState(5, 6, 7, 8, 9),
    ]
    for record in records:
        encoded = record.encode()
        decoded = type(record).read(Reader(encoded))
        assert decoded == record
        assert decoded.encode() == encoded
