"""Wire codec round-trips, corruption rejection, impaired channel behavior."""

import pytest

from skywatch.link import (
    BadCrc,
    BadMagic,
    BadVersion,
    Channel,
    CommandFrame,
    FieldOutOfRange,
    ShortBuffer,
    channel_poll,
    channel_send,
    crc16,
    decode_command,
    encode_command,
)

# Pinned against an independent bit-by-bit CRC-16/CCITT-FALSE reference.
CRC_CHECK_VALUE = 0x29B1
EXAMPLE_BODY = bytes.fromhex("A55A01010200F40106FF0000")
EXAMPLE_CRC_LE = bytes.fromhex("FA83")


class TestCrc:
    def test_published_check_value(self):
        assert crc16(b"123456789") == CRC_CHECK_VALUE

    def test_empty_input_is_init(self):
        assert crc16(b"") == 0xFFFF

    def test_example_body(self):
        assert crc16(EXAMPLE_BODY) == int.from_bytes(EXAMPLE_CRC_LE, "little")


class TestEncode:
    def test_example_layout(self):
        raw = encode_command(CommandFrame(robot_id=1, seq=2, v_mm_s=500, omega_mrad_s=-250))
        assert raw[:12] == EXAMPLE_BODY
        assert raw[12:] == EXAMPLE_CRC_LE

    def test_always_14_bytes(self):
        import random

        rnd = random.Random(9)
        for _ in range(200):
            f = CommandFrame(
                rnd.randrange(32),
                rnd.randrange(65536),
                rnd.randrange(-32768, 32768),
                rnd.randrange(-32768, 32768),
                rnd.choice([0, 1]),
            )
            assert len(encode_command(f)) == 14

    def test_estop_flag_bit(self):
        raw = encode_command(CommandFrame(0, 0, 0, 0, flags=1))
        assert raw[10] == 0x01

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(robot_id=32, seq=0, v_mm_s=0, omega_mrad_s=0),
            dict(robot_id=-1, seq=0, v_mm_s=0, omega_mrad_s=0),
            dict(robot_id=0, seq=70000, v_mm_s=0, omega_mrad_s=0),
            dict(robot_id=0, seq=0, v_mm_s=40000, omega_mrad_s=0),
            dict(robot_id=0, seq=0, v_mm_s=0, omega_mrad_s=-40000),
            dict(robot_id=0, seq=0, v_mm_s=0, omega_mrad_s=0, flags=2),
        ],
    )
    def test_field_out_of_range(self, kwargs):
        with pytest.raises(FieldOutOfRange):
            CommandFrame(**kwargs)


class TestDecode:
    def test_round_trip_random(self):
        import random

        rnd = random.Random(31)
        for _ in range(2000):
            f = CommandFrame(
                rnd.randrange(32),
                rnd.randrange(65536),
                rnd.randrange(-32768, 32768),
                rnd.randrange(-32768, 32768),
                rnd.choice([0, 1]),
            )
            raw = encode_command(f)
            assert decode_command(raw) == f
            assert encode_command(decode_command(raw)) == raw

    def test_short_buffer(self):
        raw = encode_command(CommandFrame(1, 2, 3, 4))
        with pytest.raises(ShortBuffer):
            decode_command(raw[:13])
        with pytest.raises(ShortBuffer):
            decode_command(b"")

    def test_bad_magic(self):
        raw = bytearray(encode_command(CommandFrame(1, 2, 3, 4)))
        raw[0] = 0x00
        with pytest.raises(BadMagic):
            decode_command(bytes(raw))

    def test_bad_version(self):
        raw = bytearray(encode_command(CommandFrame(1, 2, 3, 4)))
        raw[2] = 0x02
        with pytest.raises(BadVersion):
            decode_command(bytes(raw))

    def test_magic_checked_before_version_and_crc(self):
        raw = bytearray(encode_command(CommandFrame(1, 2, 3, 4)))
        raw[0] = 0x00
        raw[2] = 0x07
        with pytest.raises(BadMagic):
            decode_command(bytes(raw))

    def test_payload_bit_flips_fail_crc(self):
        raw = encode_command(CommandFrame(5, 1000, -1200, 800, 1))
        for byte_idx in range(3, 12):
            for bit in range(8):
                corrupted = bytearray(raw)
                corrupted[byte_idx] ^= 1 << bit
                with pytest.raises(BadCrc):
                    decode_command(bytes(corrupted))

    def test_crc_byte_corruption_detected(self):
        raw = bytearray(encode_command(CommandFrame(3, 9, 10, -10)))
        raw[13] ^= 0xFF
        with pytest.raises(BadCrc):
            decode_command(bytes(raw))

    def test_any_single_byte_corruption_rejected(self):
        raw = encode_command(CommandFrame(7, 77, 777, -777))
        for idx in range(14):
            corrupted = bytearray(raw)
            corrupted[idx] ^= 0xA7
            with pytest.raises((BadMagic, BadVersion, BadCrc)):
                decode_command(bytes(corrupted))

    def test_trailing_bytes_ignored(self):
        f = CommandFrame(2, 4, 6, 8)
        assert decode_command(encode_command(f) + b"xyz") == f


class TestChannel:
    def test_base_latency(self):
        ch = Channel(base_latency_s=0.1, jitter_s=0.0, drop_prob=0.0, seed=1)
        ch.send(b"m", 1.0)
        assert ch.poll(1.05) == []
        out = ch.poll(1.1)
        assert out == [(pytest.approx(1.1), b"m")]

    def test_poll_removes(self):
        ch = Channel(0.0, 0.0, 0.0, seed=1)
        ch.send(b"a", 0.0)
        assert len(ch.poll(0.0)) == 1
        assert ch.poll(0.0) == []

    def test_full_drop(self):
        ch = Channel(0.0, 0.0, 1.0, seed=2)
        for k in range(20):
            ch.send(b"x", float(k))
        assert ch.poll(100.0) == []
        assert ch.dropped_count == 20

    def test_same_seed_same_schedule(self):
        def run():
            ch = Channel(0.05, 0.2, 0.3, seed=77)
            times = []
            for k in range(200):
                ch.send(bytes([k % 256]), 0.1 * k)
            for k in range(200):
                times.extend(t for t, _ in ch.poll(0.1 * k + 5.0))
            return times, ch.dropped_count

        a = run()
        b = run()
        assert a == b

    def test_fifo_under_jitter(self):
        ch = Channel(0.01, 1.0, 0.0, seed=5)
        for k in range(100):
            ch.send(bytes([k]), 0.01 * k)
        out = ch.poll(1000.0)
        assert [p[0] for _, p in out] == list(range(100))
        times = [t for t, _ in out]
        assert times == sorted(times)

    def test_tie_breaks_by_send_order(self):
        ch = Channel(0.5, 0.0, 0.0, seed=1)
        ch.send(b"a", 1.0)
        ch.send(b"b", 1.0)
        out = ch.poll(2.0)
        assert [p for _, p in out] == [b"a", b"b"]

    def test_two_due_in_order(self):
        ch = Channel(0.1, 0.0, 0.0, seed=1)
        ch.send(b"a", 0.0)
        ch.send(b"b", 0.2)
        assert [p for _, p in ch.poll(1.0)] == [b"a", b"b"]

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            Channel(0.1, 0.0, 1.5, seed=0)
        with pytest.raises(ValueError):
            Channel(-0.1, 0.0, 0.0, seed=0)

    def test_functional_wrappers(self):
        ch = Channel(0.0, 0.0, 0.0, seed=3)
        channel_send(ch, b"w", 0.0)
        assert channel_poll(ch, 0.0) == [b"w"]
