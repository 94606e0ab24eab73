"""Reader/writer for the capture container: a deliberately small MCAP subset.

Supported records: Header, Schema, Channel, Message, uncompressed Chunk,
Footer. Index and summary records are skipped on read and never written.
Chunks that declare a compression codec are rejected.

Channel layout (topics are fixed):

==================  =================================================================
topic               payload
==================  =================================================================
``/intrinsics``     JSON ``{"fx","fy","cx","cy","w","h"}``, exactly one message
``/camera/pose``    JSON ``{"ts","t":[x,y,z],"q":[w,x,y,z]}``
``/camera/depth``   binary: u32 width, u32 height, u8 format (0=float32), then
                    width*height little-endian float32 meters; log_time is the stamp
``/hands``          JSON ``{"ts","hands":[{"side","conf","px":[[u,v]*21],
                    "rel":[[x,y,z]*21]}]}``
``/imu``            JSON ``{"ts","accel":[3],"gyro":[3]}``
``/markers``        JSON ``{"ts","id","p_cam":[3]}``
==================  =================================================================

The Header record stores profile ``"stera"`` and the session id in the
library field; on read, a file whose header carries no session id falls back
to the file stem.

Output is byte-deterministic for identical input: fixed schema/channel ids,
canonical JSON (sorted keys, no whitespace), messages sorted by
(log_time, channel id, sequence).
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    MissingIntrinsicsError,
    SchemaMismatchError,
    UnsupportedCompressionError,
)
from .types import (
    CameraIntrinsics,
    DepthMap,
    HandObservation,
    ImuStream,
    MarkerSighting,
    Pose,
    SessionLog,
    Trajectory,
)

logger = logging.getLogger(__name__)

MAGIC = b"\x89MCAP0\r\n"

OP_HEADER = 0x01
OP_FOOTER = 0x02
OP_SCHEMA = 0x03
OP_CHANNEL = 0x04
OP_MESSAGE = 0x05
OP_CHUNK = 0x06

TOPIC_INTRINSICS = "/intrinsics"
TOPIC_POSE = "/camera/pose"
TOPIC_DEPTH = "/camera/depth"
TOPIC_HANDS = "/hands"
TOPIC_IMU = "/imu"
TOPIC_MARKERS = "/markers"

# (topic, schema name, message encoding); table order fixes schema/channel ids.
_CHANNEL_TABLE = (
    (TOPIC_INTRINSICS, "stera.intrinsics", "json"),
    (TOPIC_POSE, "stera.pose", "json"),
    (TOPIC_DEPTH, "stera.depth", "binary"),
    (TOPIC_HANDS, "stera.hands", "json"),
    (TOPIC_IMU, "stera.imu", "json"),
    (TOPIC_MARKERS, "stera.marker", "json"),
)
_CHANNEL_ID = {topic: i + 1 for i, (topic, _, _) in enumerate(_CHANNEL_TABLE)}

_DEPTH_FORMAT_F32 = 0


# --- low-level encoding -------------------------------------------------------

def _encode_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _encode_record(opcode: int, payload: bytes) -> bytes:
    return struct.pack("<BQ", opcode, len(payload)) + payload


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class _Cursor:
    """Bounds-checked little-endian reader over a bytes object."""

    def __init__(self, data: bytes, start: int = 0, end: int | None = None):
        self.data = data
        self.pos = start
        self.end = len(data) if end is None else end

    def remaining(self) -> int:
        return self.end - self.pos

    def take(self, n: int) -> bytes:
        if self.remaining() < n:
            raise SchemaMismatchError("truncated record")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaMismatchError("invalid UTF-8 in string field") from exc


# --- payload encoding ---------------------------------------------------------

def _intrinsics_payload(intr: CameraIntrinsics) -> bytes:
    return _json_bytes(
        {
            "fx": float(intr.fx),
            "fy": float(intr.fy),
            "cx": float(intr.cx),
            "cy": float(intr.cy),
            "w": int(intr.width),
            "h": int(intr.height),
        }
    )


def _pose_payload(ts: int, position: np.ndarray, quat: np.ndarray) -> bytes:
    return _json_bytes({"ts": int(ts), "t": position.tolist(), "q": quat.tolist()})


def _depth_payload(depth: DepthMap) -> bytes:
    head = struct.pack("<IIB", depth.width, depth.height, _DEPTH_FORMAT_F32)
    return head + depth.data.astype("<f4").tobytes()


def _hands_payload(ts: int, observations: list[HandObservation]) -> bytes:
    return _json_bytes(
        {
            "ts": int(ts),
            "hands": [
                {
                    "side": obs.side,
                    "conf": float(obs.confidence),
                    "px": obs.pixels.tolist(),
                    "rel": obs.relative_xyz.tolist(),
                }
                for obs in observations
            ],
        }
    )


def _imu_payload(ts: int, accel: np.ndarray, gyro: np.ndarray) -> bytes:
    return _json_bytes({"ts": int(ts), "accel": accel.tolist(), "gyro": gyro.tolist()})


def _marker_payload(m: MarkerSighting) -> bytes:
    return _json_bytes({"ts": int(m.ts_ns), "id": int(m.marker_id), "p_cam": m.p_cam.tolist()})


def encode_session(session: SessionLog, chunked: bool = False) -> bytes:
    """Serialize a session; deterministic byte-for-byte given equal input."""
    parts = [MAGIC]
    parts.append(
        _encode_record(OP_HEADER, _encode_string("stera") + _encode_string(session.session_id))
    )
    for i, (topic, name, encoding) in enumerate(_CHANNEL_TABLE):
        schema_id = i + 1
        parts.append(
            _encode_record(
                OP_SCHEMA,
                struct.pack("<H", schema_id)
                + _encode_string(name)
                + _encode_string(encoding)
                + struct.pack("<I", 0),
            )
        )
        parts.append(
            _encode_record(
                OP_CHANNEL,
                struct.pack("<HH", schema_id, schema_id)
                + _encode_string(topic)
                + _encode_string(encoding)
                + struct.pack("<I", 0),
            )
        )

    messages: list[tuple[int, int, bytes]] = []  # (log_time, channel_id, payload)
    messages.append((0, _CHANNEL_ID[TOPIC_INTRINSICS], _intrinsics_payload(session.intrinsics)))
    for i in range(len(session.poses)):
        ts = int(session.poses.times_ns[i])
        messages.append(
            (
                ts,
                _CHANNEL_ID[TOPIC_POSE],
                _pose_payload(ts, session.poses.positions[i], session.poses.quaternions[i]),
            )
        )
    for ts, depth in session.depths:
        messages.append((int(ts), _CHANNEL_ID[TOPIC_DEPTH], _depth_payload(depth)))
    for ts, observations in session.hands:
        messages.append((int(ts), _CHANNEL_ID[TOPIC_HANDS], _hands_payload(ts, observations)))
    for i in range(len(session.imu)):
        ts = int(session.imu.times_ns[i])
        messages.append(
            (ts, _CHANNEL_ID[TOPIC_IMU], _imu_payload(ts, session.imu.accel[i], session.imu.gyro[i]))
        )
    for m in session.markers:
        messages.append((int(m.ts_ns), _CHANNEL_ID[TOPIC_MARKERS], _marker_payload(m)))

    sequences = {cid: 0 for cid in _CHANNEL_ID.values()}
    encoded = []
    for log_time, channel_id, payload in sorted(messages, key=lambda m: (m[0], m[1])):
        seq = sequences[channel_id]
        sequences[channel_id] = seq + 1
        encoded.append(
            _encode_record(
                OP_MESSAGE,
                struct.pack("<HIQQ", channel_id, seq, log_time, log_time) + payload,
            )
        )

    if chunked and encoded:
        records = b"".join(encoded)
        times = [m[0] for m in messages]
        chunk = (
            struct.pack("<QQQI", min(times), max(times), len(records), 0)
            + _encode_string("")
            + struct.pack("<Q", len(records))
            + records
        )
        parts.append(_encode_record(OP_CHUNK, chunk))
    else:
        parts.extend(encoded)

    parts.append(_encode_record(OP_FOOTER, struct.pack("<QQI", 0, 0, 0)))
    parts.append(MAGIC)
    return b"".join(parts)


def write_session(session: SessionLog, path: str | Path, chunked: bool = False) -> None:
    """Write a session log; I/O failures propagate as OSError."""
    Path(path).write_bytes(encode_session(session, chunked=chunked))


# --- payload decoding ---------------------------------------------------------

def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SchemaMismatchError(message)


def _number_list(obj, n: int, what: str) -> list[float]:
    _require(
        isinstance(obj, list) and len(obj) == n and all(isinstance(v, (int, float)) for v in obj),
        f"{what} must be a list of {n} numbers",
    )
    return [float(v) for v in obj]


def _timestamp(obj, what: str) -> int:
    _require(isinstance(obj, int) and not isinstance(obj, bool) and obj >= 0, f"{what} must be a non-negative integer")
    return obj


def _parse_json(payload: bytes, topic: str) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaMismatchError(f"{topic}: payload is not valid JSON") from exc
    _require(isinstance(obj, dict), f"{topic}: payload must be a JSON object")
    return obj


class _Decoder:
    """Accumulates decoded messages, then assembles a SessionLog."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.intrinsics: CameraIntrinsics | None = None
        self.poses: list[tuple[int, Pose]] = []
        self.depths: list[tuple[int, DepthMap]] = []
        self.hands: list[tuple[int, list[HandObservation]]] = []
        self.imu: list[tuple[int, list[float], list[float]]] = []
        self.markers: list[MarkerSighting] = []
        self.skipped = 0
        self._warned_topics: set[str] = set()

    def handle(self, topic: str, log_time: int, payload: bytes) -> None:
        if topic == TOPIC_INTRINSICS:
            self._intrinsics(payload)
        elif topic == TOPIC_POSE:
            self._pose(payload)
        elif topic == TOPIC_DEPTH:
            self._depth(log_time, payload)
        elif topic == TOPIC_HANDS:
            self._hands(payload)
        elif topic == TOPIC_IMU:
            self._imu(payload)
        elif topic == TOPIC_MARKERS:
            self._marker(payload)
        else:
            self.skipped += 1
            if topic not in self._warned_topics:
                self._warned_topics.add(topic)
                logger.warning("skipping messages on unrecognized channel %r", topic)

    def _intrinsics(self, payload: bytes) -> None:
        _require(self.intrinsics is None, "/intrinsics: must appear exactly once")
        obj = _parse_json(payload, TOPIC_INTRINSICS)
        try:
            self.intrinsics = CameraIntrinsics(
                fx=float(obj["fx"]),
                fy=float(obj["fy"]),
                cx=float(obj["cx"]),
                cy=float(obj["cy"]),
                width=int(obj["w"]),
                height=int(obj["h"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatchError(f"/intrinsics: {exc}") from exc

    def _pose(self, payload: bytes) -> None:
        obj = _parse_json(payload, TOPIC_POSE)
        _require(set(obj) >= {"ts", "t", "q"}, "/camera/pose: missing required keys")
        ts = _timestamp(obj["ts"], "/camera/pose ts")
        t = _number_list(obj["t"], 3, "/camera/pose t")
        q = _number_list(obj["q"], 4, "/camera/pose q")
        try:
            pose = Pose(np.array(t), np.array(q))
        except ValueError as exc:
            raise SchemaMismatchError(f"/camera/pose: {exc}") from exc
        self.poses.append((ts, pose))

    def _depth(self, log_time: int, payload: bytes) -> None:
        cur = _Cursor(payload)
        width = cur.u32()
        height = cur.u32()
        fmt = cur.u8()
        _require(fmt == _DEPTH_FORMAT_F32, f"/camera/depth: unsupported pixel format {fmt}")
        raw = cur.take(4 * width * height)
        _require(cur.remaining() == 0, "/camera/depth: trailing bytes in payload")
        data = np.frombuffer(raw, dtype="<f4").reshape(height, width)
        try:
            depth = DepthMap(data.copy())
        except ValueError as exc:
            raise SchemaMismatchError(f"/camera/depth: {exc}") from exc
        self.depths.append((log_time, depth))

    def _hands(self, payload: bytes) -> None:
        obj = _parse_json(payload, TOPIC_HANDS)
        _require(set(obj) >= {"ts", "hands"}, "/hands: missing required keys")
        ts = _timestamp(obj["ts"], "/hands ts")
        _require(isinstance(obj["hands"], list), "/hands: hands must be a list")
        observations = []
        for entry in obj["hands"]:
            _require(isinstance(entry, dict), "/hands: each hand must be an object")
            _require(
                set(entry) >= {"side", "conf", "px", "rel"}, "/hands: hand missing required keys"
            )
            px = entry["px"]
            rel = entry["rel"]
            _require(isinstance(px, list) and len(px) == 21, "/hands: px must list 21 joints")
            _require(isinstance(rel, list) and len(rel) == 21, "/hands: rel must list 21 joints")
            pixels = [_number_list(p, 2, "/hands px joint") for p in px]
            relative = [_number_list(p, 3, "/hands rel joint") for p in rel]
            try:
                observations.append(
                    HandObservation(
                        side=entry["side"],
                        confidence=float(entry["conf"]),
                        pixels=np.array(pixels),
                        relative_xyz=np.array(relative),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise SchemaMismatchError(f"/hands: {exc}") from exc
        self.hands.append((ts, observations))

    def _imu(self, payload: bytes) -> None:
        obj = _parse_json(payload, TOPIC_IMU)
        _require(set(obj) >= {"ts", "accel", "gyro"}, "/imu: missing required keys")
        ts = _timestamp(obj["ts"], "/imu ts")
        accel = _number_list(obj["accel"], 3, "/imu accel")
        gyro = _number_list(obj["gyro"], 3, "/imu gyro")
        self.imu.append((ts, accel, gyro))

    def _marker(self, payload: bytes) -> None:
        obj = _parse_json(payload, TOPIC_MARKERS)
        _require(set(obj) >= {"ts", "id", "p_cam"}, "/markers: missing required keys")
        ts = _timestamp(obj["ts"], "/markers ts")
        _require(
            isinstance(obj["id"], int) and not isinstance(obj["id"], bool) and obj["id"] >= 0,
            "/markers: id must be a non-negative integer",
        )
        p = _number_list(obj["p_cam"], 3, "/markers p_cam")
        try:
            self.markers.append(MarkerSighting(ts_ns=ts, marker_id=obj["id"], p_cam=np.array(p)))
        except ValueError as exc:
            raise SchemaMismatchError(f"/markers: {exc}") from exc

    def finish(self) -> SessionLog:
        if self.intrinsics is None:
            raise MissingIntrinsicsError("log contains no /intrinsics message")
        self.poses.sort(key=lambda item: item[0])
        self.depths.sort(key=lambda item: item[0])
        self.hands.sort(key=lambda item: item[0])
        self.imu.sort(key=lambda item: item[0])
        self.markers.sort(key=lambda m: m.ts_ns)
        if self.imu:
            imu = ImuStream(
                np.array([ts for ts, _, _ in self.imu], dtype=np.uint64),
                np.array([a for _, a, _ in self.imu]),
                np.array([g for _, _, g in self.imu]),
            )
        else:
            imu = ImuStream.empty()
        try:
            return SessionLog(
                session_id=self.session_id,
                intrinsics=self.intrinsics,
                poses=Trajectory.from_poses(self.poses) if self.poses else Trajectory.empty(),
                depths=self.depths,
                hands=self.hands,
                imu=imu,
                markers=self.markers,
                skipped_messages=self.skipped,
            )
        except ValueError as exc:
            raise SchemaMismatchError(str(exc)) from exc


def _iter_records(data: bytes, start: int, end: int):
    """Yield (opcode, payload_start, payload_end) triples."""
    cur = _Cursor(data, start, end)
    while cur.remaining() > 0:
        opcode = cur.u8()
        length = cur.u64()
        if cur.remaining() < length:
            raise SchemaMismatchError("truncated record")
        yield opcode, cur.pos, cur.pos + length
        cur.pos += length


def decode_session(data: bytes, session_id: str = "") -> SessionLog:
    """Decode a serialized session from memory."""
    if len(data) < 2 * len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("not an MCAP file (bad leading magic)")
    if data[-len(MAGIC) :] != MAGIC:
        raise BadMagicError("missing trailing magic")

    decoder = _Decoder(session_id)
    schemas: dict[int, str] = {}
    channels: dict[int, str] = {}

    def consume(opcode: int, start: int, end: int) -> None:
        payload = data[start:end]
        if opcode == OP_HEADER:
            cur = _Cursor(payload)
            cur.string()  # profile
            library = cur.string()
            if library:
                decoder.session_id = library
        elif opcode == OP_SCHEMA:
            cur = _Cursor(payload)
            schema_id = cur.u16()
            schemas[schema_id] = cur.string()
        elif opcode == OP_CHANNEL:
            cur = _Cursor(payload)
            channel_id = cur.u16()
            cur.u16()  # schema id
            channels[channel_id] = cur.string()
        elif opcode == OP_MESSAGE:
            cur = _Cursor(payload)
            channel_id = cur.u16()
            cur.u32()  # sequence
            log_time = cur.u64()
            cur.u64()  # publish time
            topic = channels.get(channel_id)
            if topic is None:
                raise SchemaMismatchError(f"message references undeclared channel {channel_id}")
            decoder.handle(topic, log_time, payload[cur.pos :])
        elif opcode == OP_CHUNK:
            cur = _Cursor(payload)
            cur.u64()  # message start time
            cur.u64()  # message end time
            cur.u64()  # uncompressed size
            cur.u32()  # uncompressed crc
            compression = cur.string()
            if compression:
                raise UnsupportedCompressionError(
                    f"chunk uses unsupported compression {compression!r}"
                )
            records_len = cur.u64()
            if cur.remaining() < records_len:
                raise SchemaMismatchError("truncated chunk records")
            for inner in _iter_records(data, start + cur.pos, start + cur.pos + records_len):
                consume(*inner)
        # Footer, DataEnd, index and summary records: skipped.

    for record in _iter_records(data, len(MAGIC), len(data) - len(MAGIC)):
        consume(*record)
    return decoder.finish()


def read_session(path: str | Path) -> SessionLog:
    """Read a capture log; the file stem becomes the session id."""
    path = Path(path)
    return decode_session(path.read_bytes(), session_id=path.stem)
