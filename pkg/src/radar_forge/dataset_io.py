"""Frame loading and every on-disk format, defined bit-exactly.

Formats owned here:

- manifest: line-based ``key = value`` text listing dataset-level radar
  parameters and per-frame file paths (grammar documented in README).
- lidar: little-endian float32 records of stride 4 (x, y, z, intensity),
  KITTI convention; intensity is discarded.
- images: binary PPM (P6) and PGM (P5), maxval 255 only.
- datagram CSV: header ``r,theta,phi,v,rss``, 12-significant-digit
  decimals, empty rss field when unset.
- calibration: text file with ``K:`` (9 floats), ``T_LD:``, ``T_CD:``
  (16 floats each, row-major homogeneous, mapping lidar/camera frame
  points into the radar Cartesian frame).
- grid binary "RFGD": 16-byte header (magic, u32 width, u32 height,
  u32 reserved) then row-major little-endian float64 cells.
- object velocities CSV: image-region boxes with a 3-vector each.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_geometry import CameraIntrinsics, RigidTransform
from .errors import (
    CorruptHeader,
    InvalidIntrinsics,
    NonRigidTransform,
    ParseError,
    RangeViolation,
    TruncatedFile,
    UnsupportedFormat,
)

# -- domain records -----------------------------------------------------------


@dataclass(frozen=True)
class RadarSignal:
    """One radar reflection: range, azimuth, elevation, Doppler, strength.

    Doppler is positive for receding targets.  ``rss`` stays None until the
    strength regressor fills it.
    """

    r: float
    theta: float
    phi: float
    v: float
    rss: float | None = None

    def validate(self):
        if not self.r > 0:
            raise RangeViolation(f"range must be positive, got {self.r}")
        if not (-np.pi < self.theta <= np.pi):
            raise RangeViolation(f"azimuth {self.theta} outside (-pi, pi]")
        if not (-np.pi / 2 <= self.phi <= np.pi / 2):
            raise RangeViolation(f"elevation {self.phi} outside [-pi/2, pi/2]")


@dataclass
class RadarDatagram:
    """Ordered set of reflections for one frame."""

    frame_id: str
    signals: list[RadarSignal] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.signals)

    @property
    def n(self) -> int:
        return len(self.signals)

    def spherical(self) -> np.ndarray:
        """(n, 3) array of [r, theta, phi]."""
        return np.array([[s.r, s.theta, s.phi] for s in self.signals]).reshape(-1, 3)

    def dopplers(self) -> np.ndarray:
        return np.array([s.v for s in self.signals])

    def rss_values(self) -> np.ndarray:
        """(n,) array with NaN where rss is unset."""
        return np.array([np.nan if s.rss is None else s.rss for s in self.signals])


class ObjectVelocityMap:
    """Per-region object velocities keyed by image bounding boxes.

    Lookup returns the first box containing the pixel; outside every box
    the world is static (zero velocity).
    """

    def __init__(self, boxes=None, velocities=None):
        self.boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4) if boxes is not None else np.empty((0, 4))
        self.velocities = (
            np.asarray(velocities, dtype=np.float64).reshape(-1, 3)
            if velocities is not None
            else np.empty((0, 3))
        )

    def lookup(self, u: float, v: float) -> np.ndarray:
        for box, vel in zip(self.boxes, self.velocities):
            if box[0] <= u <= box[2] and box[1] <= v <= box[3]:
                return vel
        return np.zeros(3)


@dataclass(frozen=True)
class Calibration:
    """Camera intrinsics plus the lidar->radar and camera->radar transforms."""

    intrinsics: CameraIntrinsics
    radar_from_lidar: RigidTransform
    radar_from_cam: RigidTransform

    @property
    def cam_from_radar(self) -> RigidTransform:
        return self.radar_from_cam.inverse()


@dataclass
class FrameBundle:
    """One time step's inputs, validated eagerly at load time."""

    frame_id: str
    image: np.ndarray                       # (h, w, 3) uint8
    lidar: np.ndarray                       # (n, 3) float64, lidar frame
    ego_velocity: np.ndarray                # (3,) m/s, radar Cartesian frame
    calibration: Calibration
    ground_truth: RadarDatagram | None = None
    object_velocities: ObjectVelocityMap | None = None

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


# -- lidar binary -------------------------------------------------------------

_LIDAR_RECORD_BYTES = 16  # 4 float32: x, y, z, intensity


def load_lidar_bin(path) -> np.ndarray:
    """Read KITTI-style float32 x/y/z/intensity records; intensity is dropped."""
    data = Path(path).read_bytes()
    if len(data) % _LIDAR_RECORD_BYTES != 0:
        raise TruncatedFile(
            f"{path}: {len(data)} bytes is not a multiple of {_LIDAR_RECORD_BYTES}"
        )
    records = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    return records[:, :3].astype(np.float64)


def write_lidar_bin(path, points, intensity=None):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    inten = np.zeros(len(pts)) if intensity is None else np.asarray(intensity, dtype=np.float64)
    out = np.column_stack([pts, inten]).astype("<f4")
    Path(path).write_bytes(out.tobytes())


# -- PPM / PGM ----------------------------------------------------------------


def _read_pnm_header(data, path):
    """Parse magic, dims, maxval; returns (magic, width, height, offset)."""
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptHeader(f"{path}: truncated PNM header")
        return data[start:pos]

    magic = next_token()
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"{path}: unsupported magic {magic!r}; only binary P5/P6")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise CorruptHeader(f"{path}: non-numeric PNM header field") from exc
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: maxval {maxval} unsupported; only 255")
    pos += 1  # single whitespace after maxval
    return magic, width, height, pos


def load_image(path) -> np.ndarray:
    """Read P6 as RGB; P5 grayscale is replicated to three channels."""
    data = Path(path).read_bytes()
    magic, width, height, offset = _read_pnm_header(data, path)
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    body = data[offset : offset + expected]
    if len(body) != expected:
        raise CorruptHeader(f"{path}: expected {expected} pixel bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr.copy()


def read_pgm(path) -> np.ndarray:
    """Read a single-channel P5 image (the external-predictor grid format)."""
    data = Path(path).read_bytes()
    magic, width, height, offset = _read_pnm_header(data, path)
    if magic != b"P5":
        raise UnsupportedFormat(f"{path}: expected P5 grayscale, got {magic!r}")
    expected = width * height
    body = data[offset : offset + expected]
    if len(body) != expected:
        raise CorruptHeader(f"{path}: expected {expected} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, image):
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise UnsupportedFormat("write_pgm expects a 2D uint8 array")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + img.tobytes())


def write_ppm(path, image):
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise UnsupportedFormat("write_ppm expects an (h, w, 3) uint8 array")
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + img.tobytes())


# -- datagram CSV -------------------------------------------------------------

_CSV_HEADER = "r,theta,phi,v,rss"


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_datagram_csv(path, datagram: RadarDatagram):
    lines = [_CSV_HEADER]
    for s in datagram.signals:
        rss = "" if s.rss is None else _fmt(s.rss)
        lines.append(f"{_fmt(s.r)},{_fmt(s.theta)},{_fmt(s.phi)},{_fmt(s.v)},{rss}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_datagram_csv(path, frame_id: str | None = None) -> RadarDatagram:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _CSV_HEADER:
        raise ParseError(f"{path}: missing or wrong header, expected {_CSV_HEADER!r}")
    signals = []
    violations = []
    for row_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"{path}: row {row_no}: expected 5 fields, got {len(parts)}")
        try:
            r, theta, phi, v = (float(p) for p in parts[:4])
            rss = float(parts[4]) if parts[4].strip() else None
        except ValueError as exc:
            raise ParseError(f"{path}: row {row_no}: non-numeric field") from exc
        sig = RadarSignal(r=r, theta=theta, phi=phi, v=v, rss=rss)
        try:
            sig.validate()
        except RangeViolation as exc:
            violations.append(f"row {row_no}: {exc}")
        signals.append(sig)
    if violations:
        raise RangeViolation(f"{path}: " + "; ".join(violations))
    fid = frame_id if frame_id is not None else Path(path).stem
    return RadarDatagram(frame_id=fid, signals=signals)


# -- calibration --------------------------------------------------------------

# Calibration files may carry rotations that are orthonormal only to sensor
# tolerance; accept up to this error, then project to the nearest rotation so
# the internal RigidTransform invariant (1e-9) holds downstream.
CALIB_ROTATION_TOL = 1e-6


def _orthonormalize(rot):
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def _parse_transform(values, key, path) -> RigidTransform:
    m = np.array(values, dtype=np.float64).reshape(4, 4)
    if np.abs(m[3] - np.array([0, 0, 0, 1])).max() > 1e-9:
        raise NonRigidTransform(f"{path}: {key} bottom row must be [0 0 0 1]")
    rot = m[:3, :3]
    err = np.abs(rot.T @ rot - np.eye(3)).max()
    det = np.linalg.det(rot)
    if err > CALIB_ROTATION_TOL or abs(det - 1.0) > CALIB_ROTATION_TOL:
        raise NonRigidTransform(
            f"{path}: {key} rotation invalid (|R^T R - I|={err:.3e}, det={det:.6f})"
        )
    return RigidTransform(_orthonormalize(rot), m[:3, 3])


def load_calibration(path) -> Calibration:
    """Parse ``K:``, ``T_LD:``, ``T_CD:`` lines into a validated Calibration."""
    entries = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(f"{path}: line {line_no}: expected 'KEY: values'")
        key, _, rest = line.partition(":")
        key = key.strip()
        if key in entries:
            raise ParseError(f"{path}: line {line_no}: duplicate key {key!r}")
        try:
            entries[key] = [float(tok) for tok in rest.split()]
        except ValueError as exc:
            raise ParseError(f"{path}: line {line_no}: non-numeric value") from exc
    for key, count in (("K", 9), ("T_LD", 16), ("T_CD", 16)):
        if key not in entries:
            raise ParseError(f"{path}: missing calibration key {key!r}")
        if len(entries[key]) != count:
            raise ParseError(
                f"{path}: key {key!r} needs {count} floats, got {len(entries[key])}"
            )
    try:
        intrinsics = CameraIntrinsics.from_matrix(np.array(entries["K"]).reshape(3, 3))
    except InvalidIntrinsics as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return Calibration(
        intrinsics=intrinsics,
        radar_from_lidar=_parse_transform(entries["T_LD"], "T_LD", path),
        radar_from_cam=_parse_transform(entries["T_CD"], "T_CD", path),
    )


# -- object velocities --------------------------------------------------------

_OBJVEL_HEADER = "u_min,v_min,u_max,v_max,vx,vy,vz"


def load_object_velocities(path) -> ObjectVelocityMap:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _OBJVEL_HEADER:
        raise ParseError(f"{path}: missing or wrong header, expected {_OBJVEL_HEADER!r}")
    boxes, vels = [], []
    for row_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(f"{path}: row {row_no}: expected 7 fields")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"{path}: row {row_no}: non-numeric field") from exc
        boxes.append(vals[:4])
        vels.append(vals[4:])
    return ObjectVelocityMap(boxes, vels)


def write_object_velocities(path, boxes, velocities):
    lines = [_OBJVEL_HEADER]
    for box, vel in zip(boxes, velocities):
        lines.append(",".join(_fmt(x) for x in (*box, *vel)))
    Path(path).write_text("\n".join(lines) + "\n")


# -- RFGD full-precision grid binary -------------------------------------------

_RFGD_MAGIC = b"RFGD"


def write_grid(path, mass):
    arr = np.ascontiguousarray(mass, dtype="<f8")
    if arr.ndim != 2:
        raise UnsupportedFormat("write_grid expects a 2D array")
    h, w = arr.shape
    header = _RFGD_MAGIC + struct.pack("<III", w, h, 0)
    Path(path).write_bytes(header + arr.tobytes())


def read_grid(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _RFGD_MAGIC:
        raise CorruptHeader(f"{path}: not an RFGD grid file")
    w, h, _ = struct.unpack("<III", data[4:16])
    expected = 16 + w * h * 8
    if len(data) != expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes, got {len(data)}")
    return np.frombuffer(data[16:], dtype="<f8").reshape(h, w).copy()


# -- manifest -----------------------------------------------------------------

_REQUIRED_FRAME_KEYS = ("image", "lidar", "calib", "ego_velocity")


@dataclass
class FrameDescriptor:
    frame_id: str
    image_path: Path
    lidar_path: Path
    calib_path: Path
    ego_velocity: np.ndarray
    gt_path: Path | None = None
    object_velocities_path: Path | None = None


@dataclass
class DatasetManifest:
    name: str
    spec: "object"                       # signal_synth.RadarSpec
    frames: list[FrameDescriptor]
    sigma: np.ndarray | None = None      # 2x2 override, px^2
    seed: int | None = None
    root: Path | None = None

    def frame_ids(self) -> list[str]:
        return [f.frame_id for f in self.frames]


def load_manifest(path) -> DatasetManifest:
    """Parse a ``key = value`` manifest; errors carry 1-based line numbers."""
    from .signal_synth import RadarSpec  # local import; signal_synth imports this module

    path = Path(path)
    root = path.parent
    scalars: dict[str, str] = {}
    frames: dict[str, dict[str, str]] = {}
    order: list[str] = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}: line {line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("frame."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ParseError(f"{path}: line {line_no}: frame keys are frame.<id>.<field>")
            _, frame_id, fld = parts
            if frame_id not in frames:
                frames[frame_id] = {}
                order.append(frame_id)
            if fld in frames[frame_id]:
                raise ParseError(
                    f"{path}: line {line_no}: duplicate key frame.{frame_id}.{fld}"
                )
            frames[frame_id][fld] = value
        else:
            if key in scalars:
                raise ParseError(f"{path}: line {line_no}: duplicate key {key!r}")
            scalars[key] = value

    def fnum(key, default):
        return float(scalars[key]) if key in scalars else default

    try:
        spec = RadarSpec(
            delta1=np.radians(fnum("radar.delta1_deg", 1.5)),
            delta2=np.radians(fnum("radar.delta2_deg", 1.5)),
            max_range=fnum("radar.max_range", 50.0),
            fov_azimuth=np.radians(fnum("radar.fov_azimuth_deg", 120.0)) / 2.0,
            fov_elevation=np.radians(fnum("radar.fov_elevation_deg", 60.0)) / 2.0,
            n_max=int(scalars.get("n_max", 1024)),
        )
    except ValueError as exc:
        raise ParseError(f"{path}: bad radar parameter: {exc}") from exc

    sigma = None
    if "sigma" in scalars:
        vals = [float(t) for t in scalars["sigma"].split()]
        if len(vals) != 4:
            raise ParseError(f"{path}: sigma needs 4 row-major floats, got {len(vals)}")
        sigma = np.array(vals).reshape(2, 2)

    seed = int(scalars["seed"]) if "seed" in scalars else None

    descriptors = []
    for frame_id in sorted(order):
        fields = frames[frame_id]
        for req in _REQUIRED_FRAME_KEYS:
            if req not in fields:
                raise ParseError(
                    f"{path}: frame {frame_id!r} missing required key {req!r}"
                )
        try:
            ego = np.array([float(t) for t in fields["ego_velocity"].split()])
        except ValueError as exc:
            raise ParseError(f"{path}: frame {frame_id!r}: bad ego_velocity") from exc
        if ego.shape != (3,):
            raise ParseError(f"{path}: frame {frame_id!r}: ego_velocity needs 3 floats")
        descriptors.append(
            FrameDescriptor(
                frame_id=frame_id,
                image_path=root / fields["image"],
                lidar_path=root / fields["lidar"],
                calib_path=root / fields["calib"],
                ego_velocity=ego,
                gt_path=root / fields["gt"] if "gt" in fields else None,
                object_velocities_path=(
                    root / fields["object_velocities"] if "object_velocities" in fields else None
                ),
            )
        )
    return DatasetManifest(
        name=scalars.get("name", path.stem),
        spec=spec,
        frames=descriptors,
        sigma=sigma,
        seed=seed,
        root=root,
    )


def load_frame(descriptor: FrameDescriptor) -> FrameBundle:
    """Load and eagerly validate one frame's inputs."""
    calibration = load_calibration(descriptor.calib_path)
    image = load_image(descriptor.image_path)
    lidar = load_lidar_bin(descriptor.lidar_path)
    gt = (
        read_datagram_csv(descriptor.gt_path, frame_id=descriptor.frame_id)
        if descriptor.gt_path is not None
        else None
    )
    objvel = (
        load_object_velocities(descriptor.object_velocities_path)
        if descriptor.object_velocities_path is not None
        else None
    )
    return FrameBundle(
        frame_id=descriptor.frame_id,
        image=image,
        lidar=lidar,
        ego_velocity=np.asarray(descriptor.ego_velocity, dtype=np.float64),
        calibration=calibration,
        ground_truth=gt,
        object_velocities=objvel,
    )
