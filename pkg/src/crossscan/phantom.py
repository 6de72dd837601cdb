"""Seeded procedural brain phantoms and closed-form MR scan simulation.

A phantom is a 2-D tissue label map shaped like a transverse brain slice:
a cerebrospinal-fluid rim, a gray-matter ribbon, a white-matter core and
two CSF ventricles.  Per-subject shape variation comes from low-order
radial harmonics derived from the subject seed.

Scans are simulated with the steady-state spoiled gradient-echo signal

    S = rho * sin(theta) * (1 - E1) / (1 - cos(theta) * E1) * exp(-TE/T2),
    E1 = exp(-TR/T1),

with (T1, T2) chosen by field strength, plus complex Gaussian noise taken
in magnitude (Rician).  Intensities are scaled so the 99th percentile of
in-brain voxels is 1.0.
"""

import json
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, UnsupportedFieldError


class TissueId(IntEnum):
    BKG = 0
    CSF = 1
    GM = 2
    WM = 3
    FAT = 4
    MUSCLE = 5
    SKIN = 6
    SKULL = 7
    GLIAL = 8
    CONN = 9


#: The tissues that classification experiments discriminate.
CLASSIFICATION_TISSUES = (TissueId.CSF, TissueId.GM, TissueId.WM)


@dataclass(frozen=True)
class RelaxationEntry:
    """Proton density (percent) and T1/T2 (ms) at 1.5 T and 3.0 T."""

    proton_density: float
    t1_15: float
    t2_15: float
    t1_30: float
    t2_30: float

    def at_field(self, b0):
        if b0 == 1.5:
            return self.t1_15, self.t2_15
        if b0 == 3.0:
            return self.t1_30, self.t2_30
        raise UnsupportedFieldError(f"no relaxation times tabulated for B0={b0} T")


# Skull T2 entries are effective (T2*) values; glial matter reuses gray-matter
# relaxation and connective tissue is equated to glial matter.
RELAXATION_TABLE = {
    TissueId.CSF:    RelaxationEntry(100.0, 4326.0, 791.0, 4313.0, 503.0),
    TissueId.GM:     RelaxationEntry(86.0, 1124.0, 95.0, 1820.0, 99.0),
    TissueId.WM:     RelaxationEntry(77.0, 884.0, 72.0, 1084.0, 69.0),
    TissueId.FAT:    RelaxationEntry(100.0, 343.0, 58.0, 382.0, 68.0),
    TissueId.MUSCLE: RelaxationEntry(100.0, 629.0, 44.0, 832.0, 50.0),
    TissueId.SKIN:   RelaxationEntry(100.0, 230.0, 35.0, 306.0, 22.0),
    TissueId.SKULL:  RelaxationEntry(0.0, 200.0, 0.46, 223.0, 0.39),
    TissueId.GLIAL:  RelaxationEntry(86.0, 1124.0, 95.0, 1820.0, 99.0),
    TissueId.CONN:   RelaxationEntry(77.0, 1124.0, 95.0, 1820.0, 99.0),
}


@dataclass(frozen=True)
class AcquisitionProtocol:
    """One gradient-echo acquisition: field strength, flip angle and timing."""

    name: str
    b0: float
    flip_deg: float
    tr_ms: float
    te_ms: float
    noise_sigma: float = 0.02

    def __post_init__(self):
        if not 0.0 < self.flip_deg <= 180.0:
            raise ConfigError(f"flip angle must be in (0, 180], got {self.flip_deg}")
        if not 0.0 < self.te_ms < self.tr_ms:
            raise ConfigError(
                f"need 0 < TE < TR, got TE={self.te_ms} TR={self.tr_ms}")
        if self.noise_sigma < 0.0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


BRAINWEB_15T = AcquisitionProtocol("Brainweb1.5T", 1.5, 20.0, 13.8, 2.8)
BRAINWEB_30T = AcquisitionProtocol("Brainweb3.0T", 3.0, 90.0, 7.9, 4.5)

PROTOCOL_PRESETS = {p.name: p for p in (BRAINWEB_15T, BRAINWEB_30T)}


def signal(tissue, protocol):
    """Noise-free spoiled gradient-echo signal for one tissue.

    Requires a relaxation entry for the tissue; BKG has none and simulators
    treat it as zero signal directly.
    """
    entry = RELAXATION_TABLE.get(TissueId(tissue))
    if entry is None:
        raise KeyError(f"no relaxation entry for tissue {TissueId(tissue).name}")
    t1, t2 = entry.at_field(protocol.b0)
    theta = math.radians(protocol.flip_deg)
    e1 = math.exp(-protocol.tr_ms / t1)
    s = (entry.proton_density * math.sin(theta) * (1.0 - e1)
         / (1.0 - math.cos(theta) * e1) * math.exp(-protocol.te_ms / t2))
    return s


@dataclass
class TissueLabelMap:
    """2-D grid of tissue identities plus the seed that generated it."""

    labels: np.ndarray          # uint8, shape (height, width)
    subject_seed: int
    resolution: float = 1.0     # mm per voxel

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def height(self):
        return self.labels.shape[0]

    def brain_mask(self):
        return self.labels != TissueId.BKG


@dataclass
class ScanImage:
    """Simulated MR intensities for one label map under one protocol."""

    intensities: np.ndarray     # float64, shape (height, width)
    protocol: AcquisitionProtocol
    label_map: TissueLabelMap
    scanner_id: int             # 0 = source, 1 = target

    @property
    def width(self):
        return self.intensities.shape[1]

    @property
    def height(self):
        return self.intensities.shape[0]


def generate_phantom(subject_seed, width, height, resolution=1.0):
    """Deterministic brain-slice label map for one subject seed.

    Concentric deformed ellipses: CSF rim, GM ribbon, WM core, two CSF
    ventricles.  All shape parameters are drawn from the subject seed, so
    the same seed always yields a bit-identical map.
    """
    if width < 64 or height < 64:
        raise ValueError(f"phantom dimensions must be >= 64, got {width}x{height}")

    rng = np.random.default_rng(int(subject_seed))
    cx = (width - 1) / 2.0 + rng.uniform(-0.02, 0.02) * width
    cy = (height - 1) / 2.0 + rng.uniform(-0.02, 0.02) * height
    rx = 0.38 * width * (1.0 + rng.uniform(-0.04, 0.04))
    ry = 0.42 * height * (1.0 + rng.uniform(-0.04, 0.04))

    yy, xx = np.mgrid[0:height, 0:width]
    ex = (xx - cx) / rx
    ey = (yy - cy) / ry
    rr = np.hypot(ex, ey)
    phi = np.arctan2(ey, ex)

    # Low-order radial harmonics; one shared boundary deformation keeps the
    # tissue rings nested for any draw.
    g = np.ones_like(rr)
    for j in (2, 3, 4, 5):
        amp = rng.uniform(0.008, 0.03)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        g += amp * np.cos(j * phi + phase)
    rn = rr / g

    csf_inner = 0.93 + rng.uniform(-0.015, 0.015)
    gm_inner = 0.62 + rng.uniform(-0.03, 0.03)

    labels = np.full((height, width), TissueId.BKG, dtype=np.uint8)
    labels[rn <= 1.0] = TissueId.CSF
    labels[rn <= csf_inner] = TissueId.GM
    labels[rn <= gm_inner] = TissueId.WM

    # Two ventricles, carved only inside the WM core so they stay enclosed.
    core = rn <= gm_inner * 0.92
    for side in (-1.0, 1.0):
        vx = side * (0.16 + rng.uniform(-0.03, 0.03))
        vy = -0.06 + rng.uniform(-0.03, 0.03)
        va = 0.085 + rng.uniform(-0.015, 0.015)
        vb = 0.22 + rng.uniform(-0.03, 0.03)
        tilt = side * 0.18 + rng.uniform(-0.12, 0.12)
        ct, st = math.cos(tilt), math.sin(tilt)
        u = (ex - vx) * ct - (ey - vy) * st
        v = (ex - vx) * st + (ey - vy) * ct
        vent = (u / va) ** 2 + (v / vb) ** 2 <= 1.0
        labels[vent & core] = TissueId.CSF

    return TissueLabelMap(labels, int(subject_seed), resolution)


def simulate_scan(label_map, protocol, scanner_id, noise_seed):
    """Simulate a magnitude MR image of ``label_map`` under ``protocol``.

    Per-channel noise std is ``protocol.noise_sigma`` times the clean WM
    signal; the magnitude of (signal + complex noise) is Rician.  The result
    is scaled so the 99th percentile of in-brain voxels equals 1.0.
    """
    if scanner_id not in (0, 1):
        raise ValueError(f"scanner_id must be 0 or 1, got {scanner_id}")
    labels = label_map.labels
    table = np.zeros(len(TissueId), dtype=np.float64)
    for tissue in np.unique(labels):
        if tissue != TissueId.BKG:
            table[tissue] = signal(TissueId(tissue), protocol)
    clean = table[labels]

    if protocol.noise_sigma > 0.0:
        sigma = protocol.noise_sigma * signal(TissueId.WM, protocol)
        rng = np.random.default_rng(int(noise_seed))
        real = clean + rng.normal(0.0, sigma, clean.shape)
        imag = rng.normal(0.0, sigma, clean.shape)
        intensities = np.hypot(real, imag)
    else:
        intensities = clean.copy()

    brain = labels != TissueId.BKG
    if brain.any():
        scale = np.percentile(intensities[brain], 99.0)
        if scale > 0.0:
            intensities /= scale
    return ScanImage(intensities, protocol, label_map, int(scanner_id))


def brain_mask_is_connected(label_map):
    """True when the non-BKG region is a single 4-connected component."""
    mask = label_map.brain_mask()
    total = int(mask.sum())
    if total == 0:
        return False
    seen = np.zeros_like(mask)
    start = tuple(np.argwhere(mask)[0])
    stack = [start]
    seen[start] = True
    count = 0
    h, w = mask.shape
    while stack:
        i, j = stack.pop()
        count += 1
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ni < h and 0 <= nj < w and mask[ni, nj] and not seen[ni, nj]:
                seen[ni, nj] = True
                stack.append((ni, nj))
    return count == total


# ---------------------------------------------------------------------------
# File formats

_LABEL_MAGIC = "MRAI-LAB v1"
_SCAN_MAGIC = "MRAI-SCAN v1"


def write_label_map(label_map, path):
    """Header line then the row-major byte grid of tissue ordinals."""
    with open(path, "wb") as fh:
        fh.write(f"{_LABEL_MAGIC} {label_map.width} {label_map.height}\n".encode())
        fh.write(label_map.labels.astype(np.uint8).tobytes())


def read_label_map(path, subject_seed=0, resolution=1.0):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or " ".join(parts[:2]) != _LABEL_MAGIC:
            raise ConfigError(f"{path}: not a label-map file (header {header!r})")
        width, height = int(parts[2]), int(parts[3])
        raw = fh.read()
    if len(raw) != width * height:
        raise ConfigError(
            f"{path}: expected {width * height} label bytes, found {len(raw)}")
    labels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()
    if labels.max() >= len(TissueId):
        raise ConfigError(f"{path}: label byte out of range")
    return TissueLabelMap(labels, subject_seed, resolution)


def write_scan(scan, path):
    """Header line then row-major little-endian float32 intensities."""
    with open(path, "wb") as fh:
        fh.write(f"{_SCAN_MAGIC} {scan.width} {scan.height}\n".encode())
        fh.write(scan.intensities.astype("<f4").tobytes())


def read_scan_intensities(path):
    """Read a scan file back as a float64 array (protocol is not stored)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or " ".join(parts[:2]) != _SCAN_MAGIC:
            raise ConfigError(f"{path}: not a scan file (header {header!r})")
        width, height = int(parts[2]), int(parts[3])
        raw = fh.read()
    if len(raw) != width * height * 4:
        raise ConfigError(
            f"{path}: expected {width * height * 4} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4").reshape(height, width)
    return data.astype(np.float64)


def load_protocols(path):
    """Protocol presets from a JSON file: a list of objects with keys
    name, b0, flip_deg, tr_ms, te_ms, noise_sigma."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid protocol config: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("protocols", [])
    protocols = {}
    for item in data:
        try:
            proto = AcquisitionProtocol(
                name=str(item["name"]),
                b0=float(item["b0"]),
                flip_deg=float(item["flip_deg"]),
                tr_ms=float(item["tr_ms"]),
                te_ms=float(item["te_ms"]),
                noise_sigma=float(item.get("noise_sigma", 0.02)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad protocol entry {item!r}: {exc}") from exc
        protocols[proto.name] = proto
    return protocols


def get_protocol(name, extra=None):
    """Look up a protocol by name among presets and optional extras."""
    if extra and name in extra:
        return extra[name]
    if name in PROTOCOL_PRESETS:
        return PROTOCOL_PRESETS[name]
    raise ConfigError(f"unknown protocol {name!r}")
