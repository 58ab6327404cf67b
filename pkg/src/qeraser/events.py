"""Event-level simulation: triple sampling, time tags, matching, logs.

Triples are drawn per schedule block from the exact joint table and then
unrolled into a time-tagged detection stream (one screen record plus two
idler records per triple).  A greedy window matcher rebuilds triples from
the stream, which is the honest route any decoder has to take.

Sampling is factorised: the (screen bin, alisha outcome) pair is drawn from
the babu-independent marginal on its own RNG stream, and babu's outcome is
drawn conditionally on a second stream.  The joint law is unchanged, but
alisha's side of the record is then bit-identical under any change of
babu's splitter program, which turns the no-signalling statement into an
exact file-level fact rather than a statistical one.

All randomness comes from numpy's PCG64 generator seeded through
SeedSequence(seed, spawn_key=(domain, block)); the algorithm id is recorded
in every stream header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .experiment import MODE_DOUBLE, ExperimentConfig, SwitchSchedule
from .optics import (
    ALISHA_LABELS,
    BABU_LABELS,
    joint_distribution,
    screen_marginal,
)

RNG_ALGORITHM = "numpy-pcg64-seedseq"
DEFAULT_WINDOW_NS = 20
BASE_SPACING_NS = 1000
MIN_SPACING_NS = 40  # keep triples separated by well over the delay spread

# spawn_key domains, so the streams never collide
_DOMAIN_MARGINAL = 0
_DOMAIN_CONDITIONAL = 1
_DOMAIN_DELAYS = 2
_DOMAIN_BACKGROUND = 3

DETECTOR_LABELS = ("D0",) + BABU_LABELS + ALISHA_LABELS
_CODE_BY_LABEL = {label: code for code, label in enumerate(DETECTOR_LABELS)}
CODE_D0 = 0


@dataclass(frozen=True)
class EventRecord:
    """One time-tagged detection; x_bin is present exactly for D0 records."""

    event_id: int
    detector: str
    time_ns: int
    x_bin: int | None = None

    def __post_init__(self):
        if self.detector not in _CODE_BY_LABEL:
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.time_ns < 0:
            raise ValueError("time_ns must be non-negative")
        if (self.detector == "D0") != (self.x_bin is not None):
            raise ValueError("x_bin must be present iff the detector is D0")


@dataclass(frozen=True)
class CoincidenceTriple:
    triple_id: int
    x_bin: int
    babu_outcome: int
    alisha_outcome: int
    block_index: int


@dataclass(eq=False)
class TripleBatch:
    """Column-oriented batch of coincidence triples (int64 arrays)."""

    triple_id: np.ndarray
    x_bin: np.ndarray
    babu: np.ndarray
    alisha: np.ndarray
    block_index: np.ndarray

    def __post_init__(self):
        for name in ("triple_id", "x_bin", "babu", "alisha", "block_index"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        n = len(self.triple_id)
        if any(
            len(getattr(self, name)) != n
            for name in ("x_bin", "babu", "alisha", "block_index")
        ):
            raise ValueError("triple columns must share one length")
        if n and (self.babu.min() < 0 or self.babu.max() > 3):
            raise ValueError("babu outcomes out of range")
        if n and (self.alisha.min() < 0 or self.alisha.max() > 3):
            raise ValueError("alisha outcomes out of range")

    def __len__(self) -> int:
        return len(self.triple_id)

    def record(self, i: int) -> CoincidenceTriple:
        return CoincidenceTriple(
            triple_id=int(self.triple_id[i]),
            x_bin=int(self.x_bin[i]),
            babu_outcome=int(self.babu[i]),
            alisha_outcome=int(self.alisha[i]),
            block_index=int(self.block_index[i]),
        )

    @classmethod
    def from_records(cls, records) -> "TripleBatch":
        records = list(records)
        return cls(
            triple_id=[r.triple_id for r in records],
            x_bin=[r.x_bin for r in records],
            babu=[r.babu_outcome for r in records],
            alisha=[r.alisha_outcome for r in records],
            block_index=[r.block_index for r in records],
        )


@dataclass(eq=False)
class EventStream:
    """Time-sorted detection stream; detector held as codes into DETECTOR_LABELS."""

    event_id: np.ndarray
    detector: np.ndarray
    time_ns: np.ndarray
    x_bin: np.ndarray  # -1 for records without a screen position
    n_bins: int

    def __post_init__(self):
        for name in ("event_id", "detector", "time_ns", "x_bin"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        n = len(self.event_id)
        if any(len(getattr(self, name)) != n for name in ("detector", "time_ns", "x_bin")):
            raise ValueError("event columns must share one length")

    def __len__(self) -> int:
        return len(self.event_id)

    def record(self, i: int) -> EventRecord:
        code = int(self.detector[i])
        return EventRecord(
            event_id=int(self.event_id[i]),
            detector=DETECTOR_LABELS[code],
            time_ns=int(self.time_ns[i]),
            x_bin=int(self.x_bin[i]) if code == CODE_D0 else None,
        )


@dataclass(frozen=True)
class SimStreamHeader:
    """Provenance block written at the top of event and triple files."""

    seed: int
    config_digest: str
    coincidence_window_ns: int
    bits: str
    block_size: int
    spacing_ns: int
    n_triples: int
    n_bins: int
    rng_algorithm: str = RNG_ALGORITHM


@dataclass(frozen=True)
class OrphanReport:
    """Records left over by the matcher, counted per detector."""

    total: int
    by_detector: dict
    event_ids: np.ndarray


def triple_spacing_ns(pair_rate_scale: float) -> int:
    """Inter-triple gap; scale 1 means one triple per microsecond."""
    s = float(pair_rate_scale)
    if not (math.isfinite(s) and s > 0.0):
        raise ValueError("pair_rate_scale must be positive")
    spacing = int(round(BASE_SPACING_NS / s))
    if spacing < MIN_SPACING_NS:
        raise ValueError(
            f"pair rate scale {s!r} packs triples closer than {MIN_SPACING_NS} ns; "
            "coincidence windows would overlap"
        )
    return spacing


def _empty_batch() -> TripleBatch:
    z = np.zeros(0, dtype=np.int64)
    return TripleBatch(z, z, z, z, z)


def sample_triples(
    config: ExperimentConfig,
    schedule: SwitchSchedule | None = None,
    seed: int = 0,
) -> TripleBatch:
    """Draw block_size triples per schedule bit from the exact joint table.

    Deterministic for a given (config, schedule, seed): block b consumes the
    spawned streams (0, b) and (1, b) only, so blocks could be generated in
    any order with identical output.
    """
    if config.mode != MODE_DOUBLE:
        raise ValueError("triple sampling needs a double_delayed_choice config")
    if schedule is None:
        schedule = config.schedule
    if schedule is None:
        raise ValueError("no switch schedule given")
    if int(seed) < 0:
        raise ValueError("seed must be a non-negative integer")
    seed = int(seed)
    if not schedule.bits:
        return _empty_batch()

    geom = config.geometry
    alisha = config.alisha_optics
    marg_flat = screen_marginal(geom, config.envelope, alisha).ravel()
    marg_cum = np.cumsum(marg_flat)
    marg_cum /= marg_cum[-1]

    cond_cum = {}
    for bit in sorted(set(schedule.bits)):
        babu = replace(config.babu_optics, splitter_present=bool(bit))
        dist = joint_distribution(geom, config.envelope, babu, alisha)
        cond = dist.probs.transpose(0, 2, 1).reshape(-1, 4).copy()  # row = (bin, k)
        rowsum = cond.sum(axis=1, keepdims=True)
        np.divide(cond, rowsum, out=cond, where=rowsum > 0)
        cond[rowsum[:, 0] == 0] = 0.25  # rows with zero marginal are never drawn
        cum = np.cumsum(cond, axis=1)
        cum[:, -1] = 1.0
        cond_cum[int(bit)] = cum

    n = schedule.block_size
    xs, js, ks, blocks = [], [], [], []
    for b, bit in enumerate(schedule.bits):
        rng_m = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(_DOMAIN_MARGINAL, b))
        )
        rng_c = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(_DOMAIN_CONDITIONAL, b))
        )
        flat = np.searchsorted(marg_cum, rng_m.random(n), side="right")
        np.clip(flat, 0, marg_flat.size - 1, out=flat)
        rows = cond_cum[int(bit)][flat]
        j = (rows <= rng_c.random(n)[:, None]).sum(axis=1)
        np.clip(j, 0, 3, out=j)
        xs.append(flat // 4)
        ks.append(flat % 4)
        js.append(j)
        blocks.append(np.full(n, b, dtype=np.int64))

    x_bin = np.concatenate(xs)
    return TripleBatch(
        triple_id=np.arange(len(x_bin), dtype=np.int64),
        x_bin=x_bin,
        babu=np.concatenate(js),
        alisha=np.concatenate(ks),
        block_index=np.concatenate(blocks),
    )


def emit_events(triples: TripleBatch, config: ExperimentConfig, seed: int = 0) -> EventStream:
    """Unroll triples into a time-sorted stream of single detections.

    Triple t sits at t * spacing; its screen record comes first and the two
    idler records lag by independent integer delays in [1, 10] ns.  Delay
    draws depend only on (seed, triple position), never on outcomes, so two
    runs differing only in babu's settings share identical timestamps.
    """
    n = len(triples)
    spacing = triple_spacing_ns(config.pair_rate_scale)
    rng = np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=(_DOMAIN_DELAYS, 0))
    )
    delays = rng.integers(1, 11, size=(n, 2))
    base = np.arange(n, dtype=np.int64) * spacing
    times = np.concatenate([base, base + delays[:, 0], base + delays[:, 1]])
    codes = np.concatenate(
        [
            np.zeros(n, dtype=np.int64),
            triples.babu + 1,
            triples.alisha + 5,
        ]
    )
    x_bin = np.concatenate([triples.x_bin, np.full(2 * n, -1, dtype=np.int64)])
    rank = np.concatenate(
        [np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64), np.full(n, 2, dtype=np.int64)]
    )
    order = np.lexsort((rank, times))
    return EventStream(
        event_id=np.arange(3 * n, dtype=np.int64),
        detector=codes[order],
        time_ns=times[order],
        x_bin=x_bin[order],
        n_bins=config.geometry.n_bins,
    )


def inject_background(stream: EventStream, rate_per_ns: float, seed: int = 0) -> EventStream:
    """Overlay Poisson dark counts on an existing stream.

    Original records keep their ids and content; background records get
    fresh ids past the current maximum.  Rate 0 returns the stream as is.
    """
    rate = float(rate_per_ns)
    if not (math.isfinite(rate) and rate >= 0.0):
        raise ValueError("background rate must be non-negative")
    if rate == 0.0 or len(stream) < 2:
        return stream
    rng = np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=(_DOMAIN_BACKGROUND, 0))
    )
    t0 = int(stream.time_ns[0])
    t1 = int(stream.time_ns[-1])
    n_bg = int(rng.poisson(rate * (t1 - t0)))
    bg_times = rng.integers(t0, t1 + 1, size=n_bg)
    bg_codes = rng.integers(0, len(DETECTOR_LABELS), size=n_bg)
    bg_x_all = rng.integers(0, stream.n_bins, size=n_bg)
    bg_x = np.where(bg_codes == CODE_D0, bg_x_all, -1)
    next_id = int(stream.event_id.max()) + 1
    bg_ids = next_id + np.arange(n_bg, dtype=np.int64)

    all_t = np.concatenate([stream.time_ns, bg_times])
    all_code = np.concatenate([stream.detector, bg_codes])
    all_x = np.concatenate([stream.x_bin, bg_x])
    all_id = np.concatenate([stream.event_id, bg_ids])
    is_bg = np.concatenate(
        [np.zeros(len(stream), dtype=np.int64), np.ones(n_bg, dtype=np.int64)]
    )
    order = np.lexsort((all_id, is_bg, all_t))
    return EventStream(
        event_id=all_id[order],
        detector=all_code[order],
        time_ns=all_t[order],
        x_bin=all_x[order],
        n_bins=stream.n_bins,
    )


def match_coincidences(
    stream: EventStream,
    window_ns: int = DEFAULT_WINDOW_NS,
    *,
    block_size: int | None = None,
    spacing_ns: int | None = None,
) -> tuple[TripleBatch, OrphanReport]:
    """Greedy earliest-first triple matching within a symmetric time window.

    Walks D0 records in time order; each one claims the earliest unconsumed
    record from each idler arm within window_ns, or becomes an orphan.  If
    spacing_ns and block_size are given (normally from the stream header)
    the block index is recovered from the D0 timestamp, which stays correct
    even when background events distort the matched sequence numbering.
    """
    w = int(window_ns)
    if w < 0:
        raise ValueError("window must be non-negative")
    t = stream.time_ns
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError("event stream is not time-sorted")

    codes = stream.detector
    d0_pos = np.flatnonzero(codes == CODE_D0)
    b_pos = np.flatnonzero((codes >= 1) & (codes <= 4))
    a_pos = np.flatnonzero(codes >= 5)

    td = t[d0_pos].tolist()
    xd = stream.x_bin[d0_pos].tolist()
    tb = t[b_pos].tolist()
    cb = codes[b_pos].tolist()
    ta = t[a_pos].tolist()
    ca = codes[a_pos].tolist()

    nb, na = len(tb), len(ta)
    used_b = np.zeros(nb, dtype=bool)
    used_a = np.zeros(na, dtype=bool)
    used_d = np.zeros(len(td), dtype=bool)

    xs, js, ks, blocks = [], [], [], []
    matched = 0
    pb = pa = 0
    for di, t0 in enumerate(td):
        while pb < nb and tb[pb] < t0 - w:
            pb += 1
        while pa < na and ta[pa] < t0 - w:
            pa += 1
        if pb < nb and tb[pb] <= t0 + w and pa < na and ta[pa] <= t0 + w:
            used_d[di] = True
            used_b[pb] = True
            used_a[pa] = True
            xs.append(xd[di])
            js.append(cb[pb] - 1)
            ks.append(ca[pa] - 5)
            if spacing_ns is not None and block_size is not None:
                blocks.append(t0 // (int(spacing_ns) * int(block_size)))
            elif block_size is not None:
                blocks.append(matched // int(block_size))
            else:
                blocks.append(0)
            matched += 1
            pb += 1
            pa += 1

    orphan_pos = np.concatenate(
        [d0_pos[~used_d], b_pos[~used_b], a_pos[~used_a]]
    ).astype(np.int64)
    orphan_pos.sort()
    by_detector: dict = {}
    for code in codes[orphan_pos]:
        label = DETECTOR_LABELS[int(code)]
        by_detector[label] = by_detector.get(label, 0) + 1
    report = OrphanReport(
        total=int(orphan_pos.size),
        by_detector=by_detector,
        event_ids=stream.event_id[orphan_pos],
    )
    batch = TripleBatch(
        triple_id=np.arange(matched, dtype=np.int64),
        x_bin=np.array(xs, dtype=np.int64),
        babu=np.array(js, dtype=np.int64),
        alisha=np.array(ks, dtype=np.int64),
        block_index=np.array(blocks, dtype=np.int64),
    )
    return batch, report


# ---------------------------------------------------------------------------
# Text formats.  '#'-prefixed key=value header, then one record per line.
# Integers and fixed labels only, so identical runs are byte-identical.
# ---------------------------------------------------------------------------

_HEADER_KEYS = (
    "seed",
    "config_digest",
    "coincidence_window_ns",
    "rng_algorithm",
    "bits",
    "block_size",
    "spacing_ns",
    "n_triples",
    "n_bins",
)


def _header_lines(header: SimStreamHeader, kind: str, n_rows: int) -> list[str]:
    from . import __version__

    lines = [f"# qeraser-{kind} v1", f"# tool_version={__version__}"]
    for key in _HEADER_KEYS:
        lines.append(f"# {key}={getattr(header, key)}")
    lines.append(f"# n_rows={n_rows}")
    return lines


def _parse_header(fh) -> tuple[dict, list[str]]:
    """Read leading '#' lines; returns (key->value, remaining data lines)."""
    meta: dict = {}
    data: list[str] = []
    for raw in fh:
        line = raw.rstrip("\n")
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        if line:
            data.append(line)
    return meta, data


def _header_from_meta(meta: dict) -> SimStreamHeader:
    try:
        return SimStreamHeader(
            seed=int(meta["seed"]),
            config_digest=meta["config_digest"],
            coincidence_window_ns=int(meta["coincidence_window_ns"]),
            rng_algorithm=meta["rng_algorithm"],
            bits=meta["bits"],
            block_size=int(meta["block_size"]),
            spacing_ns=int(meta["spacing_ns"]),
            n_triples=int(meta["n_triples"]),
            n_bins=int(meta["n_bins"]),
        )
    except KeyError as exc:
        raise ValueError(f"stream header missing field {exc}") from exc


def write_event_log(path, stream: EventStream, header: SimStreamHeader) -> None:
    lines = _header_lines(header, "event-log", len(stream))
    lines.append("# columns=event_id,detector,time_ns,x_bin")
    ids = stream.event_id.tolist()
    det = stream.detector.tolist()
    ts = stream.time_ns.tolist()
    xs = stream.x_bin.tolist()
    for i in range(len(ids)):
        x = str(xs[i]) if det[i] == CODE_D0 else ""
        lines.append(f"{ids[i]},{DETECTOR_LABELS[det[i]]},{ts[i]},{x}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_event_log(path) -> tuple[EventStream, SimStreamHeader]:
    with open(path, "r", encoding="utf-8") as fh:
        meta, data = _parse_header(fh)
    header = _header_from_meta(meta)
    declared = int(meta.get("n_rows", -1))
    if declared != len(data):
        raise ValueError(
            f"event log declares {declared} rows but contains {len(data)}; "
            "file is truncated or corrupt"
        )
    ids, det, ts, xs = [], [], [], []
    for line in data:
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"malformed event row: {line!r}")
        code = _CODE_BY_LABEL.get(parts[1])
        if code is None:
            raise ValueError(f"unknown detector {parts[1]!r}")
        has_x = parts[3] != ""
        if has_x != (code == CODE_D0):
            raise ValueError(f"x_bin presence inconsistent with detector: {line!r}")
        ids.append(int(parts[0]))
        det.append(code)
        ts.append(int(parts[2]))
        xs.append(int(parts[3]) if has_x else -1)
    stream = EventStream(
        event_id=ids, detector=det, time_ns=ts, x_bin=xs, n_bins=header.n_bins
    )
    return stream, header


def write_triples(path, batch: TripleBatch, header: SimStreamHeader) -> None:
    lines = _header_lines(header, "triples", len(batch))
    lines.append("# columns=triple_id,block_index,x_bin,babu,alisha")
    tid = batch.triple_id.tolist()
    blk = batch.block_index.tolist()
    xb = batch.x_bin.tolist()
    jj = batch.babu.tolist()
    kk = batch.alisha.tolist()
    for i in range(len(tid)):
        lines.append(
            f"{tid[i]},{blk[i]},{xb[i]},{BABU_LABELS[jj[i]]},{ALISHA_LABELS[kk[i]]}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_triples(path) -> tuple[TripleBatch, SimStreamHeader]:
    with open(path, "r", encoding="utf-8") as fh:
        meta, data = _parse_header(fh)
    header = _header_from_meta(meta)
    declared = int(meta.get("n_rows", -1))
    if declared != len(data):
        raise ValueError(
            f"triples file declares {declared} rows but contains {len(data)}; "
            "file is truncated or corrupt"
        )
    babu_code = {label: i for i, label in enumerate(BABU_LABELS)}
    alisha_code = {label: i for i, label in enumerate(ALISHA_LABELS)}
    tid, blk, xb, jj, kk = [], [], [], [], []
    for line in data:
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"malformed triple row: {line!r}")
        if parts[3] not in babu_code or parts[4] not in alisha_code:
            raise ValueError(f"unknown outcome labels in row: {line!r}")
        tid.append(int(parts[0]))
        blk.append(int(parts[1]))
        xb.append(int(parts[2]))
        jj.append(babu_code[parts[3]])
        kk.append(alisha_code[parts[4]])
    batch = TripleBatch(triple_id=tid, x_bin=xb, babu=jj, alisha=kk, block_index=blk)
    return batch, header
