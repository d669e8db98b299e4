"""Staged execution: source -> track -> swap -> sink over bounded FIFO queues.

Each stage runs in its own thread and talks to its neighbours only through a
queue of ``queue_capacity`` slots.  In ``live`` mode a full queue sheds its
oldest frame; in ``deterministic`` mode producers block, nothing is dropped,
and the outputs are a pure function of (seed, inputs).  The sink applies the
contingency delay and stamps completion times for the latency report.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import formats
from .compositor import DEFAULT_FEATHER, composite, match_illumination
from .errors import EmptyInput, EmptyOutput, InvalidArgument, SourceExhausted, StageFailure
from .facebank import FaceBank, replacement_for
from .geometry import CameraModel, PoseState
from .tracker import SparseTemplate, TrackerConfig, init_particles, track_frame

logger = logging.getLogger(__name__)

LIVE = "live"
DETERMINISTIC = "deterministic"
STAGES = ("source", "track", "swap", "sink")

_END = object()
_POLL_S = 0.05


@dataclass
class FrameMsg:
    frame_index: int
    capture_timestamp: int  # time.monotonic_ns()
    image: np.ndarray
    pose: Optional[PoseState] = None
    status: Optional[str] = None
    output: Optional[np.ndarray] = None
    stage_ns: dict = field(default_factory=dict)
    done_timestamp: Optional[int] = None

    @property
    def latency_ms(self) -> Optional[float]:
        if self.done_timestamp is None:
            return None
        return (self.done_timestamp - self.capture_timestamp) / 1e6


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = DETERMINISTIC
    queue_capacity: int = 2
    delay_frames: int = 0
    track: bool = True
    swap: bool = True
    seed: int = 0
    feather: int = DEFAULT_FEATHER
    blend: bool = False
    fps: Optional[float] = None  # source pacing; None emits as fast as the queue allows
    sequential: bool = False  # deterministic mode only: run every stage on the caller's thread
    tracker: TrackerConfig = TrackerConfig()
    initial_pose: PoseState = PoseState()

    def __post_init__(self):
        if self.mode not in (LIVE, DETERMINISTIC):
            raise InvalidArgument(f"mode must be {LIVE!r} or {DETERMINISTIC!r}, got {self.mode!r}")
        if self.queue_capacity < 1:
            raise InvalidArgument("queue_capacity must be >= 1")
        if self.delay_frames < 0:
            raise InvalidArgument("delay_frames must be >= 0")
        if self.sequential and self.mode == LIVE:
            raise InvalidArgument("sequential execution is only defined for deterministic mode")


@dataclass
class LatencyReport:
    samples_ms: list
    mean_ms: float
    p50_ms: float
    p95_ms: float
    max_ms: float
    frames: int
    dropped: int = 0

    def to_json(self) -> dict:
        return {
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "max_ms": self.max_ms,
            "frames": self.frames,
            "dropped": self.dropped,
        }


def nearest_rank(sorted_values, pct: float) -> float:
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def measure_latency(samples, dropped: int = 0) -> LatencyReport:
    """Summarize ``(capture_ns, done_ns)`` pairs; percentiles are nearest-rank."""
    samples = list(samples)
    if not samples:
        raise EmptyInput("no latency samples")
    ms = []
    for capture, done in samples:
        if done < capture:
            raise InvalidArgument(f"completion {done} precedes capture {capture}")
        ms.append((done - capture) / 1e6)
    ordered = sorted(ms)
    return LatencyReport(
        samples_ms=ms,
        mean_ms=sum(ms) / len(ms),
        p50_ms=nearest_rank(ordered, 50),
        p95_ms=nearest_rank(ordered, 95),
        max_ms=ordered[-1],
        frames=len(ms),
        dropped=dropped,
    )


class DelayLine:
    """d-frame delay; before d frames have arrived the first frame is repeated."""

    def __init__(self, d: int):
        if d < 0:
            raise InvalidArgument(f"delay must be >= 0, got {d}")
        self.d = d
        self._buf = deque(maxlen=d + 1)
        self._first = None

    def push(self, item):
        if self._first is None:
            self._first = item
        self._buf.append(item)
        if len(self._buf) <= self.d:
            return self._first
        return self._buf[0]


def delay_buffer(stream: Iterable[FrameMsg], d: int):
    """Yield the stream delayed by ``d`` frames.

    Output slot ``k`` keeps slot ``k``'s index and capture time but carries the
    image, pose and composite of input ``k - d`` (input 0 during warm-up).
    """
    line = DelayLine(d)
    for msg in stream:
        src = line.push(msg)
        yield _delayed(msg, src)


def _delayed(slot: FrameMsg, src: FrameMsg) -> FrameMsg:
    if src is slot:
        return slot
    return dataclasses.replace(
        src,
        frame_index=slot.frame_index,
        capture_timestamp=slot.capture_timestamp,
        stage_ns=dict(slot.stage_ns),
        done_timestamp=slot.done_timestamp,
    )


# -- sources -------------------------------------------------------------------


class FrameSource:
    """Frame provider; ``read`` raises SourceExhausted at end of stream."""

    def read(self) -> np.ndarray:
        raise NotImplementedError


class IterableSource(FrameSource):
    def __init__(self, frames: Iterable[np.ndarray]):
        self._it = iter(frames)

    def read(self) -> np.ndarray:
        try:
            return next(self._it)
        except StopIteration:
            raise SourceExhausted() from None


class DirectorySource(FrameSource):
    """Reads ``frame_%06d.ppm`` files in index order."""

    def __init__(self, directory):
        self._paths = iter(formats.list_frames(directory))

    def read(self) -> np.ndarray:
        try:
            path = next(self._paths)
        except StopIteration:
            raise SourceExhausted() from None
        return formats.read_image(path)


def as_source(source) -> FrameSource:
    if isinstance(source, FrameSource):
        return source
    if isinstance(source, (str, Path)):
        return DirectorySource(source)
    return IterableSource(source)


# -- queues --------------------------------------------------------------------


class DropOldestQueue:
    """Bounded FIFO that evicts its oldest item instead of blocking when full."""

    def __init__(self, capacity: int):
        self._items = deque()
        self._capacity = capacity
        self._cond = threading.Condition()
        self.dropped = 0

    def put(self, item, stop: threading.Event) -> None:
        with self._cond:
            # The end marker is always the last item put; it must not displace a frame.
            if item is not _END and len(self._items) >= self._capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self._cond.notify()

    def get(self, stop: threading.Event):
        with self._cond:
            while not self._items:
                if stop.is_set():
                    return _END
                self._cond.wait(_POLL_S)
            return self._items.popleft()


class BlockingQueue:
    """Bounded FIFO whose producers wait for space (lossless)."""

    dropped = 0

    def __init__(self, capacity: int):
        self._q = queue.Queue(maxsize=capacity)

    def put(self, item, stop: threading.Event) -> None:
        while True:
            try:
                self._q.put(item, timeout=_POLL_S)
                return
            except queue.Full:
                if stop.is_set():
                    return

    def get(self, stop: threading.Event):
        while True:
            try:
                return self._q.get(timeout=_POLL_S)
            except queue.Empty:
                if stop.is_set():
                    return _END


# -- stages --------------------------------------------------------------------


class TrackStage:
    """Owns the particle set; nothing else ever touches it."""

    def __init__(self, tmpl: SparseTemplate, cam: CameraModel, cfg: PipelineConfig):
        self.tmpl = tmpl
        self.cam = cam
        self.cfg = cfg
        self.particles = init_particles(cfg.initial_pose, cfg.tracker, cfg.seed)

    def __call__(self, msg: FrameMsg) -> FrameMsg:
        if not self.cfg.track:
            return msg
        result = track_frame(self.particles, msg.image, self.tmpl, self.cfg.tracker, self.cam)
        self.particles = result.particles
        msg.pose = result.pose
        msg.status = result.status
        return msg


class SwapStage:
    def __init__(self, bank: Optional[FaceBank], cam: CameraModel, cfg: PipelineConfig):
        self.bank = bank
        self.cam = cam
        self.cfg = cfg

    def __call__(self, msg: FrameMsg) -> FrameMsg:
        if not self.cfg.swap or msg.pose is None or self.bank is None:
            msg.output = msg.image
            return msg
        try:
            image, mask, alpha_bank = replacement_for(self.bank, msg.pose, self.cam, self.cfg.blend)
        except EmptyOutput:
            logger.debug("frame %d: replacement leaves the image, passing through", msg.frame_index)
            msg.output = msg.image
            return msg
        image = match_illumination(image, msg.pose.alpha, alpha_bank)
        msg.output = composite(msg.image, image, mask, self.cfg.feather)
        return msg


class SinkStage:
    def __init__(self, cfg: PipelineConfig, on_output: Optional[Callable[[FrameMsg], None]] = None):
        self.delay = DelayLine(cfg.delay_frames)
        self.on_output = on_output
        self.outputs: list[FrameMsg] = []
        self.trace: list[tuple[int, Optional[PoseState], Optional[str]]] = []

    def __call__(self, msg: FrameMsg) -> FrameMsg:
        self.trace.append((msg.frame_index, msg.pose, msg.status))
        out = _delayed(msg, self.delay.push(msg))
        if self.on_output is not None:
            self.on_output(out)
        return out

    def finish(self, msg: FrameMsg, out: FrameMsg) -> None:
        out.done_timestamp = time.monotonic_ns()
        msg.done_timestamp = out.done_timestamp
        self.outputs.append(out)


@dataclass
class PipelineResult:
    outputs: list  # FrameMsg per displayed slot, in order
    trace: list  # (frame_index, pose, status) per tracked frame
    report: LatencyReport

    @property
    def poses(self) -> list:
        return [p for _, p, _ in self.trace]

    @property
    def statuses(self) -> list:
        return [s for _, _, s in self.trace]


def _timed(stage: str, fn, msg: FrameMsg) -> FrameMsg:
    t0 = time.monotonic_ns()
    out = fn(msg)
    out.stage_ns[stage] = time.monotonic_ns() - t0
    return out


def run_pipeline(
    source,
    tmpl: SparseTemplate,
    bank: Optional[FaceBank],
    cam: CameraModel,
    cfg: PipelineConfig = PipelineConfig(),
    on_output: Optional[Callable[[FrameMsg], None]] = None,
) -> PipelineResult:
    """Run the four-stage pipeline until the source is exhausted.

    Raises StageFailure wrapping the first error raised inside a stage.
    """
    source = as_source(source)
    track = TrackStage(tmpl, cam, cfg)
    swap = SwapStage(bank, cam, cfg)
    sink = SinkStage(cfg, on_output)
    if cfg.mode == DETERMINISTIC and cfg.sequential:
        dropped = _run_sequential(source, track, swap, sink, cfg)
    else:
        dropped = _run_threaded(source, track, swap, sink, cfg)
    samples = [(m.capture_timestamp, m.done_timestamp) for m in sink.outputs]
    report = measure_latency(samples, dropped) if samples else LatencyReport([], 0.0, 0.0, 0.0, 0.0, 0, dropped)
    return PipelineResult(sink.outputs, sink.trace, report)


class _Pacer:
    def __init__(self, fps: Optional[float]):
        self.interval = None if not fps else int(1e9 / fps)
        self.next_tick = None

    def wait(self):
        if self.interval is None:
            return
        now = time.monotonic_ns()
        if self.next_tick is None:
            self.next_tick = now
        elif self.next_tick > now:
            time.sleep((self.next_tick - now) / 1e9)
        self.next_tick += self.interval


def _read(source: FrameSource, index: int, pacer: _Pacer) -> Optional[FrameMsg]:
    pacer.wait()
    t0 = time.monotonic_ns()
    try:
        image = source.read()
    except SourceExhausted:
        return None
    msg = FrameMsg(index, t0, image)
    msg.stage_ns["source"] = time.monotonic_ns() - t0
    return msg


def _run_sequential(source, track, swap, sink, cfg) -> int:
    pacer = _Pacer(cfg.fps)
    index = 0
    while True:
        try:
            msg = _read(source, index, pacer)
        except Exception as exc:
            raise StageFailure("source", exc) from exc
        if msg is None:
            return 0
        for name, fn in (("track", track), ("swap", swap)):
            try:
                msg = _timed(name, fn, msg)
            except Exception as exc:
                raise StageFailure(name, exc) from exc
        try:
            out = _timed("sink", sink, msg)
        except Exception as exc:
            raise StageFailure("sink", exc) from exc
        sink.finish(msg, out)
        index += 1


def _run_threaded(source, track, swap, sink, cfg) -> int:
    make_queue = DropOldestQueue if cfg.mode == LIVE else BlockingQueue
    queues = [make_queue(cfg.queue_capacity) for _ in range(3)]
    stop = threading.Event()
    failures: list[StageFailure] = []
    pacer = _Pacer(cfg.fps)

    def fail(stage, exc):
        failures.append(StageFailure(stage, exc))
        stop.set()

    def source_worker():
        index = 0
        try:
            while not stop.is_set():
                msg = _read(source, index, pacer)
                if msg is None:
                    break
                queues[0].put(msg, stop)
                index += 1
        except Exception as exc:
            fail("source", exc)
        finally:
            queues[0].put(_END, stop)

    def stage_worker(name, fn, q_in, q_out):
        try:
            while True:
                msg = q_in.get(stop)
                if msg is _END:
                    break
                q_out.put(_timed(name, fn, msg), stop)
        except Exception as exc:
            fail(name, exc)
        finally:
            q_out.put(_END, stop)

    def sink_worker():
        try:
            while True:
                msg = queues[2].get(stop)
                if msg is _END:
                    break
                out = _timed("sink", sink, msg)
                sink.finish(msg, out)
        except Exception as exc:
            fail("sink", exc)

    threads = [
        threading.Thread(target=source_worker, name="source", daemon=True),
        threading.Thread(target=stage_worker, args=("track", track, queues[0], queues[1]), name="track", daemon=True),
        threading.Thread(target=stage_worker, args=("swap", swap, queues[1], queues[2]), name="swap", daemon=True),
        threading.Thread(target=sink_worker, name="sink", daemon=True),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]
    return sum(q.dropped for q in queues)
