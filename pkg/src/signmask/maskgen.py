"""Mask-plan generation: tube/random baselines, directional hand-arm
strategies, temporal windows, and ratio alignment.

Determinism contract: a plan is a pure function of (inputs, config, seed).
Seeds split per clip and per stream: clip_seed = corpus_seed XOR
blake2b-64(clip_id), stream_seed = clip_seed XOR a fixed stream tag. The
draw order inside each strategy is frozen (branch draw, then alignment
draws) and is part of the file-format contract, as is the generator itself
(see _kernels). Counts derived from fractions always round half up.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import SplitMix64, align_masked_array, sample_without_replacement
from .config import PipelineConfig
from .errors import EmptyRegions, SchemaViolation
from .geometry import Handedness, classify_handedness, overlap_ratio
from .ingest import ClipBundle
from .patchgrid import RegionTokens, TokenGrid, build_grid, region_tokens

SMSK_MAGIC = b"SMSK"
SMSK_VERSION = 1

STREAMS = ("video-tube", "video-st", "keypoint-st")

# Stream tags are arbitrary fixed 64-bit constants XORed into the clip seed
# so the three streams draw independent but reproducible sequences.
STREAM_TAGS = {
    "video-tube": 0xB6FEEE30924192F2,
    "video-st": 0xD3F04BE34E99663A,
    "keypoint-st": 0xE9820CEB42D8B696,
}

DIRECTIONS = ("top", "bottom", "left", "right")
_DIRECTION_CODES = {"top": 0, "bottom": 1, "left": 2, "right": 3}
_CODE_DIRECTIONS = {v: k for k, v in _DIRECTION_CODES.items()}
_NO_DIRECTION = 255
_NO_WINDOW = 0xFFFF


class Strategy(enum.IntEnum):
    RANDOM = 0
    TUBE = 1
    ST_HAND_ARM = 2
    ST_HAND_ONLY = 3


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def derive_clip_seed(corpus_seed: int, clip_id: str) -> int:
    """Per-clip seed: corpus seed XOR a 64-bit digest of the clip id."""
    digest = hashlib.blake2b(clip_id.encode("utf-8"), digest_size=8).digest()
    return (corpus_seed ^ int.from_bytes(digest, "little")) & ((1 << 64) - 1)


def stream_seed(clip_seed: int, stream: str) -> int:
    return (clip_seed ^ STREAM_TAGS[stream]) & ((1 << 64) - 1)


@dataclass(frozen=True)
class MaskPlan:
    """A visible/masked partition of the token lattice plus decoder targets.

    ratio is the achieved masked fraction |masked| / N. direction and side
    record which branch the strategy took; window is the (start, length)
    tube-frame interval fully masked by the temporal stage. align_steps
    counts single-token alignment moves (diagnostic; not serialized).
    """

    dims: tuple[int, int, int]
    strategy: Strategy
    visible: frozenset
    masked: frozenset
    decoder_targets: frozenset
    ratio: float
    seed: int
    direction: str | None = None
    window: tuple[int, int] | None = None
    side: str | None = None
    align_steps: int = 0

    @property
    def total(self) -> int:
        t, gh, gw = self.dims
        return t * gh * gw

    def validate(self, regions: RegionTokens | None = None):
        """Check the partition and containment invariants.

        With regions supplied, also checks the strategy-specific decoder
        restriction (hand-arm for ST_HAND_ARM, hands for ST_HAND_ONLY).
        """
        n = self.total
        if self.visible & self.masked:
            raise SchemaViolation("visible and masked overlap")
        if len(self.visible) + len(self.masked) != n:
            raise SchemaViolation("visible and masked do not partition the grid")
        if self.masked and (min(self.masked) < 0 or max(self.masked) >= n):
            raise SchemaViolation("masked index out of range")
        if not self.decoder_targets <= self.masked:
            raise SchemaViolation("decoder targets escape the masked set")
        if len(self.masked) != round_half_up(self.ratio * n):
            raise SchemaViolation("achieved ratio disagrees with masked count")
        if regions is not None:
            if self.strategy == Strategy.ST_HAND_ARM:
                if not self.decoder_targets <= regions.hand_arm:
                    raise SchemaViolation("decoder targets escape hand-arm")
            elif self.strategy == Strategy.ST_HAND_ONLY:
                if not self.decoder_targets <= regions.hands:
                    raise SchemaViolation("decoder targets escape hands")

    def to_bytes(self) -> bytes:
        t, gh, gw = self.dims
        if self.window is None:
            wstart, wlen = _NO_WINDOW, 0
        else:
            wstart, wlen = self.window
        header = struct.pack(
            "<4sHBHHHHQBHH",
            SMSK_MAGIC, SMSK_VERSION, int(self.strategy), t, gh, gw,
            round_half_up(self.ratio * 10000.0), self.seed,
            _NO_DIRECTION if self.direction is None
            else _DIRECTION_CODES[self.direction],
            wstart, wlen)
        parts = [header]
        for indices in (self.masked, self.decoder_targets):
            arr = np.array(sorted(indices), dtype="<u4")
            parts.append(struct.pack("<I", arr.size))
            parts.append(arr.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MaskPlan":
        if len(data) < 28 or data[:4] != SMSK_MAGIC:
            raise SchemaViolation("mask plan: bad magic")
        (_, version, strat, t, gh, gw, ratio_fp, seed, dcode,
         wstart, wlen) = struct.unpack_from("<4sHBHHHHQBHH", data, 0)
        if version != SMSK_VERSION:
            raise SchemaViolation(f"mask plan: unsupported version {version}")
        n = t * gh * gw
        offset = 28
        lists = []
        for _ in range(2):
            if len(data) < offset + 4:
                raise SchemaViolation("mask plan: truncated index list")
            (count,) = struct.unpack_from("<I", data, offset)
            offset += 4
            end = offset + 4 * count
            if len(data) < end:
                raise SchemaViolation("mask plan: truncated index list")
            arr = np.frombuffer(data, dtype="<u4", count=count, offset=offset)
            offset += 4 * count
            if count and int(arr.max()) >= n:
                raise SchemaViolation("mask plan: index out of range")
            lists.append(frozenset(arr.tolist()))
        masked, decoder = lists
        visible = frozenset(range(n)) - masked
        return cls(
            dims=(t, gh, gw),
            strategy=Strategy(strat),
            visible=visible,
            masked=masked,
            decoder_targets=decoder,
            ratio=ratio_fp / 10000.0,
            seed=seed,
            direction=_CODE_DIRECTIONS.get(dcode),
            window=None if wstart == _NO_WINDOW else (wstart, wlen),
        )

    def to_text(self) -> str:
        """Lossless line-oriented rendering for debugging."""
        t, gh, gw = self.dims
        lines = [
            f"strategy={self.strategy.name}",
            f"dims={t},{gh},{gw}",
            f"ratio={self.ratio!r}",
            f"seed={self.seed}",
            f"direction={self.direction or 'none'}",
            f"side={self.side or 'none'}",
            "window=none" if self.window is None
            else f"window={self.window[0]},{self.window[1]}",
            f"align_steps={self.align_steps}",
            f"masked={len(self.masked)}",
        ]
        lines.extend(str(i) for i in sorted(self.masked))
        lines.append(f"decoder={len(self.decoder_targets)}")
        lines.extend(str(i) for i in sorted(self.decoder_targets))
        return "\n".join(lines) + "\n"


def _sets_from_array(arr: np.ndarray) -> tuple[frozenset, frozenset]:
    masked = frozenset(np.nonzero(arr)[0].tolist())
    visible = frozenset(np.nonzero(arr == 0)[0].tolist())
    return visible, masked


def _masked_array(grid: TokenGrid, masked: set) -> np.ndarray:
    arr = np.zeros(grid.total, dtype=np.uint8)
    if masked:
        arr[np.fromiter(masked, dtype=np.int64, count=len(masked))] = 1
    return arr


def random_mask(grid: TokenGrid, ratio: float, seed: int) -> MaskPlan:
    """Mask round(ratio * N) tokens uniformly without replacement."""
    rng = SplitMix64(seed)
    m = round_half_up(ratio * grid.total)
    idx = sample_without_replacement(grid.total, m, rng)
    arr = np.zeros(grid.total, dtype=np.uint8)
    arr[idx] = 1
    visible, masked = _sets_from_array(arr)
    return MaskPlan(
        dims=grid.dims, strategy=Strategy.RANDOM, visible=visible,
        masked=masked, decoder_targets=masked,
        ratio=len(masked) / grid.total, seed=seed)


def tube_mask(grid: TokenGrid, ratio: float, seed: int) -> MaskPlan:
    """Mask round(ratio * Gh * Gw) spatial cells across every tube-frame."""
    rng = SplitMix64(seed)
    m_cells = round_half_up(ratio * grid.plane)
    cells = sample_without_replacement(grid.plane, m_cells, rng)
    arr = np.zeros(grid.total, dtype=np.uint8)
    arr.reshape(grid.tube_frames, grid.plane)[:, cells] = 1
    visible, masked = _sets_from_array(arr)
    return MaskPlan(
        dims=grid.dims, strategy=Strategy.TUBE, visible=visible,
        masked=masked, decoder_targets=masked,
        ratio=len(masked) / grid.total, seed=seed)


def _perp(direction: str, r: int, c: int) -> int:
    # Distance rank toward the chosen side: smaller sorts first.
    if direction == "top":
        return r
    if direction == "bottom":
        return -r
    if direction == "left":
        return c
    return -c


def _near_half_per_frame(grid: TokenGrid, tokens, direction: str) -> set:
    """Per tube-frame, the ceil(n/2) tokens nearest the chosen side.

    Ordering is by perpendicular coordinate, ties broken by (r, c).
    """
    by_frame: dict[int, list] = {}
    for tok in tokens:
        t, r, c = grid.coords(tok)
        by_frame.setdefault(t, []).append((tok, r, c))
    chosen = set()
    for entries in by_frame.values():
        entries.sort(key=lambda e: (_perp(direction, e[1], e[2]), e[1], e[2]))
        take = (len(entries) + 1) // 2
        chosen.update(e[0] for e in entries[:take])
    return chosen


def _near_half_global(grid: TokenGrid, tokens, direction: str) -> tuple[set, set]:
    """Clip-wide split of tokens into (nearest ceil(n/2), farthest floor(n/2)).

    Ties broken by (r, c, t).
    """
    entries = []
    for tok in tokens:
        t, r, c = grid.coords(tok)
        entries.append((tok, t, r, c))
    entries.sort(key=lambda e: (_perp(direction, e[2], e[3]), e[2], e[3], e[1]))
    take = (len(entries) + 1) // 2
    near = {e[0] for e in entries[:take]}
    far = {e[0] for e in entries[take:]}
    return near, far


def _upper_arm_tokens(grid: TokenGrid, arm_tokens) -> set:
    """Arm tokens at or above the arm's per-tube-frame row midpoint."""
    coords = [(tok, *grid.coords(tok)) for tok in arm_tokens]
    lo: dict[int, int] = {}
    hi: dict[int, int] = {}
    for _, t, r, _ in coords:
        lo[t] = r if t not in lo else min(lo[t], r)
        hi[t] = r if t not in hi else max(hi[t], r)
    return {tok for tok, t, r, _ in coords
            if r <= (lo[t] + hi[t]) / 2.0}


def _temporal_window(grid: TokenGrid, fraction: float) -> tuple[int, int]:
    k = max(1, round_half_up(fraction * grid.tube_frames))
    start = (grid.tube_frames - k) // 2
    return start, k


def _window_token_range(grid: TokenGrid, window: tuple[int, int]) -> range:
    start, length = window
    return range(start * grid.plane, (start + length) * grid.plane)


def temporal_mask(plan: MaskPlan, grid: TokenGrid,
                  cfg: PipelineConfig) -> MaskPlan:
    """Mask every token in the mid-sequence tube-frame window.

    The window is a pure function of the grid and config (no draws), so
    this stage consumes no randomness.
    """
    window = _temporal_window(grid, cfg.temporal_mask_fraction)
    masked = set(plan.masked)
    masked.update(_window_token_range(grid, window))
    visible = frozenset(range(grid.total)) - masked
    return replace(plan, visible=visible, masked=frozenset(masked),
                   ratio=len(masked) / grid.total, window=window)


def _align_into(grid: TokenGrid, masked: set, window: tuple[int, int] | None,
                decoder: frozenset, target: int,
                rng: SplitMix64) -> tuple[frozenset, frozenset, int]:
    """Run the alignment kernel; returns (visible, masked, steps)."""
    arr = _masked_array(grid, masked)
    warr = np.zeros(grid.total, dtype=np.uint8)
    if window is not None:
        warr[_window_token_range(grid, window)] = 1
    darr = _masked_array(grid, set(decoder))
    steps = align_masked_array(arr, warr, darr, grid.dims, target, rng)
    visible_set, masked_set = _sets_from_array(arr)
    return visible_set, masked_set, steps


def align_ratio(plan: MaskPlan, grid: TokenGrid, ratio: float,
                seed: int) -> MaskPlan:
    """Grow or shrink the masked set to exactly round(ratio * N) tokens.

    Growth masks uniformly chosen visible tokens bordering the masked set
    (any visible token when none border it). Shrinkage unmasks masked
    tokens bordering the visible set, falling back to non-decoder-target
    tokens outside the temporal window, then to any masked token. One
    token moves per step, so the loop takes exactly |count - target| steps.
    """
    rng = SplitMix64(seed)
    target = round_half_up(ratio * grid.total)
    visible, masked, steps = _align_into(
        grid, set(plan.masked), plan.window, plan.decoder_targets, target, rng)
    return replace(
        plan, visible=visible, masked=masked,
        decoder_targets=plan.decoder_targets & masked,
        ratio=len(masked) / grid.total,
        align_steps=plan.align_steps + steps)


def running_cell_decoder_subset(plan: MaskPlan) -> frozenset:
    """Regularly spaced half of the visible tokens: even (t + r + c) parity."""
    _, gh, gw = plan.dims
    plane = gh * gw
    out = set()
    for tok in plan.visible:
        t, rc = divmod(tok, plane)
        r, c = divmod(rc, gw)
        if (t + r + c) % 2 == 0:
            out.add(tok)
    return frozenset(out)


def _finish_st(grid: TokenGrid, cfg: PipelineConfig, seed: int,
               strategy: Strategy, initial_masked: set,
               decoder_pool: frozenset, rng: SplitMix64,
               direction: str | None, side: str | None) -> MaskPlan:
    """Shared tail of both ST strategies: temporal window, then alignment."""
    window = _temporal_window(grid, cfg.temporal_mask_fraction)
    initial_masked.update(_window_token_range(grid, window))
    decoder = frozenset(decoder_pool & initial_masked)
    target = round_half_up(cfg.mask_ratio * grid.total)
    visible, masked, steps = _align_into(
        grid, initial_masked, window, decoder, target, rng)
    return MaskPlan(
        dims=grid.dims, strategy=strategy, visible=visible, masked=masked,
        decoder_targets=decoder & masked, ratio=len(masked) / grid.total,
        seed=seed, direction=direction, window=window, side=side,
        align_steps=steps)


def st_mask_two_handed(grid: TokenGrid, regions: RegionTokens,
                       cfg: PipelineConfig, seed: int,
                       strategy: Strategy = Strategy.ST_HAND_ARM) -> MaskPlan:
    """Two-handed strategy.

    When the two sides' regions overlap by more than overlap_threshold,
    draw a direction and mask each tube-frame's hand-token half nearest
    that side; otherwise draw a side, keep that side's non-overlapping
    hand/arm tokens visible, and mask the rest of the hand/arm tokens.
    A temporal window and ratio alignment follow either branch.

    Raises:
        EmptyRegions: the clip has no hand tokens at all.
    """
    if not regions.hands:
        raise EmptyRegions("no hand tokens in clip")
    rng = SplitMix64(seed)
    left = regions.left_hand | regions.left_arm
    right = regions.right_hand | regions.right_arm
    if overlap_ratio(left, right) > cfg.overlap_threshold:
        direction = DIRECTIONS[rng.randbelow(4)]
        masked = _near_half_per_frame(grid, regions.hands, direction)
        side = None
    else:
        direction = None
        side = ("left", "right")[rng.randbelow(2)]
        reserved = (left if side == "left" else right) - (left & right)
        masked = set(regions.hand_arm - reserved)
    return _finish_st(grid, cfg, seed, strategy, masked, regions.hand_arm,
                      rng, direction, side)


def st_mask_one_handed(grid: TokenGrid, regions: RegionTokens,
                       moving_side: str, cfg: PipelineConfig, seed: int,
                       strategy: Strategy = Strategy.ST_HAND_ARM) -> MaskPlan:
    """One-handed strategy.

    Keeps the moving arm's upper-portion tokens and the moving-hand half
    farthest from a drawn direction; everything else in the hand/arm
    regions starts masked (the static side is alignment filler). Temporal
    window and ratio alignment follow.

    Raises:
        EmptyRegions: the moving side has no hand tokens.
    """
    hand = regions.side_hand(moving_side)
    if not hand:
        raise EmptyRegions(f"no {moving_side}-hand tokens in clip")
    rng = SplitMix64(seed)
    direction = DIRECTIONS[rng.randbelow(4)]
    _, far = _near_half_global(grid, hand, direction)
    upper = _upper_arm_tokens(grid, regions.side_arm(moving_side))
    masked = set(regions.hand_arm - (far | upper))
    return _finish_st(grid, cfg, seed, strategy, masked, regions.hand_arm,
                      rng, direction, moving_side)


def _strip_arms(regions: RegionTokens) -> RegionTokens:
    return RegionTokens(left_hand=regions.left_hand,
                        right_hand=regions.right_hand,
                        left_arm=frozenset(), right_arm=frozenset())


def generate_plans(grid: TokenGrid, regions: RegionTokens,
                   handedness: Handedness, cfg: PipelineConfig,
                   clip_seed: int) -> dict[str, MaskPlan]:
    """One plan per stream: video-tube, video-st, keypoint-st.

    The keypoint stream sees hand regions only, so its decoder targets
    stay inside hands. Clips without usable hand regions fall back to the
    tube strategy when the config allows it.
    """
    plans: dict[str, MaskPlan] = {}
    for stream in STREAMS:
        seed = stream_seed(clip_seed, stream)
        if stream == "video-tube":
            plans[stream] = tube_mask(grid, cfg.mask_ratio, seed)
            continue
        if stream == "video-st":
            regs, strat = regions, Strategy.ST_HAND_ARM
        else:
            regs, strat = _strip_arms(regions), Strategy.ST_HAND_ONLY
        try:
            if handedness == Handedness.TWO_HANDED:
                plan = st_mask_two_handed(grid, regs, cfg, seed, strat)
            elif handedness in (Handedness.ONE_HANDED_LEFT,
                                Handedness.ONE_HANDED_RIGHT):
                moving = ("left" if handedness == Handedness.ONE_HANDED_LEFT
                          else "right")
                plan = st_mask_one_handed(grid, regs, moving, cfg, seed, strat)
            else:
                raise EmptyRegions("no moving hands")
        except EmptyRegions:
            if not cfg.nohands_fallback:
                raise
            plan = tube_mask(grid, cfg.mask_ratio, seed)
        plans[stream] = plan
    return plans


def generate(bundle: ClipBundle, cfg: PipelineConfig,
             corpus_seed: int | None = None) -> dict[str, MaskPlan]:
    """Full per-clip pipeline: grid, regions, handedness, then plans.

    The bundle must already be trimmed and cropped to token-ready dims.
    """
    grid = build_grid(bundle.meta)
    regions = region_tokens(grid, bundle.segments,
                            coverage_threshold=cfg.region_coverage_threshold)
    handedness = classify_handedness(bundle.keypoints, cfg)
    seed = cfg.seed if corpus_seed is None else corpus_seed
    return generate_plans(grid, regions, handedness, cfg,
                          derive_clip_seed(seed, bundle.meta.clip_id))
