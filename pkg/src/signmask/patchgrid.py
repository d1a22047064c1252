"""Tube-token lattice and semantic region token sets.

A clip is tokenized into tubes of 2 frames x 16 x 16 pixels. Token index
order is t-major: index = t * Gh * Gw + r * Gw + c. Region sets collect the
tokens whose pixel footprint intersects a segmentation class in either of
the token's two frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import IndivisibleDims
from .ingest import (
    ClipMeta,
    LABEL_LEFT_ARM,
    LABEL_LEFT_HAND,
    LABEL_RIGHT_ARM,
    LABEL_RIGHT_HAND,
    SegmentFrame,
)

TUBE_DEPTH = 2
PATCH_SIZE = 16


@dataclass(frozen=True)
class TokenGrid:
    """Token lattice dims: tube_frames x rows x cols."""

    tube_frames: int
    rows: int
    cols: int

    @property
    def plane(self) -> int:
        return self.rows * self.cols

    @property
    def total(self) -> int:
        return self.tube_frames * self.rows * self.cols

    def index(self, t: int, r: int, c: int) -> int:
        return t * self.plane + r * self.cols + c

    def coords(self, index: int) -> tuple[int, int, int]:
        t, rc = divmod(index, self.plane)
        r, c = divmod(rc, self.cols)
        return t, r, c

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.tube_frames, self.rows, self.cols)


def build_grid(meta: ClipMeta) -> TokenGrid:
    """Token grid for a token-ready clip.

    Raises:
        IndivisibleDims: frame count not an even number >= 2, or spatial
            dims not multiples of 16.
    """
    if meta.frame_count < TUBE_DEPTH or meta.frame_count % TUBE_DEPTH:
        raise IndivisibleDims(
            f"frame_count {meta.frame_count} not divisible into 2-frame tubes")
    if meta.height % PATCH_SIZE or meta.width % PATCH_SIZE:
        raise IndivisibleDims(
            f"dims {meta.height}x{meta.width} not divisible into 16x16 patches")
    return TokenGrid(
        tube_frames=meta.frame_count // TUBE_DEPTH,
        rows=meta.height // PATCH_SIZE,
        cols=meta.width // PATCH_SIZE,
    )


@dataclass(frozen=True)
class RegionTokens:
    """Token-index sets per semantic region, with the usual unions."""

    left_hand: frozenset
    right_hand: frozenset
    left_arm: frozenset
    right_arm: frozenset

    @cached_property
    def hands(self) -> frozenset:
        return self.left_hand | self.right_hand

    @cached_property
    def arms(self) -> frozenset:
        return self.left_arm | self.right_arm

    @cached_property
    def hand_arm(self) -> frozenset:
        return self.hands | self.arms

    def side_hand(self, side: str) -> frozenset:
        return self.left_hand if side == "left" else self.right_hand

    def side_arm(self, side: str) -> frozenset:
        return self.left_arm if side == "left" else self.right_arm


def region_tokens(grid: TokenGrid, segments: list[SegmentFrame],
                  coverage_threshold: float = 0.0) -> RegionTokens:
    """Collect tokens touched by each hand/arm class.

    A token joins a region when the class covers at least one pixel of its
    2x16x16 footprint; with a positive coverage_threshold the covered
    fraction of the footprint must reach the threshold instead.
    """
    labels = np.stack([f.labels for f in segments])
    t_frames, h, w = labels.shape
    if (t_frames != grid.tube_frames * TUBE_DEPTH
            or h != grid.rows * PATCH_SIZE or w != grid.cols * PATCH_SIZE):
        raise IndivisibleDims(
            f"segment stack {labels.shape} does not tile grid {grid.dims}")
    cube = labels.reshape(grid.tube_frames, TUBE_DEPTH,
                          grid.rows, PATCH_SIZE, grid.cols, PATCH_SIZE)
    footprint = TUBE_DEPTH * PATCH_SIZE * PATCH_SIZE

    def collect(code: int) -> frozenset:
        counts = (cube == code).sum(axis=(1, 3, 5))
        if coverage_threshold > 0.0:
            hit = counts / footprint >= coverage_threshold
        else:
            hit = counts > 0
        ts, rs, cs = np.nonzero(hit)
        return frozenset(
            (ts * grid.plane + rs * grid.cols + cs).tolist())

    return RegionTokens(
        left_hand=collect(LABEL_LEFT_HAND),
        right_hand=collect(LABEL_RIGHT_HAND),
        left_arm=collect(LABEL_LEFT_ARM),
        right_arm=collect(LABEL_RIGHT_ARM),
    )
