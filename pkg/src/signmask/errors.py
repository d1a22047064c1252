"""Exception types shared across the pipeline.

Every error the library raises derives from :class:`SignmaskError` so callers
(CLI workers, bindings) can catch one base type and still tell variants apart.
"""

from __future__ import annotations


class SignmaskError(Exception):
    """Base class for all library errors."""


class SchemaViolation(SignmaskError):
    """Input document violates its schema (bad keypoint count, label code, config key...)."""

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message)
        self.frame_index = frame_index


class MissingFrame(SignmaskError):
    """Frame indices are not contiguous from 0."""

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message)
        self.frame_index = frame_index


class DimensionMismatch(SignmaskError):
    """A grid's dimensions disagree with the clip metadata."""


class EmptyBox(SignmaskError):
    """A bounding box has zero area after clamping to frame bounds."""


class NoBoxes(SignmaskError):
    """No frame carries a signer detection."""


class MissingJoint(SignmaskError):
    """A keypoint required by a geometric predicate is below the presence threshold."""


class EmptyRegions(SignmaskError):
    """A masking strategy found no hand tokens to work with."""


class IndivisibleDims(SignmaskError):
    """Clip dimensions do not divide into whole tube tokens."""


class EmptyClip(SignmaskError):
    """An operation received a clip with no frames."""


class EmptyMask(SignmaskError):
    """The masked-position set of a reconstruction pair is empty."""


class EmptyHandSet(SignmaskError):
    """Loss restriction requested over an empty hand-token set."""


class NonPositiveProbability(SignmaskError):
    """A probability vector entry is zero or negative where log() is required."""


class ShapeMismatch(SignmaskError):
    """Array shapes disagree with the declared fusion/loss contract."""


class MissingBundle(SignmaskError):
    """A preprocessed clip bundle is absent or unreadable."""


class MissingFrames(SignmaskError):
    """A raw-frame dump does not cover the frames a visualization needs."""
