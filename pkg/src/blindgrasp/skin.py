"""Whole-body skin model: pad layout along a stretched arm, contact checks, pad shadows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geometry import Point2, Rect2, inflate_rect, polygons_overlap

FRAME_RATE = 30.0
PAD_COUNT = 10
MIN_PAD_SIDE = 0.12
MAX_PAD_SIDE = 0.40


class SkinLayoutError(ValueError):
    pass


@dataclass(frozen=True)
class ArmPose:
    """Stretched-arm posture: lateral sweep position, tip height, probe position."""

    sweep_x: float
    height: float
    ee_position: Point2


@dataclass(frozen=True)
class PadGeometry:
    pad_id: int
    length_along_arm: float
    width: float
    offset_along_arm: float  # distance of the pad start from the end-effector tip
    min_height_offset: float = 0.0

    @property
    def area(self) -> float:
        return self.length_along_arm * self.width


@dataclass(frozen=True)
class PadProjection:
    pad_id: int
    rect: Rect2
    min_height: float


@dataclass(frozen=True)
class SkinFrame:
    timestamp: float
    in_contact: frozenset


def frame_time(t: float, rate: float = FRAME_RATE) -> float:
    """First skin sampling instant at or after ``t``."""
    k = math.ceil(t * rate - 1e-9)
    return k / rate


class Skin:
    """Ten pads laid end to end along an arm that points in +y from its tip column.

    The arm tip sits at ``(sweep_x, tip_y)`` and the arm extends back toward the base
    (decreasing y). ``pads`` are ordered from the tip.
    """

    def __init__(self, pads: Sequence[PadGeometry], tip_y: float, frame_rate: float = FRAME_RATE):
        self.pads = tuple(pads)
        self.tip_y = tip_y
        self.frame_rate = frame_rate
        validate_layout(self.pads)
        self._by_id = {p.pad_id: p for p in self.pads}

    def pad(self, pad_id: int) -> PadGeometry:
        try:
            return self._by_id[pad_id]
        except KeyError:
            raise KeyError(f"unknown pad id {pad_id}") from None

    def shadow(self, pad_id: int, arm: ArmPose) -> Rect2:
        p = self.pad(pad_id)
        cy = self.tip_y - p.offset_along_arm - 0.5 * p.length_along_arm
        return Rect2((arm.sweep_x, cy), (0.5 * p.width, 0.5 * p.length_along_arm), 0.0)

    def pads_in_contact(self, arm: ArmPose, objects: Iterable) -> frozenset:
        """Pads whose shadow overlaps an object reaching up to the pad's lowest point."""
        objs = list(objects)
        hit = set()
        for p in self.pads:
            pad_low = arm.height + p.min_height_offset
            shadow = None
            for obj in objs:
                if obj.height < pad_low:
                    continue
                if shadow is None:
                    shadow = self.shadow(p.pad_id, arm).corners()
                if polygons_overlap(shadow, obj.polygon()):
                    hit.add(p.pad_id)
                    break
        return frozenset(hit)

    def contact_height(self, sweep_x: float, objects: Iterable) -> tuple[float, frozenset]:
        """Highest tip height at which some pad touches an object, with the touching pads.

        Returns ``(-inf, {})`` if no object lies under any pad.
        """
        best = -math.inf
        pads: set = set()
        arm = ArmPose(sweep_x, 0.0, (sweep_x, self.tip_y))
        objs = list(objects)
        for p in self.pads:
            shadow = self.shadow(p.pad_id, arm).corners()
            for obj in objs:
                if polygons_overlap(shadow, obj.polygon()):
                    h = obj.height - p.min_height_offset
                    if h > best + 1e-12:
                        best, pads = h, {p.pad_id}
                    elif abs(h - best) <= 1e-12:
                        pads.add(p.pad_id)
        return best, frozenset(pads)

    def project_pad(self, pad_id: int, arm: ArmPose, margin: float) -> PadProjection:
        p = self.pad(pad_id)
        rect = inflate_rect(self.shadow(pad_id, arm), margin)
        return PadProjection(pad_id, rect, arm.height + p.min_height_offset)


def validate_layout(pads: Sequence[PadGeometry]) -> None:
    if len(pads) != PAD_COUNT:
        raise SkinLayoutError(f"expected {PAD_COUNT} pads, got {len(pads)}")
    ids = [p.pad_id for p in pads]
    if sorted(ids) != list(range(PAD_COUNT)):
        raise SkinLayoutError("pad ids must be 0..9")
    prev_end = -math.inf
    for p in pads:
        for side in (p.length_along_arm, p.width):
            if not MIN_PAD_SIDE - 1e-12 <= side <= MAX_PAD_SIDE + 1e-12:
                raise SkinLayoutError(f"pad {p.pad_id}: side {side} outside [0.12, 0.40] m")
        if p.offset_along_arm < prev_end - 1e-12:
            raise SkinLayoutError(f"pad {p.pad_id} overlaps the previous pad")
        if p.min_height_offset < 0:
            raise SkinLayoutError(f"pad {p.pad_id}: negative height offset")
        prev_end = p.offset_along_arm + p.length_along_arm


def default_layout() -> list[PadGeometry]:
    """Engineering stand-in: the real pad placement on the arm is not published."""
    sizes = [
        (0.12, 0.12),
        (0.12, 0.12),
        (0.15, 0.14),
        (0.40, 0.15),
        (0.12, 0.15),
        (0.12, 0.15),
        (0.12, 0.14),
        (0.12, 0.13),
        (0.12, 0.12),
        (0.12, 0.12),
    ]
    pads = []
    offset = 0.0
    for i, (length, width) in enumerate(sizes):
        pads.append(PadGeometry(i, length, width, round(offset, 6)))
        offset += length
    return pads
