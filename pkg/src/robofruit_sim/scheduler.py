"""Target ordering policies over detected box centres."""

from __future__ import annotations

from enum import Enum

import numpy as np

from .geometry import Pixel


class EmptyInput(ValueError):
    """Raised when a policy is asked to choose from nothing."""


class SortDirection(str, Enum):
    LEFT_TO_RIGHT = "left_to_right"
    RIGHT_TO_LEFT = "right_to_left"


def min_max_target(centers: list[Pixel]) -> int:
    """Index of the centre whose nearest neighbour is farthest away.

    Picking the most isolated target first reduces the chance of disturbing
    its neighbours.  With a single centre the answer is index 0; ties go to
    the lowest index.

    Raises:
        EmptyInput: on an empty list.
    """
    if not centers:
        raise EmptyInput("no detection centres to schedule")
    if len(centers) == 1:
        return 0
    pts = np.asarray(centers, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    nearest = dist.min(axis=1)
    return int(np.argmax(nearest))


def sort_by_coordinate(centers: list[Pixel],
                       direction: SortDirection = SortDirection.LEFT_TO_RIGHT) -> list[int]:
    """Indices ordered by horizontal image coordinate.

    LEFT_TO_RIGHT sorts ascending in u, RIGHT_TO_LEFT descending.  Ties break
    on v ascending, then on the original index, so the order is total and
    stable.
    """
    if direction is SortDirection.LEFT_TO_RIGHT:
        key = lambda i: (centers[i].u, centers[i].v, i)
    else:
        key = lambda i: (-centers[i].u, centers[i].v, i)
    return sorted(range(len(centers)), key=key)
