"""Reference lists, DNN-frame availability and the list update rule."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

DIRECTIONS = ("uni", "bi")
UNI_REFS = 4
BI_REFS = 2  # per list
MAX_DISTANCE = 2


@dataclass(frozen=True)
class Ref:
    poc: int
    frame: Any = None  # YUVFrame; None in pure list-logic tests
    dnn: bool = False  # True for the DNN-generated frame of the current picture


@dataclass(frozen=True)
class RefLists:
    current: int
    direction: str
    l0: tuple[Ref, ...]
    l1: tuple[Ref, ...] = ()

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")

    def get(self, which: int) -> tuple[Ref, ...]:
        return self.l0 if which == 0 else self.l1

    @property
    def empty(self) -> bool:
        return not self.l0 and not self.l1


@dataclass(frozen=True)
class Replacement:
    list_index: int  # 0 for L0, 1 for L1
    slot: int
    replaced_poc: int
    case: str  # "l0", "both", "l1" or "uni-third"


def build_lists(dpb: dict, poc: int, direction: str) -> RefLists:
    """Default lists from the decoded picture buffer ``{poc: frame}``.

    uni: L0 = past frames nearest first (up to 4), L1 empty.
    bi: L0 = past nearest first then future; L1 = future nearest first then
    past; two entries each.  With no future frame both lists hold past
    frames, so the same picture sits in both.
    """
    past = sorted((p for p in dpb if p < poc), reverse=True)
    future = sorted(p for p in dpb if p > poc)
    if direction == "uni":
        return RefLists(poc, direction, tuple(Ref(p, dpb[p]) for p in past[:UNI_REFS]))
    if direction != "bi":
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    l0 = (past + future)[:BI_REFS]
    l1 = (future + past)[:BI_REFS]
    return RefLists(poc, direction, tuple(Ref(p, dpb[p]) for p in l0), tuple(Ref(p, dpb[p]) for p in l1))


def can_predict(dpb, poc: int, direction: str) -> tuple[int, int] | None:
    """POCs ``(t1, t2)`` of the DNN inputs for frame ``poc``, or None.

    uni needs ``t-1`` and ``t-2``; bi takes the nearest pair ``t-d, t+d``
    with ``d <= 2``.
    """
    have = set(dpb)
    if direction == "uni":
        pair = (poc - 1, poc - 2)
        return pair if set(pair) <= have else None
    if direction != "bi":
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    for d in range(1, MAX_DISTANCE + 1):
        if poc - d in have and poc + d in have:
            return poc - d, poc + d
    return None


def rlu_update(lists: RefLists, xhat: Ref | None) -> tuple[RefLists, Replacement | None]:
    """Put the DNN frame into the lists in place of one decoded frame.

    bi: the frame with the largest POC distance over both lists goes (equal
    distances: the earlier POC).  If it is in L0, or in both, its L0 slot is
    replaced; if only in L1, its L1 slot.  uni: slot 3 of L0 is replaced
    when the list has at least three frames.  Without a DNN frame the lists
    are returned unchanged.
    """
    if xhat is None:
        return lists, None
    xhat = replace(xhat, dnn=True)
    if lists.direction == "uni":
        if len(lists.l0) < 3:
            return lists, None
        l0 = list(lists.l0)
        old = l0[2]
        l0[2] = xhat
        return replace(lists, l0=tuple(l0)), Replacement(0, 2, old.poc, "uni-third")
    entries = [r for r in lists.l0 + lists.l1 if not r.dnn]
    if not entries:
        return lists, None
    far = max(entries, key=lambda r: (abs(r.poc - lists.current), -r.poc)).poc
    in0 = [i for i, r in enumerate(lists.l0) if r.poc == far and not r.dnn]
    in1 = [i for i, r in enumerate(lists.l1) if r.poc == far and not r.dnn]
    which, slot = (0, in0[0]) if in0 else (1, in1[0])
    case = "both" if in0 and in1 else ("l0" if in0 else "l1")
    target = list(lists.get(which))
    target[slot] = xhat
    new = replace(lists, l0=tuple(target)) if which == 0 else replace(lists, l1=tuple(target))
    return new, Replacement(which, slot, far, case)
