"""Selection of the stored states worth sending to a peer.

Only states whose vector is over the peer's vector are candidates. The
counters the candidates can raise above the peer's value form a target
vector; choosing which candidates to send is a set cover over the non-zero
target entries. Candidates that alone reach some target value (single
inflators) are taken first, the rest is covered greedily.
"""

import logging
from collections.abc import Iterable, Sequence

from exceptions import SelectionError
from rbss.messages import StateRecord
from rbss.versioning import ReplicaId, VersionVector, join_all, over, total

logger = logging.getLogger(__name__)

Target = dict[ReplicaId, int]


def candidates_for(
    records: Iterable[StateRecord], peer_vv: VersionVector
) -> list[StateRecord]:
    """Records that could inflate the peer."""
    return [r for r in records if over(r.vv, peer_vv)]


def target_vector(candidates: Sequence[StateRecord], peer_vv: VersionVector) -> Target:
    """Non-zero entries of the target vector: candidate max where it beats the peer."""
    vvcand = join_all(r.vv for r in candidates)
    return {rid: count for rid, count in vvcand.items() if count > peer_vv[rid]}


def _reached(record: StateRecord, target: Target) -> list[ReplicaId]:
    return [rid for rid, count in target.items() if record.vv[rid] >= count]


def _mask(record: StateRecord, target: Target) -> None:
    for rid in _reached(record, target):
        del target[rid]


def get_single_inflators(
    candidates: Sequence[StateRecord], target: Target
) -> tuple[list[StateRecord], Target]:
    """Select every candidate that is the only one reaching some target value.

    Target entries reached by a selected candidate are masked out as soon as
    it is selected. Returns the selection and the remaining target.
    """
    remaining = dict(target)
    selected: list[StateRecord] = []
    for rid in sorted(target):
        if rid not in remaining:
            continue
        reachers = [r for r in candidates if r.vv[rid] >= remaining[rid]]
        if len(reachers) == 1:
            single = reachers[0]
            if single not in selected:
                selected.append(single)
            _mask(single, remaining)
    return selected, remaining


def greedy_cover(pool: Sequence[StateRecord], target: Target) -> list[StateRecord]:
    """Repeatedly pick the candidate reaching the most remaining target entries.

    Ties go to the larger total, then to the smallest rendering.

    Raises:
        SelectionError: If some target entry is reached by no candidate

    """
    remaining = dict(target)
    pool = list(pool)
    selected: list[StateRecord] = []
    while remaining:
        best = min(
            pool,
            key=lambda r: (-len(_reached(r, remaining)), -total(r.vv), r.vv.render()),
            default=None,
        )
        if best is None or not _reached(best, remaining):
            msg = f"No candidate reaches target entries {sorted(remaining)}"
            raise SelectionError(msg)
        selected.append(best)
        pool.remove(best)
        _mask(best, remaining)
    return selected


def _prune(selected: list[StateRecord], target: Target) -> list[StateRecord]:
    """Drop picks whose target entries are all reached by the other picks."""
    kept = list(selected)
    for record in selected:
        others = [r for r in kept if r is not record]
        if all(any(r.vv[rid] >= c for r in others) for rid, c in target.items()):
            kept = others
    return kept


def select_inflators(
    records: Iterable[StateRecord],
    peer_vv: VersionVector,
    *,
    singles_first: bool = True,
) -> list[StateRecord]:
    """Choose a small subset of records that lets the peer reach every target value.

    Args:
        records: Stored states (a relay store or any collection of records)
        peer_vv: Version vector (or aggregate vector) of the peer
        singles_first: Select single inflators before the greedy phase; the
            result is then also pruned of redundant greedy picks. With False
            the plain greedy cover is returned as picked.

    Returns:
        Selected records in selection order; empty iff no record is over the peer

    """
    candidates = candidates_for(records, peer_vv)
    if not candidates:
        return []

    target = target_vector(candidates, peer_vv)
    if not singles_first:
        return greedy_cover(candidates, target)

    singles, remaining = get_single_inflators(candidates, target)
    pool = [r for r in candidates if r not in singles]
    selected = singles + (greedy_cover(pool, remaining) if remaining else [])
    selected = _prune(selected, target)
    logger.debug(
        "Selected %d of %d candidates for peer %s",
        len(selected),
        len(candidates),
        peer_vv,
    )
    return selected
