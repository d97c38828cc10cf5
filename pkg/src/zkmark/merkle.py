"""Binary SHA-256 Merkle tree with batched (multi-leaf) openings.

Leaves are padded to a power of two with 32 zero bytes; an inner node is
``SHA-256(left || right)``. A multiproof lists, level by level from the
leaves up and in ascending index order, every sibling that the verifier
cannot compute from the leaves it already knows.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Mapping, Sequence

EMPTY_LEAF = bytes(32)


def leaf_hash(index: int, value_bytes: bytes) -> bytes:
    return hashlib.sha256(index.to_bytes(8, "little") + value_bytes).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(left + right).digest()


def tree_depth(n_leaves: int) -> int:
    return max(n_leaves - 1, 0).bit_length()


def build_levels(leaves: Sequence[bytes]) -> list[list[bytes]]:
    """All tree levels, ``levels[0]`` the padded leaves and ``levels[-1] == [root]``."""
    depth = tree_depth(len(leaves))
    level = list(leaves) + [EMPTY_LEAF] * ((1 << depth) - len(leaves))
    levels = [level]
    while len(level) > 1:
        level = [node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(level)
    return levels


def multiproof(levels: list[list[bytes]], indices: Iterable[int]) -> list[bytes]:
    known = sorted(set(indices))
    nodes: list[bytes] = []
    for level in levels[:-1]:
        known_set = set(known)
        for idx in known:
            if idx ^ 1 not in known_set:
                nodes.append(level[idx ^ 1])
        known = sorted({idx >> 1 for idx in known})
    return nodes


def multiproof_root(
    leaves: Mapping[int, bytes], nodes: Sequence[bytes], depth: int
) -> bytes | None:
    """Root implied by ``leaves`` and ``nodes``; ``None`` if the node count is off."""
    current = dict(leaves)
    if not current or any(not 0 <= i < (1 << depth) for i in current):
        return None
    it = iter(nodes)
    for _ in range(depth):
        nxt: dict[int, bytes] = {}
        for idx in sorted(current):
            if idx >> 1 in nxt:
                continue
            sib = idx ^ 1
            if sib in current:
                sib_hash = current[sib]
            else:
                sib_hash = next(it, None)
                if sib_hash is None:
                    return None
            left, right = (current[idx], sib_hash) if idx % 2 == 0 else (sib_hash, current[idx])
            nxt[idx >> 1] = node_hash(left, right)
        current = nxt
    if next(it, None) is not None:
        return None
    return current[0]
