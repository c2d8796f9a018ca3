"""
Grouping of binary convolutions for holistic decomposition.

Layers with identical (O, C, w, h) inside one macro-module share a single
holistic Tucker parametrization; layers left alone fall back to layer-wise Tucker.
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from core.errors import require


@dataclass(frozen=True)
class LayerGroup:
    """Binary layers sharing one HolisticGroupParam; layer_ids[l] is slice l."""

    group_id: str
    layer_ids: Tuple[str, ...]
    shape: Tuple[int, int, int, int]

    @property
    def group_shape(self) -> Tuple[int, ...]:
        return (len(self.layer_ids),) + tuple(self.shape)

    def slice_index(self, layer_id: str) -> int:
        return self.layer_ids.index(layer_id)


@dataclass(frozen=True)
class LayerShapeInfo:
    layer_id: str
    macro_module: str
    shape: Tuple[int, int, int, int]


def plan_groups(layers: Sequence[LayerShapeInfo]) -> Tuple[List[LayerGroup], List[str]]:
    """
    Split binary layers into holistic groups and layer-wise Tucker fallbacks.

    Args:
        layers: Binary layers in network order

    Returns:
        (groups, fallback layer ids), both in network order
    """
    buckets: Dict[Tuple[str, Tuple[int, ...]], List[str]] = {}
    for info in layers:
        require(len(info.shape) == 4, f"layer {info.layer_id} shape must be 4-order")
        buckets.setdefault((info.macro_module, tuple(info.shape)), []).append(info.layer_id)

    groups: List[LayerGroup] = []
    fallback: List[str] = []
    for (module, shape), ids in buckets.items():
        if len(ids) >= 2:
            groups.append(
                LayerGroup(
                    group_id=f"{module}.group{len(groups)}",
                    layer_ids=tuple(ids),
                    shape=shape,
                )
            )
        else:
            fallback.extend(ids)

    order = {info.layer_id: i for i, info in enumerate(layers)}
    fallback.sort(key=order.__getitem__)
    return groups, fallback
