"""Domain types shared by the generator, model, metrics, and service."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ContractError, FormatError
from .masks import BinaryMask, MaskTube

PROMPT_KINDS = ("point", "box", "mask")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered class lists; the last entry of each list is the null class."""

    object_classes: tuple[str, ...]
    predicate_classes: tuple[str, ...]

    def __post_init__(self):
        for name, classes in (
            ("object_classes", self.object_classes),
            ("predicate_classes", self.predicate_classes),
        ):
            if len(classes) < 2:
                raise FormatError(f"{name} needs at least one real class plus null")
            if len(set(classes)) != len(classes):
                raise FormatError(f"{name} contains duplicates")

    @property
    def null_object_index(self) -> int:
        return len(self.object_classes) - 1

    @property
    def null_predicate_index(self) -> int:
        return len(self.predicate_classes) - 1

    @property
    def num_object_classes(self) -> int:
        return len(self.object_classes)

    @property
    def num_predicate_classes(self) -> int:
        return len(self.predicate_classes)


@dataclass(frozen=True)
class VisualPrompt:
    """A point, box, or mask cue identifying one subject on one frame.

    Exactly the field matching ``kind`` must be set. Coordinates are
    normalized to [0, 1]; boxes are (x_min, y_min, x_max, y_max).
    """

    kind: str
    frame: int
    point: tuple[float, float] | None = None
    box: tuple[float, float, float, float] | None = None
    mask: BinaryMask | None = None

    def __post_init__(self):
        if self.kind not in PROMPT_KINDS:
            raise FormatError(f"unknown prompt kind {self.kind!r}")
        if self.frame < 0:
            raise FormatError(f"prompt frame {self.frame} is negative")
        present = {
            "point": self.point is not None,
            "box": self.box is not None,
            "mask": self.mask is not None,
        }
        if not present[self.kind] or sum(present.values()) != 1:
            raise FormatError(f"prompt of kind {self.kind!r} must set exactly that field")
        if self.point is not None:
            x, y = self.point
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise FormatError(f"point {self.point} outside [0,1]^2")
        if self.box is not None:
            x0, y0, x1, y1 = self.box
            if not all(0.0 <= v <= 1.0 for v in self.box):
                raise FormatError(f"box {self.box} outside [0,1]")
            if not (x0 < x1 and y0 < y1):
                raise FormatError(f"degenerate box {self.box}")


@dataclass(frozen=True)
class InteractionTracklet:
    """One subject/object relation grounded by aligned mask tubes."""

    subject_class: int
    object_class: int
    predicate_class: int
    subject_tube: MaskTube
    object_tube: MaskTube
    confidence: float = 1.0

    def __post_init__(self):
        st, ot = self.subject_tube, self.object_tube
        if (st.t_start, st.t_end) != (ot.t_start, ot.t_end):
            raise FormatError(
                f"subject window [{st.t_start},{st.t_end}] != object window [{ot.t_start},{ot.t_end}]"
            )
        if not (0.0 <= self.confidence <= 1.0):
            raise FormatError(f"confidence {self.confidence} outside [0,1]")
        if min(self.subject_class, self.object_class, self.predicate_class) < 0:
            raise FormatError("class indices must be non-negative")

    @property
    def t_start(self) -> int:
        return self.subject_tube.t_start

    @property
    def t_end(self) -> int:
        return self.subject_tube.t_end

    def validate_against(self, vocab: Vocabulary) -> None:
        """Check class indices are real (non-null) vocabulary entries."""
        if not self.subject_class < vocab.null_object_index:
            raise FormatError(f"subject_class {self.subject_class} is null or out of range")
        if not self.object_class < vocab.null_object_index:
            raise FormatError(f"object_class {self.object_class} is null or out of range")
        if not self.predicate_class < vocab.null_predicate_index:
            raise FormatError(f"predicate_class {self.predicate_class} is null or out of range")


@dataclass(frozen=True)
class SceneGraphOutput:
    """Everything predicted for one prompt: the tracklets of one subject."""

    subject_prompt: VisualPrompt
    tracklets: tuple[InteractionTracklet, ...]
    subject_found: bool = True

    def __post_init__(self):
        confs = [t.confidence for t in self.tracklets]
        if any(a < b for a, b in zip(confs, confs[1:])):
            raise FormatError("tracklets must be sorted by descending confidence")
        if not self.subject_found and self.tracklets:
            raise ContractError("a not-found subject cannot carry tracklets")
