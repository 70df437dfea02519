"""Skeleton definitions, keypoint remapping, and pose-dataset file I/O.

The canonical skeleton is a 17-joint set (pelvis root, spine, chest, neck,
head, plus left/right shoulder/elbow/wrist/hip/knee/ankle) that matches the
most common single-person lifting convention and carries the four landmark
joints the alignment and normalization steps need. Source skeletons with
different joint sets are converted into it through a :class:`KeypointMap`
whose per-joint rules live in a plain-text table, so fixing a mapping never
requires a code change.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, ValidationError


@dataclass(frozen=True)
class Skeleton:
    """A named, ordered joint set with landmark indices and a parent tree.

    The parent array encodes a single-rooted tree; the root joint is its own
    parent. Landmark indices (hips, chest, neck) are the joints used by
    facing alignment and scale normalization.
    """

    name: str
    joints: tuple[str, ...]
    left_hip_index: int
    right_hip_index: int
    chest_index: int
    neck_index: int
    parent: tuple[int, ...]

    def __post_init__(self):
        n = len(self.joints)
        if len(set(self.joints)) != n:
            raise ValidationError(f"skeleton {self.name!r}: joint names not unique")
        landmarks = (self.left_hip_index, self.right_hip_index,
                     self.chest_index, self.neck_index)
        if len(set(landmarks)) != 4 or not all(0 <= i < n for i in landmarks):
            raise ValidationError(
                f"skeleton {self.name!r}: landmark indices invalid or not distinct")
        if len(self.parent) != n:
            raise ValidationError(f"skeleton {self.name!r}: parent array length mismatch")
        roots = [i for i, p in enumerate(self.parent) if p == i]
        if len(roots) != 1:
            raise ValidationError(f"skeleton {self.name!r}: expected exactly one root")
        for i, p in enumerate(self.parent):
            if not 0 <= p < n:
                raise ValidationError(f"skeleton {self.name!r}: parent of joint {i} out of range")
        # Walking up from every joint must reach the root (no cycles).
        root = roots[0]
        for i in range(n):
            j, hops = i, 0
            while j != root:
                j = self.parent[j]
                hops += 1
                if hops > n:
                    raise ValidationError(f"skeleton {self.name!r}: parent array has a cycle")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def index(self, joint_name: str) -> int:
        try:
            return self.joints.index(joint_name)
        except ValueError:
            raise ValidationError(
                f"skeleton {self.name!r} has no joint {joint_name!r}") from None


def canonical17() -> Skeleton:
    """The 17-joint canonical skeleton every pipeline stage operates on."""
    joints = (
        "pelvis",
        "right_hip", "right_knee", "right_ankle",
        "left_hip", "left_knee", "left_ankle",
        "spine", "chest", "neck", "head",
        "left_shoulder", "left_elbow", "left_wrist",
        "right_shoulder", "right_elbow", "right_wrist",
    )
    parent = (0,
              0, 1, 2,
              0, 4, 5,
              0, 7, 8, 9,
              8, 11, 12,
              8, 14, 15)
    return Skeleton(
        name="canonical17",
        joints=joints,
        left_hip_index=4,
        right_hip_index=1,
        chest_index=8,
        neck_index=9,
        parent=parent,
    )


# Rule kinds for KeypointMap entries.
RULE_COPY = "copy"
RULE_MID = "mid"
RULE_DROP = "drop"


@dataclass(frozen=True)
class KeypointMap:
    """Per-target-joint conversion rules from one skeleton to another.

    rules maps each target joint name to ("copy", src_index),
    ("mid", src_a, src_b) or ("drop",). Dropped target joints are removed
    from the produced skeleton; landmark joints cannot be dropped.
    """

    source: Skeleton
    target: Skeleton
    rules: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = self.source.n_joints
        for name in self.target.joints:
            if name not in self.rules:
                raise ValidationError(f"keypoint map: no rule for target joint {name!r}")
        for name, rule in self.rules.items():
            if name not in self.target.joints:
                raise ValidationError(f"keypoint map: rule for unknown target joint {name!r}")
            kind = rule[0]
            if kind == RULE_COPY:
                if not 0 <= rule[1] < ns:
                    raise ValidationError(f"keypoint map: copy rule for {name!r} references "
                                          f"missing source joint {rule[1]}")
            elif kind == RULE_MID:
                if not (0 <= rule[1] < ns and 0 <= rule[2] < ns):
                    raise ValidationError(f"keypoint map: mid rule for {name!r} references "
                                          f"a missing source joint")
            elif kind != RULE_DROP:
                raise ValidationError(f"keypoint map: unknown rule kind {kind!r}")

    def effective_target(self) -> Skeleton:
        """Target skeleton with dropped joints removed and indices rebuilt."""
        dropped = {n for n, r in self.rules.items() if r[0] == RULE_DROP}
        if not dropped:
            return self.target
        keep = [i for i, n in enumerate(self.target.joints) if n not in dropped]
        old_to_new = {old: new for new, old in enumerate(keep)}
        for label, idx in (("left hip", self.target.left_hip_index),
                           ("right hip", self.target.right_hip_index),
                           ("chest", self.target.chest_index),
                           ("neck", self.target.neck_index)):
            if idx not in old_to_new:
                raise ValidationError(f"keypoint map drops landmark joint ({label})")
        parent = []
        for old in keep:
            p = self.target.parent[old]
            # Parents that were dropped fall back to the nearest kept ancestor.
            while p not in old_to_new:
                if p == self.target.parent[p]:
                    break
                p = self.target.parent[p]
            parent.append(old_to_new.get(p, old_to_new[old]))
        return Skeleton(
            name=self.target.name + "-reduced",
            joints=tuple(self.target.joints[i] for i in keep),
            left_hip_index=old_to_new[self.target.left_hip_index],
            right_hip_index=old_to_new[self.target.right_hip_index],
            chest_index=old_to_new[self.target.chest_index],
            neck_index=old_to_new[self.target.neck_index],
            parent=tuple(parent),
        )


@dataclass
class PoseSequence3D:
    """A time-ordered series of 3D joint frames on a named skeleton.

    frames has shape (T, N, 3) in meters, right-handed coordinates with z up
    once gravity-aligned. Every coordinate must be finite and N must equal
    the skeleton's joint count.
    """

    skeleton: Skeleton
    frames: np.ndarray
    fps: float
    subject: str = ""
    trial: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise ValidationError(f"frames must be (T, N, 3), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValidationError("sequence must contain at least one frame")
        if self.frames.shape[1] != self.skeleton.n_joints:
            raise SchemaError(
                f"frames carry {self.frames.shape[1]} joints but skeleton "
                f"{self.skeleton.name!r} defines {self.skeleton.n_joints}")
        if not np.all(np.isfinite(self.frames)):
            raise ValidationError("frames contain non-finite coordinates")
        if not self.fps > 0:
            raise ValidationError("fps must be positive")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def remap_keypoints(seq: PoseSequence3D, keymap: KeypointMap) -> PoseSequence3D:
    """Convert a sequence onto the map's target skeleton.

    Copy rules preserve coordinates exactly; mid rules emit the arithmetic
    mean of the two referenced source joints. Frame count and fps are
    unchanged. Dropped target joints are removed from the output skeleton.
    """
    if seq.skeleton.joints != keymap.source.joints:
        raise SchemaError(
            f"sequence skeleton {seq.skeleton.name!r} does not match map source "
            f"{keymap.source.name!r}")
    out_skel = keymap.effective_target()
    out = np.empty((seq.n_frames, out_skel.n_joints, 3), dtype=np.float64)
    for j, name in enumerate(out_skel.joints):
        rule = keymap.rules[name]
        if rule[0] == RULE_COPY:
            out[:, j, :] = seq.frames[:, rule[1], :]
        else:  # mid
            out[:, j, :] = 0.5 * (seq.frames[:, rule[1], :] + seq.frames[:, rule[2], :])
    return PoseSequence3D(skeleton=out_skel, frames=out, fps=seq.fps,
                          subject=seq.subject, trial=seq.trial)


def identity_map(skeleton: Skeleton) -> KeypointMap:
    """Map a skeleton onto itself joint for joint."""
    rules = {name: (RULE_COPY, i) for i, name in enumerate(skeleton.joints)}
    return KeypointMap(source=skeleton, target=skeleton, rules=rules)


def load_keypoint_map(path, source: Skeleton, target: Skeleton) -> KeypointMap:
    """Parse a rule table of lines ``target <- copy src | mid a b | drop``.

    Blank lines and ``#`` comments are ignored. Every target joint must end
    up with exactly one rule.
    """
    rules: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "<-" not in line:
            raise ParseError(f"expected 'target <- rule', got {raw!r}", line=lineno)
        tgt, rhs = (part.strip() for part in line.split("<-", 1))
        if tgt in rules:
            raise ParseError(f"duplicate rule for target joint {tgt!r}", line=lineno)
        tokens = rhs.split()
        try:
            if tokens[0] == "copy" and len(tokens) == 2:
                rules[tgt] = (RULE_COPY, source.index(tokens[1]))
            elif tokens[0] == "mid" and len(tokens) == 3:
                rules[tgt] = (RULE_MID, source.index(tokens[1]), source.index(tokens[2]))
            elif tokens[0] == "drop" and len(tokens) == 1:
                rules[tgt] = (RULE_DROP,)
            else:
                raise ParseError(f"unknown rule {rhs!r}", line=lineno)
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return KeypointMap(source=source, target=target, rules=rules)


def fsjump_skeleton() -> Skeleton:
    """The 83-joint multi-segment capture skeleton shipped with the package."""
    names = _read_data_text("fsjump83_joints.txt").split()
    if len(names) != 83:
        raise ValidationError(f"fsjump83 joint list corrupt: {len(names)} names")
    # Chain parents: every joint hangs off the previous joint of its region,
    # regions hang off the pelvis. Only the landmark joints matter downstream;
    # the tree just has to be valid.
    idx = {n: i for i, n in enumerate(names)}
    parent = []
    for i, n in enumerate(names):
        region, _, num = n.rpartition("_")
        if n == "pelvis":
            parent.append(i)
        elif num.isdigit() and int(num) > 0 and f"{region}_{int(num) - 1:02d}" in idx:
            parent.append(idx[f"{region}_{int(num) - 1:02d}"])
        else:
            parent.append(idx["pelvis"])
    return Skeleton(
        name="fsjump83",
        joints=tuple(names),
        left_hip_index=idx["l_leg_00"],
        right_hip_index=idx["r_leg_00"],
        chest_index=idx["torso_08"],
        neck_index=idx["torso_12"],
        parent=tuple(parent),
    )


def fsjump_to_canonical_map() -> KeypointMap:
    """The shipped 83-to-17 rule table (data file, replaceable)."""
    source = fsjump_skeleton()
    target = canonical17()
    with resources.as_file(resources.files("icepose.data") / "fsjump83_to_canonical17.map") as p:
        return load_keypoint_map(p, source, target)


def _read_data_text(name: str) -> str:
    return (resources.files("icepose.data") / name).read_text(encoding="utf-8")


# --------------------------------------------------------------------------
# Pose dataset I/O
#
# JSONL: one object per line with subject, trial, fps, skeleton, frames
# (T x N x 3 nested arrays in meters) and optionally facing_angle (length T).
# CSV: long format with header subject,trial,fps,skeleton,frame,joint,x,y,z.
# --------------------------------------------------------------------------

_BUILTIN_SKELETONS = {"canonical17": canonical17, "fsjump83": fsjump_skeleton}


def _skeleton_by_name(name: str, line: int | None = None) -> Skeleton:
    try:
        return _BUILTIN_SKELETONS[name]()
    except KeyError:
        raise ParseError(f"unknown skeleton {name!r}", line=line) from None


def _sequence_from_record(rec: dict, line: int) -> PoseSequence3D:
    for key in ("subject", "trial", "fps", "skeleton", "frames"):
        if key not in rec:
            raise ParseError(f"record missing field {key!r}", line=line)
    skel = _skeleton_by_name(rec["skeleton"], line)
    frames = np.asarray(rec["frames"], dtype=np.float64)
    try:
        return PoseSequence3D(skeleton=skel, frames=frames, fps=float(rec["fps"]),
                              subject=str(rec["subject"]), trial=str(rec["trial"]))
    except (ValidationError, SchemaError) as exc:
        raise ParseError(str(exc), line=line) from None


def load_pose_dataset(path, format: str = "jsonl") -> list[PoseSequence3D]:
    """Load a pose dataset file into a list of sequences.

    format is "jsonl" or "csv"; see the module docstring for both layouts.
    Malformed records raise ParseError with the offending line number.
    """
    path = Path(path)
    if format == "jsonl":
        sequences = []
        with path.open("r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
                sequences.append(_sequence_from_record(rec, lineno))
        return sequences
    if format == "csv":
        return _load_pose_csv(path)
    raise ValidationError(f"unknown dataset format {format!r}")


def save_pose_dataset(sequences, path, format: str = "jsonl") -> None:
    """Write sequences so that load_pose_dataset reads back equal structures."""
    path = Path(path)
    if format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for seq in sequences:
                rec = {
                    "subject": seq.subject,
                    "trial": seq.trial,
                    "fps": seq.fps,
                    "skeleton": seq.skeleton.name,
                    "frames": seq.frames.tolist(),
                }
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        return
    if format == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject", "trial", "fps", "skeleton", "frame", "joint",
                             "x", "y", "z"])
            for seq in sequences:
                for t in range(seq.n_frames):
                    for j in range(seq.skeleton.n_joints):
                        x, y, z = seq.frames[t, j]
                        writer.writerow([seq.subject, seq.trial, repr(seq.fps),
                                         seq.skeleton.name, t, j,
                                         repr(x), repr(y), repr(z)])
        return
    raise ValidationError(f"unknown dataset format {format!r}")


def _load_pose_csv(path: Path) -> list[PoseSequence3D]:
    groups: dict = {}   # (subject, trial) -> meta + {(frame, joint): xyz}
    order: list = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        expected = ["subject", "trial", "fps", "skeleton", "frame", "joint", "x", "y", "z"]
        if [h.strip() for h in header] != expected:
            raise ParseError(f"bad CSV header {header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                raise ParseError(f"expected 9 columns, got {len(row)}", line=lineno)
            subject, trial, fps, skel_name, frame, joint, x, y, z = row
            key = (subject, trial)
            if key not in groups:
                groups[key] = {"fps": float(fps), "skeleton": skel_name, "cells": {},
                               "line": lineno}
                order.append(key)
            try:
                cell = (int(frame), int(joint))
                groups[key]["cells"][cell] = (float(x), float(y), float(z))
            except ValueError:
                raise ParseError(f"non-numeric cell in row {row!r}", line=lineno) from None
    sequences = []
    for key in order:
        meta = groups[key]
        skel = _skeleton_by_name(meta["skeleton"], meta["line"])
        cells = meta["cells"]
        n_frames = max(c[0] for c in cells) + 1
        frames = np.full((n_frames, skel.n_joints, 3), np.nan)
        for (t, j), xyz in cells.items():
            if not 0 <= j < skel.n_joints:
                raise ParseError(f"joint index {j} out of range for {meta['skeleton']}",
                                 line=meta["line"])
            frames[t, j] = xyz
        if np.any(np.isnan(frames)):
            raise ParseError(f"sequence {key} has missing frame/joint cells",
                             line=meta["line"])
        sequences.append(PoseSequence3D(skeleton=skel, frames=frames, fps=meta["fps"],
                                        subject=key[0], trial=key[1]))
    return sequences


def save_canonical_sequence(records, path) -> None:
    """Write canonicalized sequences: the pose JSONL schema plus facing_angle.

    records is an iterable of dicts with subject, trial, fps, skeleton,
    frames (T x N x 3) and facing_angle (length T).
    """
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_canonical_sequences(path) -> list[dict]:
    """Read back files written by save_canonical_sequence."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if "facing_angle" not in rec:
                raise ParseError("record missing field 'facing_angle'", line=lineno)
            rec["frames"] = np.asarray(rec["frames"], dtype=np.float64)
            rec["facing_angle"] = np.asarray(rec["facing_angle"], dtype=np.float64)
            out.append(rec)
    return out
