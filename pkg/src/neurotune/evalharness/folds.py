"""Subject-wise k-fold plans."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LeakageError(AssertionError):
    """A subject ended up on both sides of a split."""


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict
    seed: int

    def fold_subjects(self, fold: int) -> list:
        return sorted(s for s, f in self.assignments.items() if f == fold)

    def fold_sizes(self) -> list[int]:
        return [len(self.fold_subjects(i)) for i in range(self.k)]

    def split(self, subjects, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Trial indices (train, val) for one fold, given per-trial subject ids."""
        if not 0 <= fold < self.k:
            raise IndexError(f"fold {fold} out of range for k={self.k}")
        subjects = np.asarray(subjects)
        unknown = set(subjects.tolist()) - set(self.assignments)
        if unknown:
            raise KeyError(f"subjects not in fold plan: {sorted(unknown)[:5]}")
        fold_of = np.array([self.assignments[s] for s in subjects.tolist()])
        val = np.flatnonzero(fold_of == fold)
        train = np.flatnonzero(fold_of != fold)
        check_disjoint(subjects[train], subjects[val])
        return train, val

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignments": {str(s): f for s, f in sorted(self.assignments.items())}}


def check_disjoint(train_subjects, val_subjects) -> None:
    overlap = set(np.asarray(train_subjects).tolist()) & set(np.asarray(val_subjects).tolist())
    if overlap:
        raise LeakageError(f"subjects in both train and validation: {sorted(overlap)}")


def split_subject_kfold(subjects, k: int, seed: int) -> FoldPlan:
    """Shuffle the distinct subjects with a seeded RNG and deal them
    round-robin into ``k`` folds.  ``subjects`` may list per-trial ids."""
    if hasattr(subjects, "subjects"):
        subjects = subjects.subjects
    uniq = sorted(set(np.asarray(subjects).tolist()))
    if k < 2:
        raise ValueError("need at least 2 folds")
    if len(uniq) < k:
        raise ValueError(f"{len(uniq)} distinct subjects cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(uniq))
    assignments = {uniq[j]: i % k for i, j in enumerate(order)}
    return FoldPlan(k, assignments, seed)
