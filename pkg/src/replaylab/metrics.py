"""Average accuracy and forgetting over a task-by-task accuracy grid.

``a[i, j]`` is the test accuracy on task i measured right after training
task j, defined for j >= i only. ACC averages the final column; the
forgetting rate averages, over all but the last task, the gap between each
task's peak pre-final accuracy and its final accuracy.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


class AccuracyMatrix:
    def __init__(self, num_tasks):
        if num_tasks < 1:
            raise DataError("need at least one task")
        self.values = np.full((num_tasks, num_tasks), np.nan)

    @property
    def num_tasks(self):
        return self.values.shape[0]

    def record(self, task, after_task, accuracy):
        if not 0 <= task <= after_task < self.num_tasks:
            raise DataError(f"a[{task},{after_task}] outside the i <= j triangle")
        if not 0.0 <= accuracy <= 1.0:
            raise DataError(f"accuracy {accuracy} outside [0, 1]")
        self.values[task, after_task] = accuracy

    def get(self, task, after_task):
        return float(self.values[task, after_task])

    def final_accuracies(self):
        col = self.values[:, -1]
        if np.isnan(col).any():
            raise DataError("final column incomplete; train all tasks first")
        return col.copy()

    def to_json_dict(self):
        """{"T": n, "a": [row i entries for j = i .. T-1]}"""
        return {
            "T": self.num_tasks,
            "a": [[float(v) for v in self.values[i, i:]] for i in range(self.num_tasks)],
        }

    @classmethod
    def from_json_dict(cls, payload):
        m = cls(payload["T"])
        for i, row in enumerate(payload["a"]):
            for offset, v in enumerate(row):
                m.record(i, i + offset, v)
        return m


def compute_acc(matrix):
    """Mean accuracy over all tasks after the final task has been trained."""
    return float(matrix.final_accuracies().mean())


def compute_fr(matrix):
    """Mean drop from each pre-final peak to the final accuracy; in [-1, 1].

    Undefined for a single task. The peak for task i is taken over the
    columns where a[i, j] exists and j is before the final task.
    """
    t = matrix.num_tasks
    if t < 2:
        raise DataError("forgetting is undefined for a single task")
    final = matrix.final_accuracies()
    drops = []
    for i in range(t - 1):
        history = matrix.values[i, i:t - 1]
        if np.isnan(history).any():
            raise DataError(f"row {i} incomplete")
        drops.append(history.max() - final[i])
    return float(np.mean(drops))
