from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from dusss.models import EvalResult

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


class MetricsRepository:
    """CSV/JSON outputs of training, evaluation and ablation runs"""

    def write_rows(self, path: Union[str, Path], columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c)) for c in columns])
        return path

    def read_rows(self, path: Union[str, Path]) -> List[Dict[str, str]]:
        with Path(path).open(newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))

    def write_eval(self, path: Union[str, Path], result: EvalResult) -> Path:
        """id, dice, iou per sample and a final MEAN row"""
        rows = [{"id": s.id, "dice": s.dice, "iou": s.iou} for s in result.per_sample]
        rows.append({"id": "MEAN", "dice": result.dice, "iou": result.miou})
        return self.write_rows(path, ["id", "dice", "iou"], rows)

    def write_json(self, path: Union[str, Path], payload: Dict[str, Any], indent: Optional[int] = 2) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=indent, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def dump_nonfinite(self, path: Union[str, Path], stats: Dict[str, Any]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, **{k.replace(".", "_"): np.asarray(v) for k, v in stats.items()})
        logger.error("non-finite loss; offending tensors dumped to %s", path)
        return path


# Singleton instance
metrics_repo_ins = MetricsRepository()
