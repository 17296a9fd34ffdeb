"""Report bundle: turn a run directory's CSV artifacts into SVG figures.

Inputs are the metrics files the training subcommands leave behind; outputs
go to <run>/report. Everything is deterministic, so re-running on the same
inputs rewrites byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .plots import line_chart, scatter_chart

REQUIRED_INPUTS = ("policy_metrics.csv", "smoothness.csv", "reward_scatter.csv")


class ReportError(RuntimeError):
    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__("missing run artifacts: " + ", ".join(missing))


def csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(csv_cell(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader if row]


def _column(header: list[str], rows: list[list[str]], name: str,
            skip_empty: bool = True) -> tuple[list[float], list[int]]:
    j = header.index(name)
    values, idx = [], []
    for i, row in enumerate(rows):
        if row[j] == "" and skip_empty:
            continue
        values.append(float(row[j]))
        idx.append(i)
    return values, idx


def emit_report(run_dir: str | Path) -> list[Path]:
    """Render the report bundle; raises ReportError naming anything missing."""
    run = Path(run_dir)
    missing = [name for name in REQUIRED_INPUTS if not (run / name).exists()]
    if missing:
        raise ReportError(missing)
    out = run / "report"
    out.mkdir(exist_ok=True)
    written: list[Path] = []

    header, rows = read_csv(run / "policy_metrics.csv")
    norm, idx = _column(header, rows, "eval_return_normalized")
    steps_all, _ = _column(header, rows, "step", skip_empty=False)
    eval_steps = [steps_all[i] for i in idx]
    scores, sidx = _column(header, rows, "score")
    svg = line_chart(
        [("normalized return", eval_steps, norm)],
        "Policy optimization learning curve", "training step", "normalized return",
        ref_y=(0.0, 100.0),
    )
    (out / "learning_curve.svg").write_text(svg)
    written.append(out / "learning_curve.svg")
    svg = line_chart(
        [("mean distance to preferred", [steps_all[i] for i in sidx],
          _column(header, rows, "d_pref")[0]),
         ("mean distance to unpreferred", [steps_all[i] for i in sidx],
          _column(header, rows, "d_unpref")[0])],
        "Policy-segment distances during training", "training step", "distance",
    )
    (out / "distance_curve.svg").write_text(svg)
    written.append(out / "distance_curve.svg")

    header, rows = read_csv(run / "smoothness.csv")
    offsets, _ = _column(header, rows, "offset", skip_empty=False)
    probs, _ = _column(header, rows, "p", skip_empty=False)
    by_offset: dict[float, list[float]] = {}
    for o, p in zip(offsets, probs):
        by_offset.setdefault(o, []).append(p)
    xs = sorted(by_offset)
    mean_p = [sum(by_offset[o]) / len(by_offset[o]) for o in xs]
    svg = line_chart(
        [("mean predicted preference", xs, mean_p)],
        "Preference between consecutive overlapping windows",
        "window start", "predicted preference",
        y_range=(0.0, 1.0), ref_y=(0.5,),
    )
    (out / "smoothness.svg").write_text(svg)
    written.append(out / "smoothness.svg")

    header, rows = read_csv(run / "reward_scatter.csv")
    pred, _ = _column(header, rows, "pred_reward", skip_empty=False)
    true, _ = _column(header, rows, "true_reward", skip_empty=False)
    svg = scatter_chart(true, pred, "Predicted vs. true per-step reward",
                        "true reward", "predicted reward")
    (out / "reward_scatter.svg").write_text(svg)
    written.append(out / "reward_scatter.svg")

    sweep_summary = run / "sweep" / "summary.csv"
    if sweep_summary.exists():
        header, rows = read_csv(sweep_summary)
        values, _ = _column(header, rows, "value", skip_empty=False)
        finals, _ = _column(header, rows, "final_eval_normalized", skip_empty=False)
        by_value: dict[float, list[float]] = {}
        for v, f in zip(values, finals):
            by_value.setdefault(v, []).append(f)
        xs = sorted(by_value)
        means = [sum(by_value[v]) / len(by_value[v]) for v in xs]
        param = rows[0][header.index("param")] if rows else "value"
        write_csv(out / "ablation.csv", ["param", "value", "mean_final_normalized", "n_seeds"],
                  [[param, v, sum(by_value[v]) / len(by_value[v]), len(by_value[v])]
                   for v in xs])
        written.append(out / "ablation.csv")
        svg = line_chart([("mean final normalized return", xs, means)],
                         f"Ablation over {param}", param, "normalized return")
        (out / "ablation.svg").write_text(svg)
        written.append(out / "ablation.svg")
    return written
