"""CSV and JSON result files.

One CSV per slave (``rounds_<slave>.csv``) with the header::

    round,true_time_s,theta_rep_us,theta_act_us,theta_rect_us,alpha_p1_us,...,alpha_pn_us,attacked

and a ``summary.json``. Durations are decimal microseconds with three
fractional digits, formatted from integer nanoseconds, so reruns with the
same seed produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ptpsec_sim.runner import RunOutput, SlaveRun
from ptpsec_sim.units import fmt_s, fmt_us


def csv_header(n: int) -> list[str]:
    alphas = [f"alpha_p{i}_us" for i in range(1, n + 1)]
    return ["round", "true_time_s", "theta_rep_us", "theta_act_us", "theta_rect_us", *alphas, "attacked"]


def rounds_csv(run: SlaveRun) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(run.n))
    for r in run.rows:
        alphas = ["" if a is None else fmt_us(a) for a in r.alphas]
        writer.writerow(
            [
                r.round,
                fmt_s(r.true_time),
                fmt_us(r.theta_rep),
                fmt_us(r.theta_act),
                fmt_us(r.theta_rect),
                *alphas,
                int(r.attacked),
            ]
        )
    return buf.getvalue()


def summary_json(out: RunOutput) -> str:
    return json.dumps(out.summary, indent=2, sort_keys=True) + "\n"


def emit_outputs(out: RunOutput, directory: str | Path) -> list[Path]:
    """Write the per-slave CSVs and ``summary.json``; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for slave, run in out.slaves.items():
        path = directory / f"rounds_{slave}.csv"
        path.write_text(rounds_csv(run))
        written.append(path)
    path = directory / "summary.json"
    path.write_text(summary_json(out))
    written.append(path)
    return written
