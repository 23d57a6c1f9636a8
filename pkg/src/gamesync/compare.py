"""A/B comparison of run outputs.

Auto-detects the CSV schema from the header (tick, event, or delivery
rows) and reports per-metric deltas as variant minus baseline, plus the
windows where either run was in strong mode and who wins each window.
Both files must share the schema and the same row grid.
"""

from gamesync.metrics import DELIVERY_HEADER, EVENT_HEADER, TICK_HEADER


class SchemaMismatch(Exception):
    pass


def _read_rows(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaMismatch(f"{path}: empty file")
    return lines[0], [line.split(",") for line in lines[1:] if line]


def _mean(values):
    return sum(values) / len(values) if values else 0.0


def _compare_tick(rows_a, rows_b):
    key_a = [(r[0], r[1], r[2], r[3]) for r in rows_a]
    key_b = [(r[0], r[1], r[2], r[3]) for r in rows_b]
    if key_a != key_b:
        raise SchemaMismatch("tick grids differ between the two runs")
    div_a = [float(r[8]) for r in rows_a]
    div_b = [float(r[8]) for r in rows_b]
    strong = [i for i in range(len(rows_a))
              if rows_a[i][9] == "strong" or rows_b[i][9] == "strong"]

    # windows: contiguous runs of sampled ticks where either run was strong
    all_ticks = sorted({int(r[0]) for r in rows_a})
    tick_pos = {t: i for i, t in enumerate(all_ticks)}
    strong_ticks = sorted({int(rows_a[i][0]) for i in strong})
    runs = []
    for t in strong_ticks:
        if runs and tick_pos[t] == tick_pos[runs[-1][-1]] + 1:
            runs[-1].append(t)
        else:
            runs.append([t])
    windows = []
    for window_ticks in runs:
        members = set(window_ticks)
        span = [i for i in strong if int(rows_a[i][0]) in members]
        a = _mean([div_a[i] for i in span])
        b = _mean([div_b[i] for i in span])
        windows.append({
            "start_ms": window_ticks[0], "end_ms": window_ticks[-1],
            "rows": len(span),
            "mean_divergence_delta": b - a,
            "winner": "variant" if b < a else ("baseline" if a < b else "tie"),
        })

    return {
        "schema": "tick",
        "rows": len(rows_a),
        "mean_divergence_delta": _mean(div_b) - _mean(div_a),
        "max_divergence_delta": (max(div_b) if div_b else 0.0)
                                - (max(div_a) if div_a else 0.0),
        "strong_rows": len(strong),
        "strong_mean_divergence_delta": (_mean([div_b[i] for i in strong])
                                         - _mean([div_a[i] for i in strong])),
        "windows": windows,
    }


def _compare_event(rows_a, rows_b):
    key_a = [(r[0], r[1], r[2]) for r in rows_a]
    key_b = [(r[0], r[1], r[2]) for r in rows_b]
    if key_a != key_b:
        raise SchemaMismatch("event rows differ between the two runs")
    abs_a = [abs(int(r[5])) for r in rows_a]
    abs_b = [abs(int(r[5])) for r in rows_b]
    return {
        "schema": "event",
        "rows": len(rows_a),
        "mean_abs_diff_delta": _mean(abs_b) - _mean(abs_a),
        "max_abs_diff_delta": (max(abs_b) if abs_b else 0)
                              - (max(abs_a) if abs_a else 0),
        "windows": [],
    }


def _compare_delivery(rows_a, rows_b):
    delay_a = [int(r[5]) for r in rows_a]
    delay_b = [int(r[5]) for r in rows_b]
    crit_a = [int(r[5]) for r in rows_a if r[6] == "1"]
    crit_b = [int(r[5]) for r in rows_b if r[6] == "1"]
    return {
        "schema": "delivery",
        "rows_baseline": len(rows_a),
        "rows_variant": len(rows_b),
        "mean_delay_delta_ms": _mean(delay_b) - _mean(delay_a),
        "critical_mean_delay_delta_ms": _mean(crit_b) - _mean(crit_a),
        "windows": [],
    }


def compare(baseline_csv, variant_csv) -> dict:
    """Per-metric deltas (variant minus baseline) between two run outputs."""
    header_a, rows_a = _read_rows(baseline_csv)
    header_b, rows_b = _read_rows(variant_csv)
    if header_a != header_b:
        raise SchemaMismatch(f"headers differ: {header_a!r} vs {header_b!r}")
    if header_a == TICK_HEADER:
        return _compare_tick(rows_a, rows_b)
    if header_a == EVENT_HEADER:
        return _compare_event(rows_a, rows_b)
    if header_a == DELIVERY_HEADER:
        return _compare_delivery(rows_a, rows_b)
    raise SchemaMismatch(f"unrecognized schema: {header_a!r}")
