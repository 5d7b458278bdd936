"""N-way sweep: the same training protocol under chunking, blocking and
triangulizing at several N."""
from ..errors import SymnetError
from .runner import final_metric, run_experiment

DEFAULT_WAYS = {
    "chunking": (2, 4, 8, 16),
    "nway_blocking": (4, 16),
    "nway_triangulizing": (2, 4, 8),
}


def sweep_nway(cfg, ways=None, baseline=True):
    """One row per (kind, N): param counts and final validation metric."""
    ways = DEFAULT_WAYS if ways is None else ways
    cases = [("none", None)] if baseline else []
    cases += [(k, n) for k, ns in ways.items() for n in ns]
    rows = []
    for kind, n in cases:
        c = cfg.replace(name=f"{cfg.name}-{kind}-{n}",
                        symmetry={"kind": kind, "n_way": n, "axis": "channelwise", "rho": 0.0})
        row = {"kind": kind, "n_way": n}
        try:
            rep = run_experiment(c)
        except SymnetError as e:
            row.update({"error": str(e)})
        else:
            row.update({"param_count_train": rep["param_count_train"], "param_count_test": rep["param_count_test"],
                        "metric": final_metric(rep)})
        rows.append(row)
    return rows


def format_rows(rows):
    lines = [f"{'kind':<20}{'N':>4}{'train':>10}{'test':>10}{'val err/ppl':>13}"]
    for r in rows:
        n = "-" if r["n_way"] is None else r["n_way"]
        if "error" in r:
            lines.append(f"{r['kind']:<20}{n:>4}  error: {r['error']}")
        else:
            lines.append(f"{r['kind']:<20}{n:>4}{r['param_count_train']:>10}{r['param_count_test']:>10}"
                         f"{r['metric']:>13.3f}")
    return "\n".join(lines)
