"""Report serialization.

Reports are JSON with sorted keys and repr-exact floats, written through a
temp file and an atomic rename.  Wall-clock times go to a separate timing
file so that two runs of the same config produce byte-identical reports.
"""
import json
import math
import os
import tempfile


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(path, report):
    write_atomic(path, dumps(report))


def read_report(path):
    with open(path) as f:
        return json.load(f)


def perplexity(nll_sum, tokens):
    """exp of the mean per-token negative log-likelihood."""
    return math.exp(nll_sum / tokens)
