"""The German credit fixture (UCI Statlog), fetched on demand with a bundled fallback.

The raw file has 20 attributes coded ``A11``..``A202`` plus a 1/2 class.
:func:`german_credit_csv` rewrites it as a one-hot table: numeric
attributes keep descriptive names, every categorical code becomes a 0/1
column named by its code, ``ForeignWorker`` is 1 for code ``A201``, and the
class stays in ``Class1Good2Bad`` (1 good, 2 bad).
"""

from __future__ import annotations

import io
import logging
import os
import re
from importlib import resources
from pathlib import Path

import requests

from .tabular import TabularDataset, parse_dataset

log = logging.getLogger(__name__)

UCI_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/german/german.data"

# raw attribute position -> column name for the numeric attributes
NUMERIC_ATTRIBUTES = {
    1: "CreditDuration",
    4: "CreditAmount",
    7: "InstallmentRatePecnt",
    10: "PresentResidenceSince",
    12: "Age",
    15: "NumExistingCredits",
    17: "NumLiablePeople",
}
FOREIGN_WORKER_ATTRIBUTE = 19
LABEL = "Class1Good2Bad"
FACET = "ForeignWorker"


def cache_dir() -> Path:
    root = os.environ.get("FAIRLENS_CACHE") or os.path.join(os.path.expanduser("~"), ".cache", "fairlens")
    return Path(root)


def bundled_german_raw() -> bytes:
    return resources.files("fairlens").joinpath("data/german.data").read_bytes()


def fetch_german_raw(offline: bool = False, timeout: float = 10.0) -> bytes:
    """Raw UCI file: cached copy, else download, else the bundled copy."""
    cached = cache_dir() / "german.data"
    if cached.is_file():
        return cached.read_bytes()
    if not offline:
        try:
            r = requests.get(UCI_URL, timeout=timeout)
            r.raise_for_status()
            data = r.content
            _check_raw(data)
            cached.parent.mkdir(parents=True, exist_ok=True)
            cached.write_bytes(data)
            return data
        except (requests.RequestException, ValueError, OSError) as e:
            log.info("german credit download failed (%s); using bundled copy", e)
    return bundled_german_raw()


def _check_raw(data: bytes) -> None:
    rows = [ln.split() for ln in data.decode("ascii").splitlines() if ln.strip()]
    if len(rows) != 1000 or any(len(r) != 21 for r in rows):
        raise ValueError("unexpected german.data layout")


def _code_key(code: str):
    m = re.fullmatch(r"A(\d+)", code)
    return int(m.group(1)) if m else code


def german_credit_csv(raw: bytes) -> bytes:
    rows = [ln.split() for ln in raw.decode("ascii").splitlines() if ln.strip()]
    n_attr = len(rows[0]) - 1
    codes = {j: sorted({r[j] for r in rows}, key=_code_key)
             for j in range(n_attr) if j not in NUMERIC_ATTRIBUTES and j != FOREIGN_WORKER_ATTRIBUTE}
    header = []
    for j in range(n_attr):
        if j in NUMERIC_ATTRIBUTES:
            header.append(NUMERIC_ATTRIBUTES[j])
        elif j == FOREIGN_WORKER_ATTRIBUTE:
            header.append(FACET)
        else:
            header.extend(codes[j])
    header.append(LABEL)
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for r in rows:
        cells = []
        for j in range(n_attr):
            if j in NUMERIC_ATTRIBUTES:
                cells.append(r[j])
            elif j == FOREIGN_WORKER_ATTRIBUTE:
                cells.append("1" if r[j] == "A201" else "0")
            else:
                cells.extend("1" if r[j] == c else "0" for c in codes[j])
        cells.append(r[-1])
        out.write(",".join(cells) + "\n")
    return out.getvalue().encode("ascii")


def load_german_credit(fetch: bool = False) -> TabularDataset:
    raw = fetch_german_raw() if fetch else bundled_german_raw()
    return parse_dataset(german_credit_csv(raw), "csv")


def write_german_credit(path: str | Path, fetch: bool = False) -> Path:
    raw = fetch_german_raw() if fetch else bundled_german_raw()
    path = Path(path)
    path.write_bytes(german_credit_csv(raw))
    return path
