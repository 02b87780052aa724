"""Result tables: long-form CSV and per-encoder markdown with Acc/Prc/Rec/F1 column groups."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from ..classifiers import CLASSIFIER_ORDER, ClassifierKind
from ..evalkit import MetricQuad

CSV_COLUMNS = ("encoder", "dataset", "classifier", "latent_dim", "acc", "prc", "rec", "f1", "status")
METRIC_NAMES = ("Acc", "Prc", "Rec", "F1")


@dataclass
class CellResult:
    metrics: MetricQuad | None
    status: str = "ok"
    projection_hash: str = ""


@dataclass
class ResultTable:
    """Cells keyed by (encoder, dataset, latent_dim, classifier)."""

    cells: dict[tuple[str, str, int, str], CellResult] = field(default_factory=dict)

    def add(self, encoder: str, dataset: str, latent_dim: int, classifier: str, result: CellResult):
        key = (encoder, dataset, int(latent_dim), ClassifierKind.parse(classifier).value)
        if key in self.cells:
            raise KeyError(f"duplicate grid cell {key}")
        self.cells[key] = result

    def groups(self) -> list[tuple[str, str]]:
        seen = []
        for enc, ds, _, _ in self.cells:
            if (enc, ds) not in seen:
                seen.append((enc, ds))
        return seen

    def latent_dims(self, encoder: str, dataset: str) -> list[int]:
        return sorted({k for e, d, k, _ in self.cells if (e, d) == (encoder, dataset)})

    def classifiers(self, encoder: str, dataset: str) -> list[str]:
        present = {c for e, d, _, c in self.cells if (e, d) == (encoder, dataset)}
        return [k.value for k in CLASSIFIER_ORDER if k.value in present]

    def __len__(self):
        return len(self.cells)


def _sort_key(key):
    enc, ds, k, clf = key
    order = [c.value for c in CLASSIFIER_ORDER].index(clf)
    return (ds, enc, order, k)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def emit_csv(results: ResultTable) -> str:
    if not results.cells:
        raise ValueError("no results to emit")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for key in sorted(results.cells, key=_sort_key):
        enc, ds, k, clf = key
        cell = results.cells[key]
        vals = [_fmt(v) for v in cell.metrics.as_tuple()] if cell.metrics else ["", "", "", ""]
        w.writerow([enc, ds, clf, k, *vals, cell.status])
    return buf.getvalue()


def parse_csv(text: str) -> ResultTable:
    rows = list(csv.DictReader(io.StringIO(text)))
    table = ResultTable()
    for row in rows:
        if row["status"] == "ok":
            m = MetricQuad(float(row["acc"]), float(row["prc"]), float(row["rec"]), float(row["f1"]))
        else:
            m = None
        table.add(row["encoder"], row["dataset"], int(row["latent_dim"]), row["classifier"],
                  CellResult(m, row["status"]))
    return table


def table_title(encoder: str, dataset: str) -> str:
    return f"Classifier performance on {dataset.upper()}-{encoder.upper()}-encoded latent space vectors"


def emit_markdown(results: ResultTable) -> str:
    if not results.cells:
        raise ValueError("no results to emit")
    out = []
    for enc, ds in sorted(results.groups(), key=lambda g: (g[1], g[0] != "vit", g[0])):
        dims = results.latent_dims(enc, ds)
        header = ["Model"] + [f"latent dim = {k} {m}" for k in dims for m in METRIC_NAMES]
        out.append(f"### {table_title(enc, ds)}\n")
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "|".join(["---"] + ["---:"] * (len(header) - 1)) + "|")
        for clf in results.classifiers(enc, ds):
            row = [clf]
            for k in dims:
                cell = results.cells.get((enc, ds, k, clf))
                if cell is None or cell.metrics is None:
                    row += ["n/a"] * 4 if cell is None else ["failed"] * 4
                else:
                    row += [_fmt(v) for v in cell.metrics.as_tuple()]
            out.append("| " + " | ".join(row) + " |")
        out.append("")
    return "\n".join(out)


def emit_table(results: ResultTable, fmt: str = "markdown") -> str:
    if fmt == "csv":
        return emit_csv(results)
    if fmt == "markdown":
        return emit_markdown(results)
    raise ValueError(f"unknown table format {fmt!r}")
