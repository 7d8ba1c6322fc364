"""Metric registry, evaluation report aggregation, external-metric merging,
and markdown/CSV/JSON rendering with best / second-best highlighting."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math


class ReportError(ValueError):
    pass


HIGHER = "higher_better"
LOWER = "lower_better"


@dataclasses.dataclass(frozen=True)
class MetricSpec:
    name: str
    direction: str
    source: str  # native | external


DEFAULT_REGISTRY = [
    MetricSpec("psnr", HIGHER, "native"),
    MetricSpec("ssim", HIGHER, "native"),
    MetricSpec("mse", LOWER, "native"),
    MetricSpec("l1_texture", LOWER, "native"),
    MetricSpec("l1_intensity", LOWER, "native"),
    MetricSpec("noref_box", HIGHER, "native"),
    MetricSpec("noref_gaussian", HIGHER, "native"),
    MetricSpec("LPIPS", LOWER, "external"),
    MetricSpec("ST-LPIPS", LOWER, "external"),
    MetricSpec("MUSIQ", HIGHER, "external"),
    MetricSpec("NIQE", LOWER, "external"),
    MetricSpec("BRISQUE", LOWER, "external"),
    MetricSpec("NRQM", HIGHER, "external"),
    MetricSpec("CLIP-IQA", HIGHER, "external"),
]


class MetricRegistry:
    def __init__(self, specs=None):
        self.specs = list(specs if specs is not None else DEFAULT_REGISTRY)
        names = [s.name for s in self.specs]
        if len(names) != len(set(names)):
            raise ReportError("duplicate metric names in registry")
        self._by_name = {s.name: s for s in self.specs}

    def get(self, name: str) -> MetricSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise ReportError(f"metric {name!r} is not registered") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def order(self, names):
        """Registry column order restricted to the given names."""
        present = set(names)
        return [s.name for s in self.specs if s.name in present]


@dataclasses.dataclass
class MetricAggregate:
    mean: float
    count: int
    total: int  # images in the method; count < total means partial coverage

    @property
    def coverage(self) -> str | None:
        return None if self.count == self.total else f"{self.count}/{self.total}"


@dataclasses.dataclass
class EvalReport:
    dataset: str
    methods: dict  # method -> {metric -> MetricAggregate}
    per_image: dict  # method -> {image -> {metric -> value}}
    image_count: int

    def metric_names(self, registry: MetricRegistry):
        names = set()
        for metrics in self.methods.values():
            names.update(metrics)
        return registry.order(names)

    def rankings(self, registry: MetricRegistry):
        """Per metric: (best_method, second_best_method or None)."""
        out = {}
        for name in self.metric_names(registry):
            spec = registry.get(name)
            scored = [
                (m, agg[name].mean)
                for m, agg in sorted(self.methods.items())
                if name in agg and not math.isnan(agg[name].mean)
            ]
            if not scored:
                continue
            reverse = spec.direction == HIGHER
            scored.sort(key=lambda kv: (-kv[1] if reverse else kv[1], kv[0]))
            best = scored[0][0]
            second = scored[1][0] if len(scored) > 1 else None
            out[name] = (best, second)
        return out


def aggregate(dataset: str, per_image: dict) -> EvalReport:
    """Build a report from per-method, per-image metric values; NaN and None
    values are excluded from that metric's mean with a coverage note."""
    methods = {}
    image_count = 0
    for method, images in per_image.items():
        total = len(images)
        image_count = max(image_count, total)
        sums: dict = {}
        counts: dict = {}
        for _, metrics in sorted(images.items()):
            for name, value in metrics.items():
                if value is None or (isinstance(value, float) and math.isnan(value)):
                    continue
                sums[name] = sums.get(name, 0.0) + value
                counts[name] = counts.get(name, 0) + 1
        methods[method] = {
            name: MetricAggregate(mean=sums[name] / counts[name], count=counts[name], total=total)
            for name in sums
        }
    return EvalReport(dataset=dataset, methods=methods, per_image=per_image,
                      image_count=image_count)


def merge_external_metrics(report: EvalReport, csv_path, registry: MetricRegistry) -> EvalReport:
    """Merge `method,image,metric,value` rows of externally computed metrics."""
    with open(csv_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        needed = {"method", "image", "metric", "value"}
        if not needed <= set(row):
            raise ReportError(f"external CSV must have columns {sorted(needed)}")
        name = row["metric"]
        spec = registry.get(name)
        if spec.source != "external":
            raise ReportError(f"metric {name!r} is registered as native, not external")
        try:
            value = float(row["value"])
        except ValueError:
            raise ReportError(f"non-numeric value {row['value']!r} for {name}") from None
        method = row["method"]
        if method not in report.per_image:
            report.per_image[method] = {}
        report.per_image[method].setdefault(row["image"], {})[name] = value
    return aggregate(report.dataset, report.per_image)


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def _to_jsonable(v):
    # JSON has no infinity; the PSNR sentinel travels as the string "inf".
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _from_jsonable(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


def render_json(report: EvalReport, registry: MetricRegistry) -> str:
    names = report.metric_names(registry)
    ranks = report.rankings(registry)
    payload = {
        "dataset": report.dataset,
        "image_count": report.image_count,
        "metrics": [
            {"name": n, "direction": registry.get(n).direction,
             "source": registry.get(n).source}
            for n in names
        ],
        "methods": {
            method: {
                n: {
                    "mean": _to_jsonable(report.methods[method][n].mean),
                    "count": report.methods[method][n].count,
                    "coverage": report.methods[method][n].coverage,
                }
                for n in names if n in report.methods[method]
            }
            for method in sorted(report.methods)
        },
        "rankings": {n: {"best": b, "second": s} for n, (b, s) in ranks.items()},
        "per_image": {
            method: {img: {k: _to_jsonable(v) for k, v in sorted(vals.items())}
                     for img, vals in sorted(report.per_image[method].items())}
            for method in sorted(report.per_image)
        },
    }
    return json.dumps(payload, sort_keys=True, indent=1, allow_nan=False) + "\n"


def report_from_json(text: str) -> EvalReport:
    d = json.loads(text)
    per_image = {m: {img: {k: _from_jsonable(v) for k, v in vals.items()}
                     for img, vals in imgs.items()}
                 for m, imgs in d["per_image"].items()}
    rep = aggregate(d["dataset"], per_image)
    rep.image_count = d["image_count"]
    return rep


def render_markdown(report: EvalReport, registry: MetricRegistry) -> str:
    """One table per dataset; best mean bold, second best underlined per the
    metric's direction. Arrows mark the direction in the header."""
    names = report.metric_names(registry)
    ranks = report.rankings(registry)
    lines = [f"## {report.dataset}", ""]
    arrows = {HIGHER: "↑", LOWER: "↓"}
    header = ["Method"] + [f"{n} {arrows[registry.get(n).direction]}" for n in names]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(["---"] * len(header)) + "|")
    for method in sorted(report.methods):
        cells = [method]
        for n in names:
            agg = report.methods[method].get(n)
            if agg is None:
                cells.append("-")
                continue
            text = _fmt(agg.mean)
            best, second = ranks.get(n, (None, None))
            if method == best:
                text = f"**{text}**"
            elif method == second:
                text = f"<u>{text}</u>"
            if agg.coverage:
                text += f" ({agg.coverage})"
            cells.append(text)
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines) + "\n"


def render_csv(report: EvalReport, registry: MetricRegistry) -> str:
    names = report.metric_names(registry)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "method"] + names)
    for method in sorted(report.methods):
        row = [report.dataset, method]
        for n in names:
            agg = report.methods[method].get(n)
            row.append("" if agg is None else _fmt(agg.mean))
        w.writerow(row)
    return buf.getvalue()


def render_report(report: EvalReport, fmt: str, registry: MetricRegistry | None = None) -> str:
    registry = registry or MetricRegistry()
    if fmt == "markdown":
        return render_markdown(report, registry)
    if fmt == "json":
        return render_json(report, registry)
    if fmt == "csv":
        return render_csv(report, registry)
    raise ReportError(f"unknown report format {fmt!r}")
