"""Command-line surface: baseline builds, candidate evaluation, feed
monitoring, perturbation scenarios, and history reports.

Exit codes are a contract: 0 means success with no flags, 2 means an
anomaly was flagged or a scenario assertion failed, 1 means an
operational error. Diagnostics go to stderr, one line each, prefixed
WARN or ALERT.
"""

import argparse
import json
import logging
import os
import signal
import sys
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import requests

from kgmon.extract import (
    ArticleDoc,
    ExtractError,
    NerDictionary,
    PatternRule,
    build_baseline,
    load_dictionary,
    load_rules,
)
from kgmon.graph import canonical_serialize
from kgmon.hallucination import validate_graph
from kgmon.llm import (
    EndpointConfig,
    LlmError,
    PromptTemplate,
    extract_batch,
    ingest_offline,
    load_template,
)
from kgmon.metrics import MetricsError, metric_vector
from kgmon.monitor import (
    BASELINE_MODEL,
    DEFAULT_LAMBDA,
    DEFAULT_WARMUP,
    DEFAULT_WINDOW,
    AnomalyWeights,
    HistoryRow,
    MonitorError,
    ThresholdState,
    append_history,
    baseline_row,
    normalize_weights,
    observe,
    parse_history_line,
    record_to_row,
)
from kgmon.ontology import Ontology, OntologyError, load_ontology
from kgmon.simlab import (
    ScenarioConfig,
    SimulationError,
    load_schedule,
    run_scenario,
    synthetic_stream,
)

log = logging.getLogger(__name__)


class CliError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    ontology: str
    dictionary: str
    rules: str
    history: str
    models: list[str]
    weights: AnomalyWeights
    lam: float = DEFAULT_LAMBDA
    window: int = DEFAULT_WINDOW
    warmup_min: int = DEFAULT_WARMUP
    endpoint_config: str | None = None
    feed_url: str | None = None
    noise_sigma: float = 0.0
    noise_seed: int = 0


class _DiagnosticFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        level = "WARN" if record.levelno == logging.WARNING else record.levelname
        return f"{level} {record.getMessage()}"


def _setup_logging() -> None:
    root = logging.getLogger()
    if not any(getattr(h, "_kgmon_diag", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(_DiagnosticFormatter())
        handler._kgmon_diag = True  # type: ignore[attr-defined]
        root.addHandler(handler)
    if root.level > logging.WARNING or root.level == logging.NOTSET:
        root.setLevel(logging.WARNING)


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _resolve(base: Path, value: str) -> str:
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


_CONFIG_KEYS = {
    "ontology",
    "dictionary",
    "rules",
    "weights",
    "lambda",
    "window",
    "warmup_min",
    "history",
    "endpoint_config",
    "models",
    "feed_url",
    "noise_sigma",
    "noise_seed",
}

_REQUIRED_CONFIG_KEYS = ("ontology", "dictionary", "rules", "history", "models")


def load_run_config(path: str) -> RunConfig:
    """Parse the JSON run configuration. Relative paths resolve against the
    config file's directory; the schema/dictionary/rules files must exist."""
    try:
        payload = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise CliError(f"config {path}: expected a key-value document")
    unknown = sorted(set(payload) - _CONFIG_KEYS)
    if unknown:
        raise CliError(f"config {path}: unknown keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED_CONFIG_KEYS if k not in payload]
    if missing:
        raise CliError(f"config {path}: missing keys: {', '.join(missing)}")

    base = Path(path).resolve().parent
    models = payload["models"]
    if not isinstance(models, list) or any(
        not isinstance(m, str) or not m for m in models
    ):
        raise CliError(f"config {path}: models must be a list of names")
    if BASELINE_MODEL in models:
        raise CliError(f"config {path}: {BASELINE_MODEL!r} is reserved")
    if len(set(models)) != len(models):
        raise CliError(f"config {path}: duplicate model names")

    weights_payload = payload.get("weights", {"icr": 1.0, "ipr": 1.0, "ci": 1.0})
    if not isinstance(weights_payload, dict) or not {"icr", "ipr", "ci"} <= set(
        weights_payload
    ):
        raise CliError(f"config {path}: weights need icr, ipr and ci entries")
    extra = sorted(set(weights_payload) - {"icr", "ipr", "ci", "hal"})
    if extra:
        raise CliError(f"config {path}: unknown weight keys: {', '.join(extra)}")
    hal_w = weights_payload.get("hal")
    try:
        weights = normalize_weights(
            float(weights_payload["icr"]),
            float(weights_payload["ipr"]),
            float(weights_payload["ci"]),
            None if hal_w is None else float(hal_w),
        )
    except (TypeError, ValueError) as exc:
        raise CliError(f"config {path}: bad weights: {exc}") from exc

    endpoint = payload.get("endpoint_config")
    feed_url = payload.get("feed_url")
    config = RunConfig(
        ontology=_resolve(base, payload["ontology"]),
        dictionary=_resolve(base, payload["dictionary"]),
        rules=_resolve(base, payload["rules"]),
        history=_resolve(base, payload["history"]),
        models=list(models),
        weights=weights,
        lam=float(payload.get("lambda", DEFAULT_LAMBDA)),
        window=int(payload.get("window", DEFAULT_WINDOW)),
        warmup_min=int(payload.get("warmup_min", DEFAULT_WARMUP)),
        endpoint_config=None if endpoint is None else _resolve(base, endpoint),
        feed_url=feed_url,
        noise_sigma=float(payload.get("noise_sigma", 0.0)),
        noise_seed=int(payload.get("noise_seed", 0)),
    )
    for label, fpath in (
        ("ontology", config.ontology),
        ("dictionary", config.dictionary),
        ("rules", config.rules),
    ):
        if not os.path.isfile(fpath):
            raise CliError(f"config {path}: {label} file not found: {fpath}")
    return config


def _load_endpoint(config: RunConfig) -> tuple[dict, PromptTemplate]:
    if not config.endpoint_config:
        raise CliError("live candidates need endpoint_config in the run config")
    path = config.endpoint_config
    try:
        payload = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise CliError(f"endpoint config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise CliError(f"endpoint config {path}: expected a key-value document")
    allowed = {
        "url",
        "auth_env",
        "temperature",
        "timeout",
        "max_retries",
        "parallelism",
        "template",
    }
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise CliError(f"endpoint config {path}: unknown keys: {', '.join(unknown)}")
    for key in ("url", "auth_env", "template"):
        if key not in payload:
            raise CliError(f"endpoint config {path}: missing {key}")
    base = Path(path).resolve().parent
    template = load_template(_read_text(_resolve(base, payload["template"])))
    fields = {
        "url": payload["url"],
        "auth_env": payload["auth_env"],
        "temperature": float(payload.get("temperature", 0.0)),
        "timeout": float(payload.get("timeout", 30.0)),
        "max_retries": int(payload.get("max_retries", 2)),
        "parallelism": int(payload.get("parallelism", 4)),
    }
    return fields, template


def _escape_text(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def _unescape_text(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def _parse_batch_text(text: str) -> list[ArticleDoc]:
    articles: list[ArticleDoc] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        fields = raw.split("\t", 2)
        if len(fields) != 3:
            raise CliError(
                f"batch line {lineno}: expected id, published_at and text"
            )
        article_id = fields[0].strip()
        if not article_id:
            raise CliError(f"batch line {lineno}: empty article id")
        try:
            published = int(fields[1])
        except ValueError as exc:
            raise CliError(
                f"batch line {lineno}: published_at must be an integer"
            ) from exc
        articles.append(
            ArticleDoc(
                id=article_id,
                published_at=published,
                text=_unescape_text(fields[2]),
            )
        )
    return articles


def _feed_get(url: str) -> str:
    response = requests.get(url, timeout=30)
    response.raise_for_status()
    return response.text


def _is_url(source: str) -> bool:
    return source.startswith(("http://", "https://"))


def load_batch(
    source: str, seen_path: str | None = None, http_get=None
) -> list[ArticleDoc]:
    """Load articles from a directory of .txt files, a batch record file,
    or a feed URL. Feed loads dedupe against the seen-set sidecar and
    record every fetched id there. An empty batch warns, never errors."""
    if _is_url(source):
        text = (_feed_get if http_get is None else http_get)(source)
        articles = _parse_batch_text(text)
        if seen_path is not None:
            articles = _dedupe_seen(articles, seen_path)
    elif os.path.isdir(source):
        articles = []
        for path in sorted(Path(source).glob("*.txt")):
            text = path.read_text(encoding="utf-8")
            if not text.strip():
                log.warning("skipping empty article file %s", path.name)
                continue
            articles.append(
                ArticleDoc(
                    id=path.stem,
                    published_at=int(path.stat().st_mtime),
                    text=text,
                )
            )
    elif os.path.isfile(source):
        articles = _parse_batch_text(_read_text(source))
    else:
        raise CliError(f"batch source not found: {source}")

    ids = [a.id for a in articles]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CliError(f"duplicate article ids in batch: {', '.join(dupes)}")
    if not articles:
        log.warning("empty batch from %s", source)
    return articles


def _dedupe_seen(articles: list[ArticleDoc], seen_path: str) -> list[ArticleDoc]:
    seen: set[str] = set()
    if os.path.exists(seen_path):
        with open(seen_path, encoding="utf-8") as fh:
            seen = {line.strip() for line in fh if line.strip()}
    fresh = [a for a in articles if a.id not in seen]
    merged = seen | {a.id for a in articles}
    if merged != seen:
        with open(seen_path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{article_id}\n" for article_id in sorted(merged))
    return fresh


def _batch_label(source: str) -> str:
    if _is_url(source):
        return "feed"
    path = Path(source)
    if path.is_dir():
        return path.name or "batch"
    return path.stem or "batch"


def _load_pipeline(
    config: RunConfig,
) -> tuple[Ontology, NerDictionary, list[PatternRule]]:
    ontology = load_ontology(_read_text(config.ontology))
    dictionary = load_dictionary(_read_text(config.dictionary), ontology)
    rules = load_rules(_read_text(config.rules), ontology)
    return ontology, dictionary, rules


def _read_history_rows(path: str) -> list[HistoryRow]:
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8") as fh:
        return [parse_history_line(line) for line in fh if line.strip()]


def _bootstrap_state(
    rows: list[HistoryRow], model: str, config: RunConfig
) -> ThresholdState:
    scores = [r.score for r in rows if r.model == model]
    last_ts = None
    for row in rows:
        if row.model == model:
            last_ts = row.timestamp
    return ThresholdState(
        scores=scores[-config.window :],
        capacity=config.window,
        lam=config.lam,
        warmup_min=config.warmup_min,
        last_timestamp=last_ts,
    )


def _parse_candidates(items: list[str], config: RunConfig) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise CliError(f"candidate must be MODEL=PATH or MODEL=live: {item!r}")
        model, source = item.split("=", 1)
        model, source = model.strip(), source.strip()
        if not model or not source:
            raise CliError(f"candidate must be MODEL=PATH or MODEL=live: {item!r}")
        if model == BASELINE_MODEL:
            raise CliError(f"{BASELINE_MODEL!r} is reserved for baseline rows")
        if model in out:
            raise CliError(f"duplicate candidate model {model!r}")
        if model not in config.models:
            raise CliError(f"model {model!r} not listed in config models")
        out[model] = source
    return out


def _alert_line(alert) -> str:
    return (
        f"ALERT model={alert.model} timestamp={alert.timestamp} "
        f"score={alert.score:.6f} threshold={alert.threshold:.6f} "
        f"top={alert.top_metric}"
    )


def _evaluate_once(
    config: RunConfig,
    ontology: Ontology,
    dictionary: NerDictionary,
    rules: list[PatternRule],
    batch: list[ArticleDoc],
    batch_id: str,
    timestamp: int,
    candidates: dict[str, str],
    transport=None,
) -> bool:
    """Shared evaluate cycle: baseline row first, then one observed row per
    candidate in model-name order. Returns True when any model flagged."""
    g_base, _diags = build_baseline(
        batch, dictionary, rules, ontology, batch_id=batch_id, timestamp=timestamp
    )
    base_metrics = metric_vector(g_base, ontology)
    if config.weights.w_hal is not None:
        base_report = validate_graph(g_base, batch, ontology)
        base_metrics = replace(base_metrics, hal=base_report.score)

    history_rows = _read_history_rows(config.history)
    append_history(config.history, baseline_row(timestamp, batch_id, base_metrics))

    endpoint_loaded: tuple[dict, PromptTemplate] | None = None
    any_flag = False
    any_success = False
    for model in sorted(candidates):
        source = candidates[model]
        try:
            if source == "live":
                if endpoint_loaded is None:
                    endpoint_loaded = _load_endpoint(config)
                fields, template = endpoint_loaded
                endpoint = EndpointConfig(model_name=model, **fields)
                g_llm, _ing = extract_batch(
                    batch,
                    endpoint,
                    template,
                    ontology,
                    batch_id=batch_id,
                    timestamp=timestamp,
                    transport=transport,
                )
            else:
                g_llm, _ing = ingest_offline(
                    source, batch_id=batch_id, timestamp=timestamp
                )
        except CliError:
            raise
        except (OSError, LlmError, requests.RequestException, ValueError) as exc:
            log.warning("model %s extraction failed: %s", model, exc)
            continue
        any_success = True

        report = validate_graph(g_llm, batch, ontology)
        cand_metrics = replace(metric_vector(g_llm, ontology), hal=report.score)
        state = _bootstrap_state(history_rows, model, config)
        record, alert = observe(
            state,
            timestamp=timestamp,
            model=model,
            metrics=cand_metrics,
            baseline_metrics=base_metrics,
            weights=config.weights,
            batch_id=batch_id,
            hall_total=report.total,
            hall_failed=report.hallucinated,
        )
        append_history(config.history, record_to_row(record))
        if alert is not None:
            print(_alert_line(alert), file=sys.stderr)
        any_flag = any_flag or record.flagged

    if candidates and not any_success:
        raise CliError("every candidate extraction failed")
    return any_flag


def cmd_build_baseline(args: argparse.Namespace) -> int:
    ontology = load_ontology(_read_text(args.ontology))
    dictionary = load_dictionary(_read_text(args.dictionary), ontology)
    rules = load_rules(_read_text(args.rules), ontology)
    batch = load_batch(args.batch)
    graph, diags = build_baseline(
        batch, dictionary, rules, ontology, batch_id=_batch_label(args.batch)
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(canonical_serialize(graph))
    print(
        f"{len(graph.entities)} entities, {len(graph.triples)} triples, "
        f"{diags.class_conflicts} class conflicts -> {args.out}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    if not config.models:
        raise CliError("config lists no models to evaluate")
    candidates = _parse_candidates(args.candidate, config)
    ontology, dictionary, rules = _load_pipeline(config)
    timestamp = args.timestamp if args.timestamp is not None else int(time.time())
    batch = load_batch(args.batch)
    flagged = _evaluate_once(
        config,
        ontology,
        dictionary,
        rules,
        batch,
        _batch_label(args.batch),
        timestamp,
        candidates,
    )
    return 2 if flagged else 0


def cmd_monitor(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    if not config.feed_url:
        raise CliError("monitor needs feed_url in the run config")
    if not config.models:
        raise CliError("config lists no models to monitor")
    if args.interval <= 0:
        raise CliError("interval must be positive")
    ontology, dictionary, rules = _load_pipeline(config)
    _load_endpoint(config)  # fail on config problems before the loop starts
    candidates = {model: "live" for model in config.models}
    seen_path = config.history + ".seen"

    stop = threading.Event()

    def _request_stop(_signum, _frame) -> None:
        stop.set()

    previous = signal.signal(signal.SIGINT, _request_stop)
    cycles_done = 0
    try:
        while not stop.is_set():
            cycle_ts = int(time.time())
            try:
                batch = load_batch(config.feed_url, seen_path=seen_path)
            except (CliError, requests.RequestException, OSError) as exc:
                log.warning("feed fetch failed: %s", exc)
                batch = []
            if batch:
                try:
                    _evaluate_once(
                        config,
                        ontology,
                        dictionary,
                        rules,
                        batch,
                        _batch_label(config.feed_url),
                        cycle_ts,
                        candidates,
                    )
                except (CliError, MonitorError, LlmError, OSError) as exc:
                    log.warning("cycle failed: %s", exc)
            cycles_done += 1
            if args.cycles is not None and cycles_done >= args.cycles:
                break
            stop.wait(args.interval)
    finally:
        signal.signal(signal.SIGINT, previous)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    ontology = load_ontology(_read_text(config.ontology))
    schedule, flag_asserts = load_schedule(_read_text(args.schedule))
    if args.steps < 1:
        raise CliError("steps must be positive")
    scenario = ScenarioConfig(
        ontology=ontology,
        weights=config.weights,
        lam=config.lam,
        capacity=config.window,
        warmup_min=config.warmup_min,
        noise_sigma=config.noise_sigma,
        noise_seed=config.noise_seed,
        history_path=config.history,
    )
    result = run_scenario(
        synthetic_stream(ontology, args.steps), schedule, scenario
    )
    print(result.summary_line())
    failed = [
        step
        for step in flag_asserts
        if step >= len(result.records) or not result.records[step].flagged
    ]
    for step in failed:
        log.warning("assertion failed: no flag at step %d", step)
    return 2 if failed else 0


_METRIC_ROWS = (("ICR", "icr"), ("IPR", "ipr"), ("CI", "ci"), ("Hal", "hal"))


def _render_table(
    timestamp: int, cells: dict[str, HistoryRow], columns: list[str]
) -> str:
    matrix = [["metric"] + columns]
    for label, attr in _METRIC_ROWS:
        row = [label]
        for model in columns:
            value = getattr(cells[model], attr)
            row.append("-" if value is None else f"{value:.2f}")
        matrix.append(row)
    widths = [
        max(len(matrix[r][c]) for r in range(len(matrix)))
        for c in range(len(matrix[0]))
    ]
    lines = [f"timestamp {timestamp}"]
    for row in matrix:
        lines.append(
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        )
    return "\n".join(lines)


def cmd_report(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.history):
        raise CliError(f"history not found: {args.history}")
    with open(args.history, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    pairs = [(parse_history_line(line), line) for line in lines]
    if args.timestamp is not None:
        pairs = [(r, l) for r, l in pairs if r.timestamp == args.timestamp]

    if args.format == "records":
        if args.model is not None:
            pairs = [(r, l) for r, l in pairs if r.model == args.model]
        for _row, line in pairs:
            print(line)
        return 0

    rows = [r for r, _ in pairs]
    tables: list[str] = []
    for ts in sorted({r.timestamp for r in rows}):
        ts_rows = [r for r in rows if r.timestamp == ts]
        cells: dict[str, HistoryRow] = {}
        for row in ts_rows:
            cells[row.model] = row  # last row per model wins
        models = sorted(m for m in cells if m != BASELINE_MODEL)
        if args.model is not None:
            models = [m for m in models if m == args.model]
        columns = ([BASELINE_MODEL] if BASELINE_MODEL in cells else []) + models
        if not columns:
            continue
        tables.append(_render_table(ts, cells, columns))
    if tables:
        print("\n\n".join(tables))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgmon",
        description="Knowledge-graph quality monitoring over streaming text batches",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "build-baseline", help="extract the deterministic baseline graph"
    )
    p.add_argument("--ontology", required=True)
    p.add_argument("--dict", dest="dictionary", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--batch", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score candidate graphs against a batch")
    p.add_argument("--config", required=True)
    p.add_argument("--batch", required=True)
    p.add_argument(
        "--candidate",
        action="append",
        required=True,
        metavar="MODEL=PATH|live",
        help="candidate source; repeatable",
    )
    p.add_argument("--timestamp", type=int, default=None)

    p = sub.add_parser("monitor", help="poll a feed and evaluate continuously")
    p.add_argument("--config", required=True)
    p.add_argument("--interval", type=float, required=True)
    p.add_argument(
        "--cycles",
        type=int,
        default=None,
        help="stop after N cycles instead of running until interrupted",
    )

    p = sub.add_parser("simulate", help="run a seeded perturbation scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--steps", type=int, required=True)

    p = sub.add_parser("report", help="render history records")
    p.add_argument("--history", required=True)
    p.add_argument("--timestamp", type=int, default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--format", choices=("table", "records"), default="table")

    return parser


_COMMANDS = {
    "build-baseline": cmd_build_baseline,
    "evaluate": cmd_evaluate,
    "monitor": cmd_monitor,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (
        CliError,
        OntologyError,
        ExtractError,
        MetricsError,
        MonitorError,
        SimulationError,
        LlmError,
    ) as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 1
    except (OSError, requests.RequestException) as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
