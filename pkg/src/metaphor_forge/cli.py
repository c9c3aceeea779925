"""Command-line entry points: run, eval, serve, report."""

from __future__ import annotations

import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import click

from .backends import (
    BackendConfig,
    HttpChatBackend,
    HttpEmbeddingBackend,
    HttpImageBackend,
    MockChatBackend,
    MockEmbeddingBackend,
    MockImageBackend,
    config_from_env,
)
from .decomposer import Decomposer
from .judge import VlmJudge
from .model import (
    GENERATION_PROFILES,
    GenerationParams,
    Metaphor,
    validate_metaphor,
)
from .refinery import Refinery, RunFailed
from .rewards import RewardScorer, WeightConfig, bert_similarity, clip_score
from .service import create_app

ROLES = ("llm", "image", "vlm", "embed")

# Summary columns, in reporting order.
METRIC_COLUMNS = ("decomposition", "clip", "m_align", "s_presence",
                  "t_presence", "bert_s", "bert_t", "bert_m")
METRIC_HEADERS = ("Decomposition", "CLIP", "MA", "S-p", "T-p",
                  "BERT-S", "BERT-T", "BERT-M")


@dataclass
class RunConfig:
    backends: dict = field(default_factory=dict)  # role -> BackendConfig
    weights: WeightConfig = field(default_factory=WeightConfig)
    n_iterations: int = 10
    profile: str = "turbo"
    generation_profiles: dict = field(
        default_factory=lambda: dict(GENERATION_PROFILES))
    out_dir: str = "out"
    parallelism: int = 2
    dataset_path: str = ""
    cache_dir: Optional[str] = None
    short_metaphor_words: int = 5  # report length-bucket threshold
    mock: bool = False
    seed: int = 0

    def params(self) -> GenerationParams:
        if self.profile not in self.generation_profiles:
            raise click.ClickException(
                f"unknown generation profile {self.profile!r}")
        return self.generation_profiles[self.profile]


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix == ".json":
        return json.loads(raw)
    import tomli
    return tomli.loads(raw.decode("utf-8"))


def _env_override(name: str, cast=str):
    value = os.environ.get(f"METAPHOR_FORGE_{name.upper()}")
    return cast(value) if value is not None else None


def build_config(config_path: Optional[str], **cli_overrides) -> RunConfig:
    """Merge built-in defaults < config file < env vars < CLI flags."""
    data = _load_config_file(config_path)
    cfg = RunConfig()
    simple_fields = {f.name for f in fields(RunConfig)} - {
        "backends", "weights", "generation_profiles"}
    for name in simple_fields:
        if name in data:
            setattr(cfg, name, data[name])
    for role, bdata in data.get("backends", {}).items():
        cfg.backends[role] = BackendConfig(**bdata)
    if "weights" in data:
        cfg.weights = WeightConfig(**data["weights"])
    for name, pdata in data.get("generation_profiles", {}).items():
        cfg.generation_profiles[name] = GenerationParams(**pdata)
    for name, cast in (("n_iterations", int), ("out_dir", str),
                       ("parallelism", int), ("profile", str),
                       ("dataset_path", str)):
        value = _env_override(name, cast)
        if value is not None:
            setattr(cfg, name, value)
    for name, value in cli_overrides.items():
        if value is not None:
            setattr(cfg, name, value)
    return cfg


@dataclass
class Stack:
    """The wired-up pipeline: backends plus every engine built on them."""

    decomposer: Decomposer
    judge: VlmJudge
    scorer: RewardScorer
    refinery: Refinery
    embed: object
    probes: dict


def build_stack(cfg: RunConfig) -> Stack:
    if cfg.mock:
        llm = MockChatBackend(seed=cfg.seed)
        vlm = MockChatBackend(seed=cfg.seed + 1)
        image = MockImageBackend(seed=cfg.seed)
        embed = MockEmbeddingBackend(seed=cfg.seed)
        probes = {role: (lambda: True) for role in ROLES}
    else:
        def backend_cfg(role: str) -> BackendConfig:
            return config_from_env(role, cfg.backends.get(role,
                                                          BackendConfig()))
        llm = HttpChatBackend(backend_cfg("llm"))
        vlm = HttpChatBackend(backend_cfg("vlm"))
        image = HttpImageBackend(backend_cfg("image"))
        embed = HttpEmbeddingBackend(backend_cfg("embed"))
        probes = {role: (lambda: True) for role in ROLES}
    decomposer = Decomposer(llm, judge=vlm)
    judge = VlmJudge(vlm)
    scorer = RewardScorer(image, judge, embed, decomposer,
                          cache_dir=Path(cfg.cache_dir) if cfg.cache_dir
                          else None)
    refinery = Refinery(llm, decomposer, scorer,
                        out_dir=Path(cfg.out_dir) if cfg.out_dir else None)
    return Stack(decomposer=decomposer, judge=judge, scorer=scorer,
                 refinery=refinery, embed=embed, probes=probes)


def load_dataset(path: str) -> list[Metaphor]:
    p = Path(path)
    if not p.exists():
        raise click.ClickException(f"dataset not found: {path}")
    metaphors: list[Metaphor] = []
    if p.suffix == ".csv":
        with open(p, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                if not row.get("text", "").strip():
                    continue
                metaphors.append(validate_metaphor(
                    row["text"], id=row.get("id") or None,
                    category=row.get("category") or None))
    else:
        for line in p.read_text(encoding="utf-8").splitlines():
            if line.strip():
                metaphors.append(validate_metaphor(line))
    return metaphors


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _format_table(rows: list[dict], headers=METRIC_HEADERS,
                  columns=METRIC_COLUMNS, label_key: str = "label") -> str:
    lines = ["| " + " | ".join(("", ) + headers).strip() + " |",
             "|" + "---|" * (len(headers) + 1)]
    for row in rows:
        cells = [str(row.get(label_key, ""))]
        for col in columns:
            v = row.get(col)
            cells.append("-" if v is None else f"{v:.4f}")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


@click.group()
def main():
    """Visual metaphor generation, scoring, and refinement."""


_common = [
    click.option("--config", "config_path", type=str, default=None,
                 help="TOML or JSON config file."),
    click.option("--mock", is_flag=True, default=None,
                 help="Use deterministic in-process mock backends."),
    click.option("--seed", type=int, default=None),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command()
@common_options
@click.option("--dataset", "dataset_path", type=str, default=None)
@click.option("--out", "out_dir", type=str, default=None)
@click.option("--profile", type=str, default=None)
@click.option("--iterations", "n_iterations", type=int, default=None)
@click.option("--parallelism", type=int, default=None)
def run(config_path, **overrides):
    """Run the refinement loop over a dataset of metaphors."""
    cfg = build_config(config_path, **overrides)
    metaphors = load_dataset(cfg.dataset_path)
    if not metaphors:
        raise click.ClickException("no metaphors in dataset")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    stack = build_stack(cfg)
    params = cfg.params()
    snapshot = {"profile": cfg.profile, "n_iterations": cfg.n_iterations,
                "seed": cfg.seed, "mock": cfg.mock}

    def one(m: Metaphor):
        try:
            return stack.refinery.run_metaphor(
                m, n_iterations=cfg.n_iterations, params=params,
                weights=cfg.weights, config_snapshot=snapshot)
        except RunFailed as e:
            click.echo(f"FAILED {m.id}: {e}", err=True)
            return None

    with ThreadPoolExecutor(max_workers=max(1, cfg.parallelism)) as pool:
        results = list(pool.map(one, metaphors))

    completed = [r for r in results if r is not None]
    if completed:
        summary = {"label": f"mean over {len(completed)} runs"}
        selected = [r.selected for r in completed]
        summary["decomposition"] = _mean(
            [r.decomposition_score.score for r in completed])
        for col in METRIC_COLUMNS[1:]:
            summary[col] = _mean([getattr(it.breakdown, col)
                                  for it in selected])
        table = _format_table([summary])
        click.echo(table)
        (Path(cfg.out_dir) / "summary.md").write_text(table + "\n")
    click.echo(f"completed {len(completed)}/{len(metaphors)} runs "
               f"-> {cfg.out_dir}/runs.jsonl")
    sys.exit(0 if len(completed) == len(metaphors) else 1)


@main.command("eval")
@common_options
@click.option("--pairs", "pairs_path", type=str, required=True,
              help="CSV with columns: text, image_path[, source, target, meaning]")
@click.option("--out", "out_path", type=str, default=None)
def eval_cmd(config_path, pairs_path, out_path, **overrides):
    """Score existing (metaphor, image) pairs, with or without a
    source/target/meaning breakdown."""
    from .model import Decomposition, ImageArtifact, VisualPrompt

    cfg = build_config(config_path, **overrides)
    stack = build_stack(cfg)
    rows = []
    with open(pairs_path, newline="", encoding="utf-8") as f:
        for record in csv.DictReader(f):
            label = record.get("text", "")[:40]
            row: dict = {"label": label}
            try:
                metaphor = validate_metaphor(record["text"])
                image_bytes = Path(record["image_path"]).read_bytes()
                image = ImageArtifact(bytes=image_bytes,
                                      prompt_text=metaphor.text)
            except (OSError, KeyError, ValueError) as e:
                row["label"] = f"{label} [error: {e}]"
                rows.append(row)
                continue
            prompt = VisualPrompt.from_text(metaphor.text)
            row["clip"] = clip_score(stack.embed, image, prompt)
            has_stm = all(record.get(k, "").strip()
                          for k in ("source", "target", "meaning"))
            if has_stm:
                d = Decomposition(source=record["source"],
                                  target=record["target"],
                                  meaning=record["meaning"])
                analysis = stack.judge.analyze_with_stm(image, metaphor, d)
                row["decomposition"] = stack.decomposer.score_decomposition(
                    metaphor, d).score
                row["m_align"] = analysis.m_align
                row["s_presence"] = analysis.s_presence
                row["t_presence"] = analysis.t_presence
                row["bert_s"] = bert_similarity(stack.embed, d.source,
                                                analysis.s_prime)[0]
                row["bert_t"] = bert_similarity(stack.embed, d.target,
                                                analysis.t_prime)[0]
                row["bert_m"] = bert_similarity(stack.embed, d.meaning,
                                                analysis.m_prime)[0]
            else:
                # Text-incapable generator path: only CLIP and overall
                # alignment are computable.
                analysis = stack.judge.analyze_without_stm(image, metaphor)
                row["m_align"] = analysis.alignment_score
            rows.append(row)
    table = _format_table(rows)
    click.echo(table)
    if out_path:
        Path(out_path).write_text(table + "\n")


@main.command()
@common_options
@click.option("--listen", type=str, default="127.0.0.1:8080",
              help="host:port to bind.")
@click.option("--max-batch", type=int, default=64)
def serve(config_path, listen, max_batch, **overrides):
    """Start the batch reward-scoring HTTP service."""
    import uvicorn

    cfg = build_config(config_path, **overrides)
    stack = build_stack(cfg)
    app = create_app(stack.scorer, weights=cfg.weights, probes=stack.probes,
                     max_batch=max_batch, default_params=cfg.params())
    host, _, port = listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))


def build_report(runs_path: Path, short_words: int = 5) -> str:
    """Aggregate a runs.jsonl file into a markdown report."""
    runs = []
    warnings = []
    if runs_path.exists():
        for i, line in enumerate(runs_path.read_text().splitlines()):
            if not line.strip():
                continue
            try:
                runs.append(json.loads(line))
            except json.JSONDecodeError:
                warnings.append(f"line {i + 1}: malformed, skipped")
    out = ["# Run report", ""]
    out.append(f"Runs: {len(runs)}")
    if warnings:
        out += ["", "Warnings:"] + [f"- {w}" for w in warnings]
    if not runs:
        out.append("")
        out.append("Zero runs; nothing to aggregate.")
        return "\n".join(out)

    def selected(run: dict) -> dict:
        return run["iterations"][run["selected_index"]]

    def metric_row(label: str, group: list[dict]) -> dict:
        row = {"label": label}
        row["decomposition"] = _mean([r["decomposition_score"]
                                      for r in group])
        for col in METRIC_COLUMNS[1:]:
            row[col] = _mean([selected(r)["components"][col] for r in group])
        row["total"] = _mean([selected(r)["reward"] for r in group])
        return row

    out += ["", "## Overall", "",
            _format_table([metric_row("all", runs)],
                          headers=METRIC_HEADERS + ("Total",),
                          columns=METRIC_COLUMNS + ("total",))]

    by_category: dict[str, list[dict]] = {}
    for r in runs:
        cat = r["metaphor"].get("category")
        if cat:
            by_category.setdefault(cat, []).append(r)
    if by_category:
        rows = [metric_row(cat, group)
                for cat, group in sorted(by_category.items())]
        out += ["", "## By category", "",
                _format_table(rows, headers=METRIC_HEADERS + ("Total",),
                              columns=METRIC_COLUMNS + ("total",))]

    short = [r for r in runs
             if len(r["metaphor"]["text"].split()) <= short_words]
    long_ = [r for r in runs
             if len(r["metaphor"]["text"].split()) > short_words]
    rows = []
    if short:
        rows.append(metric_row(f"short (<= {short_words} words)", short))
    if long_:
        rows.append(metric_row(f"long (> {short_words} words)", long_))
    if rows:
        out += ["", "## By metaphor length", "",
                _format_table(rows, headers=METRIC_HEADERS + ("Total",),
                              columns=METRIC_COLUMNS + ("total",))]

    out += ["", "## Reward trajectories", ""]
    for r in runs:
        rewards = [(it["reward"] if it["reward"] is not None else "fail")
                   for it in r["iterations"]]
        path = " -> ".join(f"{v:.4f}" if isinstance(v, float) else v
                           for v in rewards)
        out.append(f"- `{r['metaphor']['text']}`: {path} "
                   f"(selected iteration {r['selected_index']})")
    return "\n".join(out) + "\n"


@main.command()
@click.argument("runs_file", type=str)
@click.option("--out", "out_path", type=str, default=None)
@click.option("--short-words", type=int, default=5,
              help="Word-count threshold between short and long metaphors.")
def report(runs_file, out_path, short_words):
    """Summarize a runs.jsonl file as markdown."""
    text = build_report(Path(runs_file), short_words=short_words)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
