"""Command-line interface for the full pipeline.

Batch stages (ingest, training, labeling, classification, evaluation) drive
the library directly on files; `serve-review` starts the HTTP review service
for the human-in-the-loop loop. Every command honors --config for defaults.
"""

from __future__ import annotations

import importlib.resources
import json
import sys
from pathlib import Path

import click
import httpx

from . import (
    classifier,
    discovery,
    embed,
    llmbench,
    metrics,
    newsstore,
    pipeline,
    relevance,
    silverforest,
)
from .newsstore import CyberCategory, normalize
from .pipeline import PipelineConfig


def load_seed_terms(path: str | Path | None) -> list[str]:
    """Seed terms in underscore form; defaults to the bundled base list."""
    if path is None:
        text = (importlib.resources.files("cybernews.data") / "base_terms.txt").read_text()
        lines = text.splitlines()
    else:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    terms = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        terms.append("_".join(normalize(line)))
    return terms


def load_phrase_lexicon(path: str | Path | None) -> list[str]:
    """Same source as seed terms, but space-joined for phrase merging."""
    return [t.replace("_", " ") for t in load_seed_terms(path)]


def _load_store(path: str | Path) -> list[newsstore.Article]:
    result = newsstore.load_articles(path)
    if result.duplicate_ids:
        click.echo(f"note: dropped {result.duplicate_ids} duplicate ids", err=True)
    return result.articles


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON pipeline config supplying default paths.")
@click.pass_context
def cli(ctx, config_path):
    """Cyber news alerting pipeline."""
    ctx.obj = PipelineConfig.from_file(config_path) if config_path else PipelineConfig()


def _resolved(flag_value, config_value, option_name):
    """Flag wins; otherwise fall back to the --config value."""
    value = flag_value if flag_value is not None else config_value
    if value is None:
        raise click.UsageError(f"missing {option_name} (flag or --config entry)")
    return value


@cli.command()
@click.option("--feed-url", "feed_urls", multiple=True)
@click.option("--feed-file", "feed_files", multiple=True, type=click.Path(exists=True))
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--feed-name", default=None, help="Override the feed name for all inputs.")
@click.pass_obj
def ingest(config, feed_urls, feed_files, store_path, feed_name):
    """Parse RSS/Atom feeds and append their articles to the store."""
    store_path = _resolved(store_path, config.store_path, "--store")
    total, skipped = 0, 0
    for url in feed_urls:
        payload = httpx.get(url, timeout=30.0, follow_redirects=True).content
        result = newsstore.parse_feed(payload, feed_name or httpx.URL(url).host or url)
        total += newsstore.append_articles(result.articles, store_path)
        skipped += result.skipped_empty_title
    for file_path in feed_files:
        payload = Path(file_path).read_bytes()
        result = newsstore.parse_feed(payload, feed_name or Path(file_path).stem)
        total += newsstore.append_articles(result.articles, store_path)
        skipped += result.skipped_empty_title
    click.echo(f"ingested {total} articles ({skipped} items skipped for empty titles)")


@cli.command("train-embeddings")
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--dim", default=100, show_default=True)
@click.option("--window", default=5, show_default=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--min-count", default=5, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--negative", default=5, show_default=True,
              help="Negative samples per pair; 0 = exact full-softmax mode.")
@click.option("--lr", default=0.025, show_default=True)
@click.option("--terms", "terms_path", type=click.Path(exists=True), default=None,
              help="Phrase lexicon merged into single tokens before training.")
@click.pass_obj
def train_embeddings(config, store_path, out_path, dim, window, epochs, min_count, seed,
                     negative, lr, terms_path):
    """Train skip-gram vectors on the stored headlines."""
    store_path = _resolved(store_path, config.store_path, "--store")
    out_path = _resolved(out_path, config.embedding_path, "--out")
    articles = _load_store(store_path)
    lexicon = load_phrase_lexicon(terms_path) if terms_path else None
    docs = newsstore.tokenize_articles(articles, lexicon)
    config = embed.SkipGramConfig(
        dimension=dim, window=window, epochs=epochs, learning_rate=lr,
        min_count=min_count, negative_samples=negative, seed=seed,
    )
    model = embed.train_skipgram(docs, config)
    embed.save_model(model, out_path)
    click.echo(
        f"trained {len(model.vocab)}-term embedding (dim {dim}); "
        f"last epoch objective {model.epoch_objectives[-1]:.4f}"
    )


@cli.command()
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True), default=None)
@click.option("--seeds", "seeds_path", type=click.Path(exists=True), default=None)
@click.option("--termdb-out", type=click.Path(), default=None)
@click.option("--audit-log", "audit_path", type=click.Path(), default=None)
@click.option("--threshold", type=float, default=None, help="Similarity cutoff [default: 0.6]")
@click.option("--max-runs", type=int, default=None, help="Run limit [default: 10]")
@click.option("--auto", type=click.Choice(["approve", "reject", "none"]), default="none",
              help="Scripted decisions instead of the interactive prompt.")
@click.option("--decisions", "decisions_path", type=click.Path(exists=True), default=None,
              help="JSON map term->approved|rejected; unlisted terms are rejected.")
@click.pass_obj
def discover(config, embeddings_path, seeds_path, termdb_out, audit_path, threshold,
             max_runs, auto, decisions_path):
    """Run the emerging-term discovery loop until it stops."""
    embeddings_path = _resolved(embeddings_path, config.embedding_path, "--embeddings")
    termdb_out = _resolved(termdb_out, config.termdb_path, "--termdb-out")
    audit_path = audit_path or config.audit_log_path
    threshold = threshold if threshold is not None else config.discovery_threshold
    max_runs = max_runs if max_runs is not None else config.max_runs
    model = embed.load_model(embeddings_path)
    if seeds_path is None and config.seed_terms:
        seeds = ["_".join(normalize(t)) for t in config.seed_terms]
    else:
        seeds = load_seed_terms(seeds_path)
    session = discovery.new_session(seeds, threshold=threshold, max_runs=max_runs)

    if decisions_path:
        scripted = json.loads(Path(decisions_path).read_text(encoding="utf-8"))
        source = lambda cands: [
            (c.term, scripted.get(c.term, discovery.REJECTED)) for c in cands
        ]
    elif auto == "approve":
        source = discovery.approve_all
    elif auto == "reject":
        source = discovery.reject_all
    else:
        def source(cands):
            out = []
            for c in cands:
                ok = click.confirm(
                    f"run {c.run_index}: {c.term} (seed {c.seed}, sim {c.similarity:.2f})?"
                )
                out.append((c.term, discovery.APPROVED if ok else discovery.REJECTED))
            return out

    discovery.run_until_stop(session, model, source)
    discovery.save_termdb(session.termdb, termdb_out)
    if audit_path:
        discovery.append_audit(session.audit, audit_path)
    rate = session.acceptance_rate()
    click.echo(
        f"stopped: {session.stop_reason} after run {session.run_index}; "
        f"termdb has {len(session.termdb)} terms"
        + (f"; acceptance rate {rate:.0%}" if rate is not None else "")
    )


def _forest_from_gold(gold, articles, hp):
    by_id = {a.id: a for a in articles}
    docs = []
    y = []
    for label in gold:
        article = by_id.get(label.article_id)
        if article is None:
            raise click.ClickException(f"gold label references unknown article {label.article_id}")
        docs.append(normalize(article.headline))
        y.append(label.category.value)
    vectorizer = silverforest.fit_tfidf(docs)
    x = silverforest.transform_many(vectorizer, docs)
    forest = silverforest.train_forest(x, y, hp)
    return forest, vectorizer


@cli.command("train-forest")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--hp", "hp_path", type=click.Path(exists=True), default=None,
              help="JSON file overriding forest hyperparameters.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def train_forest_cmd(config, gold_path, store_path, hp_path, out_path):
    """Train the random forest on gold labels."""
    store_path = _resolved(store_path, config.store_path, "--store")
    hp_kwargs = json.loads(Path(hp_path).read_text()) if hp_path else {}
    hp = silverforest.ForestHyperparams(**hp_kwargs)
    gold = silverforest.load_labels(gold_path)
    articles = _load_store(store_path)
    forest, vectorizer = _forest_from_gold(gold, articles, hp)
    if out_path:
        silverforest.save_forest(forest, vectorizer, out_path)
    click.echo(
        f"trained {hp.n_estimators}-tree forest on {len(gold)} gold labels "
        f"({vectorizer.n_features} features)"
    )


@cli.command("label-silver")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--cutoff", default=0.98, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--hp", "hp_path", type=click.Path(exists=True), default=None)
@click.pass_obj
def label_silver(config, gold_path, store_path, cutoff, out_path, hp_path):
    """Train on gold labels, silver-label the remaining articles."""
    store_path = _resolved(store_path, config.store_path, "--store")
    hp_kwargs = json.loads(Path(hp_path).read_text()) if hp_path else {}
    hp = silverforest.ForestHyperparams(**hp_kwargs)
    gold = silverforest.load_labels(gold_path)
    articles = _load_store(store_path)
    forest, vectorizer = _forest_from_gold(gold, articles, hp)

    gold_ids = {label.article_id for label in gold}
    pool = [a for a in articles if a.id not in gold_ids]
    result = silverforest.generate_silver_labels(forest, vectorizer, pool, cutoff)
    silverforest.save_labels(result.labels, out_path)

    gold_counts = {c.value: 0 for c in CyberCategory}
    for label in gold:
        gold_counts[label.category.value] += 1
    click.echo(f"silver-labeled {len(result.labels)}/{result.considered} articles at cutoff {cutoff}")
    for c in CyberCategory:
        click.echo(
            f"  {c.name:<18} gold {gold_counts[c.value]:>5}  silver {result.per_class_counts[c.value]:>5}"
        )


@cli.command()
@click.option("--regime", type=click.Choice(["full", "frozen", "lora"]), required=True)
@click.option("--rank", default=8, show_default=True)
@click.option("--labels", "label_paths", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True), default=None)
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--epochs", default=10, show_default=True)
@click.option("--batch", default=8, show_default=True)
@click.option("--seed", default=767, show_default=True)
@click.option("--data-seed", default=727, show_default=True)
@click.option("--lr", default=2e-2, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--history", "history_path", type=click.Path(), default=None)
@click.pass_obj
def train(config, regime, rank, label_paths, embeddings_path, store_path, epochs, batch,
          seed, data_seed, lr, out_path, history_path):
    """Train the headline classifier under a fine-tuning regime."""
    embeddings_path = _resolved(embeddings_path, config.embedding_path, "--embeddings")
    store_path = _resolved(store_path, config.store_path, "--store")
    out_path = _resolved(out_path, config.classifier_path, "--out")
    examples = []
    for path in label_paths:
        examples.extend(silverforest.load_labels(path))
    articles = _load_store(store_path)
    docs = newsstore.tokenize_articles(articles)
    embedding = embed.load_model(embeddings_path)
    config = classifier.TrainConfig(
        learning_rate=lr, batch_size=batch, epochs=epochs,
        data_seed=data_seed, seed=seed,
    )
    model, history = classifier.train_canal(
        classifier.parse_regime(regime, rank), examples, docs, embedding, config
    )
    classifier.save_model(model, out_path)
    if history_path:
        history.to_csv(history_path)
    click.echo(
        f"trained {regime} classifier on {len(examples)} labels; "
        f"best epoch {history.best_epoch} (val loss {min(history.val_loss):.4f})"
    )


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--rule", default=None, help="argmax or threshold:<tau>:<fallback> [default: argmax]")
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True), default=None)
@click.option("--termdb", "termdb_path", type=click.Path(exists=True), default=None)
@click.option("--gazetteer", "gazetteer_path", type=click.Path(exists=True), default=None)
@click.option("--relevance-model", "relevance_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def classify(config, model_path, store_path, rule, embeddings_path, termdb_path,
             gazetteer_path, relevance_path, out_path):
    """Classify stored articles into alerts."""
    model_path = _resolved(model_path, config.classifier_path, "--model")
    store_path = _resolved(store_path, config.store_path, "--store")
    embeddings_path = _resolved(embeddings_path, config.embedding_path, "--embeddings")
    out_path = _resolved(out_path, config.alerts_path, "--out")
    rule = rule if rule is not None else config.decision_rule
    termdb_path = termdb_path or config.termdb_path
    gazetteer_path = gazetteer_path or config.gazetteer_path
    relevance_path = relevance_path or config.relevance_model_path
    models = pipeline.PipelineModels(
        embedding=embed.load_model(embeddings_path),
        canal=classifier.load_model(model_path),
        relevance_model=relevance.load_relevance_model(relevance_path) if relevance_path else None,
        rule=pipeline.parse_decision_rule(rule),
    )
    termdb = discovery.load_termdb(termdb_path) if termdb_path else {}
    gazetteer = relevance.load_gazetteer(gazetteer_path) if gazetteer_path else relevance.Gazetteer()
    articles = _load_store(store_path)
    result = pipeline.classify_stream(articles, models, termdb, gazetteer)
    pipeline.save_alerts(result.alerts, out_path)
    click.echo(f"wrote {len(result.alerts)} alerts ({len(result.dead_letters)} quarantined)")
    for dead in result.dead_letters:
        click.echo(f"  dead-letter {dead.article_id}: {dead.error}", err=True)


@cli.command()
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--out", "report_path", type=click.Path(), default=None)
def evaluate(labels_path, pred_path, report_path):
    """Score predictions against gold labels and print the report table."""
    gold = {l.article_id: l.category for l in silverforest.load_labels(labels_path)}
    y_true, y_pred = [], []
    with open(pred_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if row["article_id"] in gold:
                y_true.append(gold[row["article_id"]].value)
                y_pred.append(int(row["category_code"]))
    if not y_true:
        raise click.ClickException("no overlapping article ids between labels and predictions")
    report = metrics.evaluate(y_true, y_pred)
    click.echo(metrics.render_report(report), nl=False)
    if report_path:
        metrics.report_to_json(report, report_path)


@cli.command("benchmark-llm")
@click.option("--endpoint", "endpoint_path", type=click.Path(exists=True), default=None,
              help="JSON endpoint config (base_url, model, prices, ...).")
@click.option("--template", type=click.Choice(["t1", "t2"]), default="t1", show_default=True)
@click.option("--shots", type=click.Choice(["zero", "one", "few"]), default="zero",
              show_default=True)
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--mock", "mock_path", type=click.Path(exists=True), default=None,
              help="Scripted replies JSON; replaces the live endpoint.")
@click.option("--parallel", default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def benchmark_llm(config, endpoint_path, template, shots, labels_path, store_path,
                  mock_path, parallel, out_path):
    """Benchmark an external chat-completion model on labeled headlines."""
    store_path = _resolved(store_path, config.store_path, "--store")
    gold = {l.article_id: l.category for l in silverforest.load_labels(labels_path)}
    articles = [a for a in _load_store(store_path) if a.id in gold]
    spec = llmbench.PromptSpec(template, shots, llmbench.default_exemplars(shots))

    config = None
    if endpoint_path:
        config = llmbench.LlmEndpointConfig(**json.loads(Path(endpoint_path).read_text()))
    if mock_path:
        client = llmbench.load_mock_script(mock_path)
    elif config:
        client = llmbench.HttpChatClient(config)
    else:
        raise click.ClickException("provide --endpoint or --mock")

    run = llmbench.run_benchmark(client, spec, articles, gold, config, parallel=parallel)
    if out_path:
        run.to_json(out_path)
    click.echo(
        f"{template}/{shots}: accuracy {run.penalized_accuracy:.3f} "
        f"(parse failures {run.parse_failure_rate:.1%}), cost ${run.cost:.4f}, "
        f"{run.wall_clock_s:.1f}s"
    )


@cli.command("serve-review")
@click.option("--bind", default=None, help="host:port [default: 127.0.0.1:8787]")
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True), default=None)
@click.option("--seeds", "seeds_path", type=click.Path(exists=True), default=None)
@click.option("--audit-log", "audit_path", type=click.Path(), default=None)
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--alerts", "alerts_path", type=click.Path(), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--max-runs", type=int, default=None)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory with the built review UI.")
@click.pass_obj
def serve_review(config, bind, embeddings_path, seeds_path, audit_path, store_path,
                 alerts_path, threshold, max_runs, static_dir):
    """Serve the discovery review API (and UI, if built)."""
    import uvicorn

    from . import service

    bind = bind if bind is not None else config.bind
    embeddings_path = _resolved(embeddings_path, config.embedding_path, "--embeddings")
    audit_path = _resolved(audit_path, config.audit_log_path, "--audit-log")
    store_path = store_path or config.store_path
    alerts_path = alerts_path or config.alerts_path
    threshold = threshold if threshold is not None else config.discovery_threshold
    max_runs = max_runs if max_runs is not None else config.max_runs

    model = embed.load_model(embeddings_path)
    articles = _load_store(store_path) if store_path else []
    if Path(audit_path).exists():
        state = service.ReviewState.resume(
            model, audit_path, threshold, max_runs, articles, alerts_path
        )
        click.echo(f"resumed session from {audit_path} (run {state.session.run_index})")
    else:
        session = discovery.new_session(
            load_seed_terms(seeds_path), threshold=threshold, max_runs=max_runs
        )
        state = service.ReviewState(session, model, audit_path, articles, alerts_path)
    app = service.create_app(state, static_dir)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


def cli_dispatch(argv: list[str]) -> int:
    """Run the CLI programmatically; returns the process exit code."""
    try:
        cli.main(args=list(argv), standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
