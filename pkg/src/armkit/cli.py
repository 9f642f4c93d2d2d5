"""Command-line entry points: arm gen | train | eval | build-db | serve."""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import data as data_mod
from .data import (
    RawDataset,
    Schema,
    SyntheticSpec,
    dataset_hash,
    fico_schema,
    generate_synthetic,
    load_csv,
    write_csv,
)
from .model import ArmModel, scoring_table_csv
from .setcover import (
    DatasetIndex,
    ExplanationDb,
    SolverBudget,
    build_explanation_db,
)
from .train import TrainConfig, evaluate, train_model


def _load_schema(path) -> Schema:
    return Schema.from_json_file(path) if path else fico_schema()


def _load_config(path) -> TrainConfig:
    if not path:
        return TrainConfig()
    with open(path) as fh:
        return TrainConfig(**json.load(fh))


@click.group()
def main():
    """Additive risk model toolkit."""


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON synthetic spec (n_rows, seed, missing_rate, temperature).")
@click.option("--n", "n_rows", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def gen(spec_path, n_rows, seed, out):
    """Generate a synthetic FICO-like dataset CSV."""
    kwargs = {}
    if spec_path:
        with open(spec_path) as fh:
            kwargs = json.load(fh)
    kwargs.setdefault("n_rows", n_rows)
    kwargs.setdefault("seed", seed)
    spec = SyntheticSpec(**kwargs)
    ds = generate_synthetic(spec)
    write_csv(ds, out, label_column=spec.schema.label_column)
    click.echo(f"wrote {ds.n_rows} rows to {out}")


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report", type=click.Path(), default=None)
@click.option("--tables", type=click.Path(), default=None,
              help="Optional path for the scoring-table export.")
def train(data_path, schema_path, config_path, out, report, tables):
    """Train the two-layer additive risk model."""
    schema = _load_schema(schema_path)
    config = _load_config(config_path)
    ds = load_csv(data_path, schema)
    model, fit_report = train_model(ds, schema, config)
    with open(out, "w") as fh:
        fh.write(model.to_json())
    click.echo(f"model written to {out} (hash {model.model_hash})")
    click.echo(f"train accuracy: {fit_report.train_accuracy:.4f}")
    if report:
        with open(report, "w") as fh:
            json.dump(fit_report.to_document(), fh, indent=2)
    if tables:
        with open(tables, "w") as fh:
            for sub in model.subscales:
                fh.write(scoring_table_csv(model, sub))


@main.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Unused for retraining-based evaluation; kept for symmetry.")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--splits", type=int, default=5)
@click.option("--seed", type=int, default=7)
def eval_cmd(model_path, data_path, schema_path, config_path, splits, seed):
    """Cross-split accuracy of the model vs baselines."""
    schema = _load_schema(schema_path)
    config = _load_config(config_path)
    ds = load_csv(data_path, schema)
    result = evaluate(ds, schema, config, n_splits=splits, seed=seed)
    click.echo(json.dumps(result.to_document(), indent=2))


@main.command("build-db")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--rows", type=int, default=None, help="Limit to the first N rows.")
@click.option("--random-patterns", type=int, default=0)
@click.option("--seed", type=int, default=0)
@click.option("--resume", type=click.Path(exists=True), default=None)
def build_db(model_path, data_path, schema_path, out, rows, random_patterns, seed, resume):
    """Precompute the four-setting explanation database."""
    schema = _load_schema(schema_path)
    with open(model_path) as fh:
        model = ArmModel.from_json(fh.read())
    ds = load_csv(data_path, schema)
    bits = model.binarizer.binarize_matrix(ds.X)
    index = DatasetIndex(bits, model.model_labels(bits), model=model)
    existing = ExplanationDb.load(resume) if resume else None
    row_iter = range(min(rows, ds.n_rows)) if rows else None

    def progress(done, total):
        if done % 100 == 0 or done == total:
            click.echo(f"  {done}/{total}", err=True)

    db = build_explanation_db(
        index, binarizer=model.binarizer, rows=row_iter,
        n_random=random_patterns, seed=seed, db=existing,
        model_hash=model.model_hash, dataset_hash=dataset_hash(ds),
        progress=progress,
    )
    db.save(out)
    click.echo(f"wrote {len(db.entries)} entries to {out}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), default=None)
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--db", "db_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
@click.option("--time-limit", type=float, default=7.0, help="ILP budget per solve.")
@click.option("--write-through", is_flag=True, default=False,
              help="Cache explanations for novel observations in the db.")
def serve(model_path, data_path, schema_path, db_path, port, host, time_limit, write_through):
    """Serve the model over HTTP."""
    import uvicorn

    from .service import build_state, create_app

    schema = _load_schema(schema_path)
    with open(model_path) as fh:
        model = ArmModel.from_json(fh.read())
    dataset = load_csv(data_path, schema) if data_path else None
    db = ExplanationDb.load(db_path) if db_path else None
    state = build_state(model, dataset, db, SolverBudget(time_limit=time_limit),
                        write_through=write_through)
    uvicorn.run(create_app(state), host=host, port=port)


if __name__ == "__main__":
    main()
