"""Command-line interface.

Exit codes: 0 success, 2 script/config validation failure, 3 reasoning-
engine failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .cognition import ActionError, Mind, MockEngine
from .config import ConfigurationError, MindConfig
from .harness import (ProtocolScript, ScriptError, SyntheticEmbedder,
                      default_script, export_metrics, export_report,
                      run_protocol)
from .plasticity import weight_audit

EXIT_VALIDATION = 2
EXIT_ENGINE = 3


def _load_config(ctx) -> MindConfig:
    opts = ctx.obj
    try:
        if opts["config"]:
            cfg = MindConfig.load(opts["config"])
        else:
            cfg = MindConfig()
        if opts["seed"] is not None:
            cfg = cfg.replace(seed=opts["seed"])
        if opts["scale"] is not None:
            cfg = cfg.replace(scale=opts["scale"])
        if opts["snn_disabled"]:
            cfg = cfg.replace(snn_enabled=False)
        return cfg
    except (ConfigurationError, OSError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def _load_mind(ctx, snapshot) -> Mind:
    if snapshot and Path(snapshot).exists():
        return Mind.load(snapshot, engine=MockEngine(),
                         embedder=SyntheticEmbedder())
    cfg = _load_config(ctx)
    return Mind(cfg, embedder=SyntheticEmbedder(cfg.embedding_dim, cfg.seed))


@click.group()
@click.option("--config", type=click.Path(), default=None,
              help="YAML configuration file.")
@click.option("--seed", type=int, default=None, help="Override the seed.")
@click.option("--scale", type=float, default=None,
              help="Override the substrate scale factor.")
@click.option("--snn-disabled", is_flag=True, default=False,
              help="Run with the spiking substrate disabled (ablation mode).")
@click.pass_context
def main(ctx, config, seed, scale, snn_disabled):
    """Associative spiking-substrate mind: build, run, and inspect."""
    ctx.obj = {"config": config, "seed": seed, "scale": scale,
               "snn_disabled": snn_disabled}


@main.command()
@click.option("--out", type=click.Path(), default="mind-state",
              help="Snapshot directory to create.")
@click.option("--write-config", type=click.Path(), default=None,
              help="Also write the resolved config as YAML.")
@click.pass_context
def init(ctx, out, write_config):
    """Build a clean calibrated mind and snapshot it."""
    cfg = _load_config(ctx)
    mind = Mind(cfg, embedder=SyntheticEmbedder(cfg.embedding_dim, cfg.seed))
    mind.save(out)
    if write_config:
        cfg.save(write_config)
    click.echo(f"initialised clean mind at {out} "
               f"(bias {mind.calibrated_bias:.5f}, "
               f"{mind.substrate.n_total} neurons)")


@main.command()
@click.option("--script", "script_path", type=click.Path(), default=None,
              help="Protocol script JSON; defaults to the bundled script.")
@click.option("--metrics-out", type=click.Path(), default=None)
@click.option("--report-out", type=click.Path(), default=None)
@click.option("--idle-detail-s", type=float, default=900.0,
              help="Seconds of full dynamics at the start of each idle block.")
@click.pass_context
def run(ctx, script_path, metrics_out, report_out, idle_detail_s):
    """Replay a protocol script and report milestones."""
    cfg = _load_config(ctx)
    try:
        if script_path:
            script = ProtocolScript.load(script_path)
        else:
            script = default_script(seed=cfg.seed, scale=cfg.scale)
    except (ScriptError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"script error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        result = run_protocol(script, config=cfg, idle_detail_s=idle_detail_s)
    except ActionError as exc:
        click.echo(f"engine failure: {exc}", err=True)
        sys.exit(EXIT_ENGINE)
    if metrics_out:
        export_metrics(result.metrics, metrics_out)
    report = export_report(result.milestones, result.metrics,
                           result.consolidation_reports, report_out)
    click.echo(report)


@main.command()
@click.option("--snapshot", type=click.Path(), default="mind-state")
@click.option("--duration-s", type=float, default=900.0)
@click.option("--detail-s", type=float, default=None,
              help="Seconds of full dynamics before fast-forwarding.")
@click.pass_context
def idle(ctx, snapshot, duration_s, detail_s):
    """Run an idle window with impulse detection on a saved mind."""
    mind = _load_mind(ctx, snapshot)
    report = mind.run_idle(duration_s, detail_s=detail_s)
    mind.save(snapshot)
    click.echo(json.dumps(report, indent=1))


@main.command()
@click.option("--snapshot", type=click.Path(), default="mind-state")
@click.pass_context
def consolidate(ctx, snapshot):
    """Replay stored episodes through the substrate (sleep cycle)."""
    mind = _load_mind(ctx, snapshot)
    report = mind.sleep()
    mind.save(snapshot)
    click.echo(json.dumps(report.to_json(), indent=1))


@main.command()
@click.option("--snapshot", type=click.Path(), default="mind-state")
@click.option("--person", default=None, help="person:<name> concept label.")
@click.option("--topics", default="", help="Comma-separated topic labels.")
@click.option("--domain", default="chat", help="Domain annotation.")
@click.option("--salience", type=float, default=0.5)
@click.pass_context
def chat(ctx, snapshot, person, topics, domain, salience):
    """Interactive conversation REPL against the configured engine."""
    mind = _load_mind(ctx, snapshot)
    topic_list = [t for t in topics.split(",") if t]
    click.echo("(empty line to finish)")
    while True:
        try:
            line = click.prompt("you", default="", show_default=False)
        except click.Abort:
            break
        if not line:
            break
        try:
            reply = mind.converse(line, person=person, topics=topic_list,
                                  salience=salience,
                                  annotations={"domain": domain})
        except Exception as exc:
            click.echo(f"engine failure: {exc}", err=True)
            sys.exit(EXIT_ENGINE)
        click.echo(f"mind: {reply}")
    mind.end_session()
    mind.save(snapshot)


@main.command()
@click.option("--snapshot", type=click.Path(), default="mind-state")
@click.pass_context
def metrics(ctx, snapshot):
    """Print the current substrate/memory metrics as JSON."""
    mind = _load_mind(ctx, snapshot)
    click.echo(json.dumps(mind.metrics(), indent=1))


@main.command()
@click.option("--snapshot", type=click.Path(), default="mind-state")
@click.option("--top-k", type=int, default=100)
@click.option("--out", type=click.Path(), default=None,
              help="Write JSON-lines instead of stdout.")
@click.pass_context
def audit(ctx, snapshot, top_k, out):
    """Export the strongest lateral weights with concept labels."""
    mind = _load_mind(ctx, snapshot)
    rows = weight_audit(mind.substrate.synapses, mind.substrate.concept_of,
                        mind.registry.labels, top_k)
    text = "\n".join(json.dumps(r) for r in rows)
    if out:
        Path(out).write_text(text + ("\n" if text else ""))
        click.echo(f"wrote {len(rows)} rows to {out}")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
