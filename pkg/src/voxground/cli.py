"""Command-line entry points for the grounding engine."""
from __future__ import annotations

import json
import os
import zlib
import sys
from pathlib import Path

import click
import numpy as np

from . import conacq
from . import interaction as ia
from . import events as ev
from . import learner
from . import service as svc
from . import transfer
from . import voxml


def _seed(value) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("VOXGROUND_SEED", svc.DEFAULT_SEED))


def load_config(path) -> dict:
    """key = value lines; '#' comments; values parsed as JSON when possible."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.ClickException(f"bad config line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


@click.group()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="key=value config file")
@click.pass_context
def main(ctx, config):
    """Desk-scale situated grounding engine."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config) if config else {}


@main.command("gen-exemplars")
@click.option("--count", default=17, show_default=True)
@click.option("--noise", default=0.1, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", required=True, type=click.Path())
def gen_exemplars(count, noise, seed, out):
    """Generate staircase exemplar graphs into a directory."""
    exemplars = learner.generate_exemplars(count, noise, seed=_seed(seed))
    learner.save_exemplars(exemplars, out)
    click.echo(f"wrote {len(exemplars)} exemplars to {out}")


@main.group()
def train():
    """Train one of the model families."""


@train.command("structure")
@click.option("--exemplars", "exemplars_dir", default=None, type=click.Path())
@click.option("--epochs-cnn", default=50, show_default=True)
@click.option("--epochs-lstm", default=20, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", required=True, type=click.Path())
def train_structure(exemplars_dir, epochs_cnn, epochs_lstm, seed, out):
    """Train the first-move, classifier, and move-proposer networks."""
    s = _seed(seed)
    if exemplars_dir:
        exemplars = learner.load_exemplars(exemplars_dir)
    else:
        exemplars = learner.generate_exemplars(17, 0.1, seed=7)
    models = learner.train_models(exemplars, seed=s,
                                  epochs_cnn=epochs_cnn,
                                  epochs_lstm=epochs_lstm)
    models.save(out)
    click.echo(f"trained on {len(exemplars)} exemplars; models in {out}")


@train.command("underspec")
@click.option("--samples", default=400, show_default=True)
@click.option("--epochs", default=60, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", default=None, type=click.Path())
def train_underspec(samples, epochs, seed, out):
    """Train the underspecified-parameter predictor; report slot accuracy."""
    s = _seed(seed)
    predictor = ev.train_default_predictor(seed=s, n_samples=samples,
                                           epochs=epochs)
    rng = np.random.default_rng(s + 1)
    in_band = {}
    for slot in sorted(predictor.nets):
        lo, hi = ev.JUDGE_BANDS[slot]
        hits = 0
        for _ in range(50):
            feats = ev.encode_event_features(
                "slide", rng.uniform(0.01, 0.12, size=3), None,
                "cuboid", "none")
            hits += lo <= predictor.predict(slot, feats) <= hi
        in_band[slot] = hits / 50
    report = {"in_band_fraction": in_band,
              "samples": samples, "epochs": epochs, "seed": s}
    click.echo(json.dumps(report, indent=2))
    if out:
        Path(out).write_text(json.dumps(report, indent=2))


@train.command("transfer")
@click.option("--arch", type=click.Choice([transfer.MLP7, transfer.CNN4]),
              default=transfer.MLP7, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", default=None, type=click.Path())
def train_transfer(arch, epochs, seed, out):
    """Train the habitat-affordance collocation embedding."""
    s = _seed(seed)
    lib = voxml.seed_library()
    pairs = transfer.build_pair_dataset(lib, seed=s)
    model = transfer.train_embedding(pairs, arch, epochs=epochs, seed=s)
    pos = [p for p in pairs if p.label == 1]
    neg = [p for p in pairs if p.label == 0]
    pp = [transfer.collocation_probability(model, p) for p in pos]
    pn = [transfer.collocation_probability(model, p) for p in neg]
    auc = sum((a > b) + 0.5 * (a == b) for a in pp for b in pn) / (
        len(pp) * len(pn))
    report = {"arch": arch, "pairs": len(pairs),
              "final_loss": round(model.calibration["final_loss"], 6),
              "auc": round(auc, 6),
              "mean_positive": round(float(np.mean(pp)), 6),
              "mean_negative": round(float(np.mean(pn)), 6)}
    click.echo(json.dumps(report, indent=2))
    if out:
        Path(out).write_text(json.dumps(report, indent=2))


@main.command("build")
@click.option("--heuristic", "-h", "heuristic", default="spire",
              type=click.Choice(learner.HEURISTICS), show_default=True)
@click.option("--seed", "-s", default=None, type=int)
@click.option("--models", "models_dir", required=True, type=click.Path())
@click.option("--exemplars", "exemplars_dir", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path())
def build(heuristic, seed, models_dir, exemplars_dir, out):
    """Build a structure with the trained models and score it."""
    s = _seed(seed)
    models = learner.LearnerModels.load(models_dir)
    if exemplars_dir:
        exemplars = learner.load_exemplars(exemplars_dir)
    else:
        exemplars = learner.generate_exemplars(17, 0.1, seed=7)
    result = learner.build_structure(models, exemplars, learner.block_ids(),
                                     heuristic, seed=s)
    score = learner.oracle_score(result.graph, result.scene)
    click.echo(json.dumps({
        "heuristic": heuristic, "seed": s, "score": score,
        "target": result.target_class,
        "moves": [f"{m.i} {m.relation} {m.j}" for m in result.moves]},
        indent=2))
    if out:
        result.scene.save(out)
        click.echo(f"scene written to {out}")


@main.command("acquire")
@click.option("--threshold", default=0.9, show_default=True)
@click.option("--count", default=12, show_default=True)
@click.option("--noise", default=0.1, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", default=None, type=click.Path())
def acquire(threshold, count, noise, seed, out):
    """Acquire role constraints from exemplars; emit the learned voxeme."""
    s = _seed(seed)
    exemplars = learner.generate_exemplars(count, noise, seed=s)
    cs = conacq.acquire(exemplars, threshold=threshold)
    roles = conacq.roles_from_graph(exemplars[0].graph)
    click.echo(cs.report())
    emitted = conacq.emit_voxml(cs, roles, name="staircase")
    text = voxml.print_voxeme(emitted)
    if out:
        Path(out).write_text(text)
        click.echo(f"voxeme written to {out}")
    else:
        click.echo(text)


@main.command("eval")
@click.option("--builds", default=25, show_default=True)
@click.option("--models", "models_dir", required=True, type=click.Path())
@click.option("--heuristics", default="spire,lev-spire,random",
              show_default=True)
@click.option("--seed", default=None, type=int)
def eval_cmd(builds, models_dir, heuristics, seed):
    """Compare heuristics by mean oracle score over repeated builds."""
    s = _seed(seed)
    models = learner.LearnerModels.load(models_dir)
    exemplars = learner.generate_exemplars(17, 0.1, seed=7)
    report = {}
    for heur in heuristics.split(","):
        scores = []
        for k in range(builds):
            r = learner.build_structure(models, exemplars,
                                        learner.block_ids(), heur,
                                        seed=s + k)
            scores.append(learner.oracle_score(r.graph, r.scene))
        report[heur] = {"mean": round(float(np.mean(scores)), 4),
                        "scores": scores}
    click.echo(json.dumps(report, indent=2))


@main.command("query")
@click.option("--action", required=True)
@click.option("--seed", default=None, type=int)
def query(action, seed):
    """Second-order collocation: describe an action's habitats via others."""
    s = _seed(seed)
    lib = voxml.seed_library()
    pairs = transfer.build_pair_dataset(lib, seed=s)
    model = transfer.train_embedding(pairs, transfer.MLP7, seed=s)
    try:
        answers = transfer.describe_habitat_for(action, model, lib)
    except transfer.UnknownAction:
        raise click.ClickException(f"unknown action {action!r}")
    click.echo(json.dumps(answers, indent=2))


@main.command("serve")
@click.option("--port", "-p", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", default=None, type=int)
def serve(port, host, seed):
    """Run the HTTP service."""
    import uvicorn
    app = svc.create_app(seed=_seed(seed))
    uvicorn.run(app, host=host, port=port)


@main.command("repl")
@click.option("--seed", default=None, type=int)
def repl(seed):
    """Headless session on stdin/stdout.

    Commands: point <id> | gesture <name> | yes | no | say <text> |
    scene | state | hash | quit. Bare text is treated as an utterance.
    """
    session = svc.Session("repl", seed=_seed(seed))
    click.echo("voxground repl; objects: "
               + ", ".join(sorted(session.scene.objects)))
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        if line in ("quit", "exit"):
            break
        try:
            if line == "scene":
                click.echo(json.dumps(session.scene.to_json()))
                continue
            if line == "state":
                click.echo(f"{session.dialogue.state} "
                           f"focus={session.dialogue.focus}")
                continue
            if line == "hash":
                click.echo(session.final_hash())
                continue
            if line.startswith("point "):
                out = session.handle_pointing(line.split(None, 1)[1])
            elif line.startswith("gesture novel "):
                gname = line.split(None, 2)[2]
                grng = np.random.default_rng(
                    [_seed(seed), zlib.crc32(gname.encode())])
                vec = grng.standard_normal(ia.GESTURE_DIM)
                vec /= np.linalg.norm(vec)
                out = session.handle_gesture(name=gname,
                                             descriptor=vec.tolist())
            elif line.startswith("gesture "):
                out = session.handle_gesture(name=line.split(None, 1)[1])
            elif line in ("yes", "no"):
                out = session.handle_feedback(
                    "positive" if line == "yes" else "negative")
            elif line.startswith("say "):
                out = session.handle_utterance(line.split(None, 1)[1])
            else:
                out = session.handle_utterance(line)
            click.echo(out["reply"])
        except Exception as e:  # keep the loop alive on bad input
            click.echo(f"error: {e}")
    click.echo(session.final_hash())


if __name__ == "__main__":
    main()
