"""Pipeline stages behind the command-line tool.

Each stage owns one output directory: it writes its artifacts there plus
exactly one manifest naming them.  Rerunning a stage with an unchanged
manifest is always allowed and reproduces the same bytes; anything else
refuses to touch an existing directory unless forced.

The world itself is pinned to one seed so the whole seed suite ablates
training and sampling noise against a fixed ground truth; --seed moves the
corpus draw, the recognizers, and the conversion training.
"""

from __future__ import annotations

import json
import math
import os
import shutil
from dataclasses import replace

import numpy as np

from .config import RunConfig, config_to_dict, with_overrides
from .conversion import load_conversions, run_conversions, save_conversions
from .corpus import (accent_t_utterances, conversion_sources, default_plan,
                     generate_corpus, load_corpus, save_corpus,
                     si_training_utterances, vc_heldout_utterances,
                     vc_training_utterances)
from .errors import InputError
from .evaluation import (ProbeConfig, accent_probe, accentedness_eval,
                         content_preservation, content_probe,
                         encoder_invariance, majority_accuracy, mean_encoding,
                         parallel_groups, pca_2d, probe_corpus, probe_predict,
                         speaker_probe, speaker_similarity_eval, train_probe)
from .recognizer import extract_bn
from .gradcheck import format_report, run_all
from .manifest import (TOOL_VERSION, build_manifest, file_hash, read_manifest,
                       record_artifact, write_manifest)
from .model import VCModelSpec, load_vc_model, save_vc_model
from .recognizer import (finetune_accent_recognizer, load_recognizer,
                         save_recognizer, train_si_recognizer)
from .training import SYSTEMS, evaluate_recons, train_system
from .world import ACCENTS, build_world, load_world, save_world

WORLD_SEED = 7          # one fixed world underneath the whole seed suite
CHECKPOINT_EVERY = 15   # epochs per training segment between checkpoints
OUT_ENV = "ACCENTVC_OUT"


def default_out_root() -> str:
    return os.environ.get(OUT_ENV, os.path.join(os.getcwd(), "runs"))


# ---------------------------------------------------------------------------
# directory layout: everything below the root is seed-namespaced so the
# seed suite can run as independent processes without write conflicts

def seed_dir(root, seed: int) -> str:
    return os.path.join(os.fspath(root), f"s{seed}")


def corpus_dir(root, seed: int) -> str:
    return os.path.join(seed_dir(root, seed), "corpus")


def recognizer_dir(root, seed: int) -> str:
    return os.path.join(seed_dir(root, seed), "recognizer")


def finetune_dir(root, seed: int) -> str:
    return os.path.join(seed_dir(root, seed), "recognizer-ft")


def train_dir(root, seed: int, system: str) -> str:
    return os.path.join(seed_dir(root, seed), system, "train")


def convert_dir(root, seed: int, system: str) -> str:
    return os.path.join(seed_dir(root, seed), system, "converted")


def eval_dir(root, seed: int) -> str:
    return os.path.join(seed_dir(root, seed), "eval")


def report_dir(root) -> str:
    return os.path.join(os.fspath(root), "report")


# ---------------------------------------------------------------------------
# manifest discipline shared by every stage


def _clear(directory) -> None:
    for name in os.listdir(directory):
        path = os.path.join(directory, name)
        if os.path.isdir(path):
            shutil.rmtree(path)
        else:
            os.remove(path)


def _prepare(directory, manifest: dict, force: bool) -> None:
    """Claim an output directory.  A directory already holding the same
    manifest may be rerun in place (the bytes come out identical); anything
    else is a refusal unless --force, which clears it first."""
    os.makedirs(directory, exist_ok=True)
    existing = os.path.join(directory, "manifest.json")
    if os.path.exists(existing):
        old = read_manifest(existing)
        if old["manifest_hash"] == manifest["manifest_hash"]:
            return
        if not force:
            raise InputError(
                f"{directory} already holds a different run "
                f"(manifest {old['manifest_hash'][:12]}..); use --force to replace it")
        _clear(directory)
    elif os.listdir(directory):
        if not force:
            raise InputError(f"{directory} is not empty and carries no "
                             f"manifest; use --force to replace it")
        _clear(directory)
    # claim early so an interrupted stage can be resumed or identified
    write_manifest(existing, manifest)


def _finish(directory, manifest: dict, paths) -> None:
    for path in paths:
        record_artifact(manifest, path, root=directory)
    write_manifest(os.path.join(directory, "manifest.json"), manifest)


def _require(path, what: str, producer: str) -> str:
    if not os.path.exists(path):
        raise InputError(f"missing {what}: {path}; run `{producer}` first")
    return path


def _effective(cfg: RunConfig, seed: int, system: str | None = None) -> dict:
    return config_to_dict(with_overrides(cfg, system=system, seed=seed))


# ---------------------------------------------------------------------------
# gen-corpus


def run_gen_corpus(cfg: RunConfig, out_root, seed: int, force: bool = False) -> str:
    d = corpus_dir(out_root, seed)
    manifest = build_manifest("gen-corpus", _effective(cfg, seed), [seed], {})
    _prepare(d, manifest, force)
    world = build_world(WORLD_SEED, cfg.world)
    plan = default_plan(cfg.corpus.n_target_utts, cfg.corpus.n_source_utts,
                        cfg.corpus.n_sources, cfg.corpus.train_fraction)
    corpus = generate_corpus(world, plan, seed)
    wpath = os.path.join(d, "world.avc")
    save_world(wpath, world)
    paths = save_corpus(d, corpus)
    _finish(d, manifest, [wpath, paths["train"], paths["heldout"]])
    return d


def _load_corpus_stage(out_root, seed: int):
    d = corpus_dir(out_root, seed)
    _require(os.path.join(d, "world.avc"), "world artifact", "gen-corpus")
    _require(os.path.join(d, "corpus.train.avc"), "training corpus", "gen-corpus")
    world = load_world(os.path.join(d, "world.avc"))
    corpus = load_corpus(d)
    inputs = {"world": file_hash(os.path.join(d, "world.avc")),
              "corpus.train": file_hash(os.path.join(d, "corpus.train.avc")),
              "corpus.heldout": file_hash(os.path.join(d, "corpus.heldout.avc"))}
    return world, corpus, inputs


# ---------------------------------------------------------------------------
# recognizers


def run_train_recognizer(cfg: RunConfig, out_root, seed: int,
                         force: bool = False) -> str:
    world, corpus, inputs = _load_corpus_stage(out_root, seed)
    manifest = build_manifest("train-recognizer", _effective(cfg, seed),
                              [seed], inputs)
    d = recognizer_dir(out_root, seed)
    _prepare(d, manifest, force)
    model = train_si_recognizer(si_training_utterances(corpus),
                                cfg.recognizer, seed)
    path = os.path.join(d, "si.avc")
    save_recognizer(path, model, {"manifest_hash": manifest["manifest_hash"]})
    _finish(d, manifest, [path])
    return d


def run_finetune_recognizer(cfg: RunConfig, out_root, seed: int,
                            force: bool = False) -> str:
    world, corpus, inputs = _load_corpus_stage(out_root, seed)
    si_path = _require(os.path.join(recognizer_dir(out_root, seed), "si.avc"),
                       "SI recognizer", "train-recognizer")
    inputs["recognizer.si"] = file_hash(si_path)
    manifest = build_manifest("finetune-recognizer", _effective(cfg, seed),
                              [seed], inputs)
    d = finetune_dir(out_root, seed)
    _prepare(d, manifest, force)
    base = load_recognizer(si_path)
    model = finetune_accent_recognizer(base, accent_t_utterances(corpus),
                                       seed=seed)
    path = os.path.join(d, "ft.avc")
    save_recognizer(path, model, {"manifest_hash": manifest["manifest_hash"]})
    _finish(d, manifest, [path])
    return d


def _load_registry(out_root, seed: int, system: str) -> tuple[dict, dict]:
    """Recognizers a system needs, plus their input hashes."""
    si_path = _require(os.path.join(recognizer_dir(out_root, seed), "si.avc"),
                       "SI recognizer", "train-recognizer")
    registry = {"SI": load_recognizer(si_path)}
    hashes = {"recognizer.si": file_hash(si_path)}
    if system != "BL":
        ft_path = _require(
            os.path.join(finetune_dir(out_root, seed), "ft.avc"),
            "accent-adapted recognizer", "finetune-recognizer")
        registry["T"] = load_recognizer(ft_path)
        hashes["recognizer.ft"] = file_hash(ft_path)
    return registry, hashes


# ---------------------------------------------------------------------------
# train-vc: segmented so a killed run resumes from its last checkpoint


def run_train_vc(cfg: RunConfig, out_root, seed: int, system: str,
                 force: bool = False) -> str:
    world, corpus, inputs = _load_corpus_stage(out_root, seed)
    registry, rec_hashes = _load_registry(out_root, seed, system)
    inputs.update(rec_hashes)
    tcfg = replace(cfg.train, system=system, seed=seed)
    tcfg.validate()
    manifest = build_manifest("train-vc", _effective(cfg, seed, system),
                              [seed], inputs)
    d = train_dir(out_root, seed, system)
    _prepare(d, manifest, force)

    ckpt_path = os.path.join(d, "checkpoint.avc")
    log_path = os.path.join(d, "log.json")
    model, rows = None, []
    if os.path.exists(ckpt_path):
        model = load_vc_model(ckpt_path)
        if os.path.exists(log_path):
            with open(log_path, "r", encoding="utf-8") as f:
                rows = json.load(f)["rows"]

    train_utts = vc_training_utterances(corpus)
    heldout = vc_heldout_utterances(corpus)
    spec = VCModelSpec(d_bn=cfg.recognizer.d_bn)
    meta = {"manifest_hash": manifest["manifest_hash"]}
    while model is None or model.epochs_trained < tcfg.epochs:
        done = 0 if model is None else model.epochs_trained
        segment = replace(tcfg, epochs=min(done + CHECKPOINT_EVERY, tcfg.epochs))
        model, new_rows = train_system(train_utts, heldout, registry, segment,
                                       spec=spec, model=model)
        rows.extend(new_rows)
        save_vc_model(ckpt_path, model, meta)
        _write_json(log_path, {"manifest_hash": manifest["manifest_hash"],
                               "rows": rows})
        if segment.epochs == tcfg.epochs:
            break

    model_path = os.path.join(d, "model.avc")
    save_vc_model(model_path, model, meta)
    recons = evaluate_recons(model, heldout, registry) if heldout else float("nan")
    _write_json(log_path, {"manifest_hash": manifest["manifest_hash"],
                           "rows": rows, "heldout_recons": recons})
    _finish(d, manifest, [model_path, ckpt_path, log_path])
    return d


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, (np.integer, int)):
        return int(x)
    return x


# ---------------------------------------------------------------------------
# convert


def run_convert(cfg: RunConfig, out_root, seed: int, system: str,
                force: bool = False) -> str:
    world, corpus, inputs = _load_corpus_stage(out_root, seed)
    registry, rec_hashes = _load_registry(out_root, seed, system)
    inputs.update(rec_hashes)
    model_path = _require(os.path.join(train_dir(out_root, seed, system),
                                       "model.avc"), "trained model", "train-vc")
    inputs["model"] = file_hash(model_path)
    manifest = build_manifest("convert", _effective(cfg, seed, system),
                              [seed], inputs)
    d = convert_dir(out_root, seed, system)
    _prepare(d, manifest, force)
    model = load_vc_model(model_path)
    sources = conversion_sources(corpus, cfg.eval.conversion_utts)
    records = run_conversions(model, sources, registry)
    path = os.path.join(d, "converted.avc")
    save_conversions(path, records,
                     {"manifest_hash": manifest["manifest_hash"]})
    _finish(d, manifest, [path])
    return d


# ---------------------------------------------------------------------------
# eval: one seed, every system whose artifacts exist


def _bn_accent_probes(world, registry, targets, ecfg, seed: int) -> dict:
    """Accent-probe accuracy on bottleneck features of identical utterances
    under SI extraction and under accent-routed extraction.  The probe runs
    on a fixed short budget; at convergence both feature sets saturate the
    probe and the comparison reads only optimizer noise."""
    utts = probe_corpus(world, targets, ecfg.bn_probe_utts_per_cell, seed)
    pcfg = ProbeConfig(max_epochs=ecfg.bn_probe_epochs, seed=3)
    out = {}
    for name in ("SI", "routed"):
        def pick(u):
            return registry["SI"] if name == "SI" or u.accent == "M" \
                else registry["T"]
        xs, ys = [], []
        for u in utts:
            bn = extract_bn(pick(u), u).features
            xs.append(bn)
            ys.append(np.full(len(bn), ACCENTS.index(u.accent)))
        x, y = np.concatenate(xs), np.concatenate(ys)
        probe = train_probe(x, y, pcfg)
        out[name] = float(np.mean(probe_predict(probe, x) == y))
    return out


def _encoder_speaker_probe(model, registry, groups, ecfg, seed: int) -> float:
    """Linear accessibility of speaker identity in time-averaged encoder
    output: a short-budget probe fitted on parallel-content renditions and
    scored on its own fit set.  At convergence every system saturates; the
    budgeted accuracy is what separates them."""
    fit = groups[:ecfg.probe_fit_groups]
    x = np.stack([mean_encoding(model, registry, u)
                  for g in fit for u in g])
    y = np.array([u.speaker for g in fit for u in g])
    probe = train_probe(x, y, ProbeConfig(max_epochs=ecfg.h_probe_epochs,
                                          seed=seed))
    return float(np.mean(probe_predict(probe, x) == y))


def _evaluate_system(system, world, corpus, out_root, seed, cfg,
                     judges, groups, bn_probes):
    """All metrics for one trained system; returns (metrics, inputs, proj)."""
    model_path = os.path.join(train_dir(out_root, seed, system), "model.avc")
    conv_path = os.path.join(convert_dir(out_root, seed, system),
                             "converted.avc")
    if not (os.path.exists(model_path) and os.path.exists(conv_path)):
        return None, {}, None
    registry, _ = _load_registry(out_root, seed, system)
    model = load_vc_model(model_path)
    records, _ = load_conversions(conv_path)

    spk = speaker_similarity_eval(judges["speaker"], judges["utts"], records)
    acc = accentedness_eval(judges["accent"], judges["utts"], records)
    cnt = content_preservation(judges["content"], judges["utts"], records)
    inv = encoder_invariance(model, registry, groups)
    heldout = vc_heldout_utterances(corpus)
    by_accent = {a: [u for u in heldout if u.accent == a] for a in ACCENTS}
    recons = {a: (evaluate_recons(model, us, registry) if us else None)
              for a, us in by_accent.items()}

    metrics = {
        "encoder_speaker_probe_acc": _encoder_speaker_probe(
            model, registry, groups, cfg.eval, seed),
        "bn_accent_probe_acc": bn_probes["SI" if system == "BL" else "routed"],
        "invariance_ratio": float(inv["ratio"]),
        "converted_speaker_acc": spk["overall"],
        "converted_accent_acc_M": acc["by_accent"]["M"],
        "converted_accent_acc_T": acc["by_accent"]["T"],
        "content_acc": cnt["overall"],
        "recons_heldout_M": recons["M"],
        "recons_heldout_T": recons["T"],
        "n_converted": len(records),
        "cells": {
            "speaker": _cells_json(spk["cells"]),
            "accent": _cells_json(acc["cells"]),
            "content": _cells_json(cnt["cells"]),
        },
    }
    inputs = {f"{system}.model": file_hash(model_path),
              f"{system}.converted": file_hash(conv_path)}
    proj = {"h": inv, "out": _output_projection(records)}
    return metrics, inputs, proj


def _cells_json(cells: dict) -> dict:
    return {f"s{spk}/{accent}": v for (spk, accent), v in sorted(cells.items())}


def _output_projection(records):
    """One time-averaged point per converted record, grouped by intended
    target speaker; the cluster view of conversion output."""
    vectors = np.stack([r.frames.mean(axis=0) for r in records])
    points, _ = pca_2d(vectors)
    groups = np.array([r.target_speaker for r in records])
    return {"points": points, "groups": groups}


def run_eval(cfg: RunConfig, out_root, seed: int, force: bool = False) -> str:
    world, corpus, inputs = _load_corpus_stage(out_root, seed)
    registry, rec_hashes = _load_registry(out_root, seed, "P1")
    inputs.update(rec_hashes)

    targets = sorted({e.speaker for e in corpus.plan.targets()})
    sources = sorted({e.speaker for e in corpus.plan.sources()})
    ecfg = cfg.eval

    # judges live on crossed (speaker x accent) data the training corpus
    # never contains, so accent cannot be read off speaker identity
    judge_utts = probe_corpus(world, targets, ecfg.probe_utts_per_cell,
                              seed + 900)
    source_utts = probe_corpus(world, sources, 4, seed + 901)
    judges = {
        "utts": judge_utts,
        "speaker": speaker_probe(judge_utts),
        "accent": accent_probe(judge_utts,
                               ProbeConfig(max_epochs=ecfg.accent_judge_epochs)),
        "content": content_probe(judge_utts + source_utts),
    }
    bn_probes = _bn_accent_probes(world, registry, targets, ecfg, seed + 902)
    groups = parallel_groups(world, targets, "M", ecfg.parallel_groups,
                             seed + 903)

    per_system, projections = {}, {}
    for system in SYSTEMS:
        metrics, sys_inputs, proj = _evaluate_system(
            system, world, corpus, out_root, seed, cfg, judges, groups,
            bn_probes)
        per_system[system] = metrics if metrics is not None else "absent"
        inputs.update(sys_inputs)
        if proj is not None:
            projections[system] = proj

    manifest = build_manifest("eval", _effective(cfg, seed), [seed], inputs)
    d = eval_dir(out_root, seed)
    _prepare(d, manifest, force)

    n_targets = len(targets)
    chance = {"speaker": 1.0 / n_targets, "accent": 1.0 / len(ACCENTS),
              "content": 1.0 / world.spec.n_tokens}
    payload = {
        "manifest_hash": manifest["manifest_hash"],
        "seed": seed,
        "world_hash": world.content_hash(),
        "chance": chance,
        "judges_real_acc": {
            "speaker": _real_acc(judges["speaker"], judge_utts, "speaker"),
            "accent": _real_acc(judges["accent"], judge_utts, "accent"),
        },
        "bn_accent_probe": bn_probes,
        "systems": per_system,
    }
    json_path = os.path.join(d, "eval.json")
    _write_json(json_path, payload)
    report_path = os.path.join(d, "report.txt")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(format_seed_report(payload, ecfg))
    paths = [json_path, report_path]
    for system, proj in projections.items():
        for tag, data in (("h", proj["h"]), ("out", proj["out"])):
            p = os.path.join(d, f"proj_{tag}_{system}.tsv")
            _write_projection(p, data["points"], data["groups"],
                              manifest["manifest_hash"])
            paths.append(p)
    _finish(d, manifest, paths)
    return d


def _real_acc(probe, utts, factor: str) -> float:
    key = (lambda u: u.speaker) if factor == "speaker" \
        else (lambda u: ACCENTS.index(u.accent))
    return majority_accuracy(probe, utts, key)


def _write_projection(path, points, groups, mhash: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# manifest {mhash}\n")
        f.write("id\tgroup\tx\ty\n")
        for i, (g, (x, y)) in enumerate(zip(groups, points)):
            f.write(f"{i}\t{int(g)}\t{x:+.9f}\t{y:+.9f}\n")


# ---------------------------------------------------------------------------
# plain-text reports


def _near_chance(value, chance: float, n: int) -> bool:
    """Statistically indistinguishable from guessing (within 2 SE)."""
    if value is None:
        return False
    se = math.sqrt(chance * (1.0 - chance) / max(n, 1))
    return abs(value - chance) <= 2.0 * se


def _flag(value, chance: float, n: int) -> str:
    return "  (~chance)" if _near_chance(value, chance, n) else ""


def _fmt(value, width: int = 8, prec: int = 3) -> str:
    if value is None:
        return "-".rjust(width)
    return f"{value:{width}.{prec}f}"


def format_seed_report(payload: dict, ecfg) -> str:
    lines = []
    add = lines.append
    add(f"{TOOL_VERSION} evaluation report")
    add(f"seed {payload['seed']}")
    add(f"manifest {payload['manifest_hash']}")
    add("")
    chance = payload["chance"]
    real = payload["judges_real_acc"]
    n_judge = ecfg.probe_utts_per_cell * 6
    add("judge probes on real data (sanity floor)")
    add(f"  speaker {real['speaker']:.3f} (chance {chance['speaker']:.3f})"
        f"{_flag(real['speaker'], chance['speaker'], n_judge)}")
    add(f"  accent  {real['accent']:.3f} (chance {chance['accent']:.3f})"
        f"{_flag(real['accent'], chance['accent'], n_judge)}")
    add("")
    bn = payload["bn_accent_probe"]
    add("bottleneck accent probe, identical utterances (budgeted fit)")
    add(f"  SI extraction      {bn['SI']:.3f}")
    add(f"  routed extraction  {bn['routed']:.3f}")
    add("")
    add(f"{'system':<8s}{'h-spk':>8s}{'invar':>9s}{'conv-spk':>10s}"
        f"{'acc-M':>8s}{'acc-T':>8s}{'content':>9s}{'mse-M':>9s}{'mse-T':>9s}")
    for system in SYSTEMS:
        m = payload["systems"].get(system, "absent")
        if m == "absent":
            add(f"{system:<8s}absent")
            continue
        n_conv = m["n_converted"]
        n_acc = n_conv // 2
        # quality column mirrors the usual table convention: no rating for
        # a system that fails to hit the target accent at all
        gated = m["converted_accent_acc_T"] is not None \
            and m["converted_accent_acc_T"] < 0.5
        mse_t = None if gated else m["recons_heldout_T"]
        near = [name for name, value, ch, n in (
            ("conv-spk", m["converted_speaker_acc"], chance["speaker"], n_conv),
            ("acc-M", m["converted_accent_acc_M"], chance["accent"], n_acc),
            ("acc-T", m["converted_accent_acc_T"], chance["accent"], n_acc),
            ("content", m["content_acc"], chance["content"], n_conv),
        ) if _near_chance(value, ch, n)]
        add(f"{system:<8s}"
            f"{_fmt(m['encoder_speaker_probe_acc'])}"
            f"{_fmt(m['invariance_ratio'], 9)}"
            f"{_fmt(m['converted_speaker_acc'], 10)}"
            f"{_fmt(m['converted_accent_acc_M'])}"
            f"{_fmt(m['converted_accent_acc_T'])}"
            f"{_fmt(m['content_acc'], 9)}"
            f"{_fmt(m['recons_heldout_M'], 9, 4)}"
            f"{_fmt(mse_t, 9, 4)}"
            + (f"   ~chance: {', '.join(near)}" if near else ""))
    add("")
    add("per-cell converted metrics (speaker / accent / content)")
    for system in SYSTEMS:
        m = payload["systems"].get(system, "absent")
        if m == "absent":
            add(f"  {system}: absent")
            continue
        for cell in sorted(m["cells"]["speaker"]):
            add(f"  {system}  {cell:<6s} spk {m['cells']['speaker'][cell]:.2f}"
                f"  acc {m['cells']['accent'][cell]:.2f}"
                f"  cnt {m['cells']['content'][cell]:.2f}")
    add("")
    add("mse-M / mse-T: reconstruction error on held-out native data, the "
        "nearest objective stand-in for rated quality; no listening test "
        "exists here.")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# ablation: the whole grid plus a combined report

METRIC_KEYS = ("encoder_speaker_probe_acc", "bn_accent_probe_acc",
               "invariance_ratio", "converted_speaker_acc",
               "converted_accent_acc_M", "converted_accent_acc_T",
               "content_acc", "recons_heldout_M", "recons_heldout_T")


def run_ablation(cfg: RunConfig, out_root, force: bool = False) -> str:
    for seed in cfg.eval.seeds:
        run_gen_corpus(cfg, out_root, seed, force)
        run_train_recognizer(cfg, out_root, seed, force)
        run_finetune_recognizer(cfg, out_root, seed, force)
        for system in SYSTEMS:
            run_train_vc(cfg, out_root, seed, system, force)
            run_convert(cfg, out_root, seed, system, force)
        run_eval(cfg, out_root, seed, force)
    return run_report(cfg, out_root, force)


def run_report(cfg: RunConfig, out_root, force: bool = False) -> str:
    """Collect per-seed eval payloads into the cross-seed table."""
    seeds = list(cfg.eval.seeds)
    payloads, inputs = {}, {}
    for seed in seeds:
        path = os.path.join(eval_dir(out_root, seed), "eval.json")
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                payloads[seed] = json.load(f)
            inputs[f"eval.s{seed}"] = file_hash(path)
    if not payloads:
        raise InputError(f"no eval results under {out_root}; run `eval` first")
    manifest = build_manifest("report", config_to_dict(cfg), seeds, inputs)
    d = report_dir(out_root)
    _prepare(d, manifest, force)

    table = {}
    for metric in METRIC_KEYS:
        rows = []
        for system in SYSTEMS:
            for seed in seeds:
                payload = payloads.get(seed)
                value = None
                if payload is not None:
                    m = payload["systems"].get(system, "absent")
                    if m != "absent":
                        value = m[metric]
                rows.append({"system": system, "seed": seed, "value": value})
        table[metric] = rows
    summary = {
        "manifest_hash": manifest["manifest_hash"],
        "seeds": seeds,
        "metrics": table,
        "means": {
            metric: {
                system: _mean_or_none(
                    [r["value"] for r in rows
                     if r["system"] == system and r["value"] is not None])
                for system in SYSTEMS}
            for metric, rows in table.items()},
    }
    json_path = os.path.join(d, "ablation.json")
    _write_json(json_path, summary)
    txt_path = os.path.join(d, "report.txt")
    with open(txt_path, "w", encoding="utf-8") as f:
        f.write(format_ablation_report(summary))
    _finish(d, manifest, [json_path, txt_path])
    return d


def _mean_or_none(values):
    return float(np.mean(values)) if values else None


def format_ablation_report(summary: dict) -> str:
    lines = []
    add = lines.append
    add(f"{TOOL_VERSION} ablation report")
    add(f"manifest {summary['manifest_hash']}")
    add(f"seeds {summary['seeds']}")
    add("")
    for metric, rows in summary["metrics"].items():
        add(metric)
        for row in rows:
            value = "absent" if row["value"] is None else f"{row['value']:.4f}"
            add(f"  {row['system']}  seed {row['seed']}  {value}")
        means = summary["means"][metric]
        mean_bits = [f"{s} {means[s]:.4f}" if means[s] is not None
                     else f"{s} absent" for s in SYSTEMS]
        add("  mean  " + "  ".join(mean_bits))
        add("")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# grad-check and projection dump


def run_grad_check(cfg: RunConfig, out_root, seed: int,
                   force: bool = False) -> str:
    manifest = build_manifest("grad-check", config_to_dict(cfg), [seed], {})
    d = os.path.join(os.fspath(out_root), "gradcheck")
    _prepare(d, manifest, force)
    results = run_all(trials=20, seed=seed)
    text = format_report(results)
    path = os.path.join(d, "gradcheck.txt")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# manifest {manifest['manifest_hash']}\n")
        f.write(text + "\n")
        ok = all(r.ok for r in results)
        f.write(f"{'all primitives pass' if ok else 'FAILURES PRESENT'}\n")
    _finish(d, manifest, [path])
    if not all(r.ok for r in results):
        raise InputError("gradient check failed; see " + path)
    return d


def run_project(cfg: RunConfig, out_root, seed: int, system: str,
                force: bool = False) -> str:
    world, corpus, inputs = _load_corpus_stage(out_root, seed)
    registry, rec_hashes = _load_registry(out_root, seed, system)
    inputs.update(rec_hashes)
    model_path = _require(os.path.join(train_dir(out_root, seed, system),
                                       "model.avc"), "trained model", "train-vc")
    inputs["model"] = file_hash(model_path)
    manifest = build_manifest("project", _effective(cfg, seed, system),
                              [seed], inputs)
    d = os.path.join(seed_dir(out_root, seed), system, "project")
    _prepare(d, manifest, force)
    model = load_vc_model(model_path)
    targets = sorted({e.speaker for e in corpus.plan.targets()})
    groups = parallel_groups(world, targets, "M", cfg.eval.parallel_groups,
                             seed + 903)
    inv = encoder_invariance(model, registry, groups)
    path = os.path.join(d, "proj_h.tsv")
    _write_projection(path, inv["points"], inv["groups"],
                      manifest["manifest_hash"])
    _finish(d, manifest, [path])
    return d
