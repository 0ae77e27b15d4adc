"""Command-line front end orchestrating the pipeline stages.

Exit codes: 0 success, 1 acceptance/threshold failure, 2 usage or
input error. Every command is reproducible: (inputs, seed, version)
determine outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acceptance, corpus_synth, eval_metrics, vibrometry
from .core_types import (
    RadarConfig,
    Scene,
    TranscriptPair,
    load_radar_config,
    load_scene,
)
from .errors import MmvibroError
from .fmcw_sim import read_if_dump, synthesize_if_frames, write_if_dump
from .lora_ref import (
    LoraLinear,
    grad_check,
    lora_forward,
    trainable_fraction,
    whisper_large_inventory,
)

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2


@dataclass
class RunManifest:
    """Record of one CLI run, enough to reproduce every output byte."""

    entries: list = field(default_factory=list)
    tool_version: str = __version__
    created_at: str = ""

    def add(self, id: str, seed: int, parameters: dict, **paths):
        for p in paths.values():
            if not Path(p).exists():
                raise FileNotFoundError(f"manifest references missing {p}")
        self.entries.append({"id": id, "seed": seed,
                             "parameters": parameters, **paths})

    def write(self, path):
        self.created_at = datetime.datetime.now(
            datetime.timezone.utc).isoformat(timespec="seconds")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")


def _emit(args, payload: dict, human: str):
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def cmd_simulate(args) -> int:
    config = load_radar_config(args.config) if args.config else RadarConfig()
    scene = load_scene(args.scene, config) if args.scene else Scene()
    drive = corpus_synth.wav_read(args.drive)
    art = synthesize_if_frames(config, scene, drive, seed=args.seed)
    write_if_dump(args.out, art.if_frames)
    sidecar = {
        "true_bin": art.true_bin,
        "phase_rms": float(np.std(art.true_phase)),
        "seed": args.seed,
    }
    sidecar_path = str(args.out) + ".json"
    with open(sidecar_path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True)
        f.write("\n")
    _emit(args, {"out": str(args.out), "sidecar": sidecar_path, **sidecar},
          f"wrote {args.out} ({art.if_frames.n_frames} frames), "
          f"target bin {art.true_bin}")
    return EXIT_OK


def cmd_extract(args) -> int:
    config = load_radar_config(args.config) if args.config else None
    frames = read_if_dump(args.dump, config)
    audio = vibrometry.extract_audio(
        frames,
        spike_window=args.spike_window,
        mad_threshold=args.mad_threshold,
        normalize=not args.no_normalize,
    )
    corpus_synth.wav_write(audio, args.out)
    _emit(args, {"out": str(args.out), "sample_rate": audio.sample_rate,
                 "n_samples": len(audio)},
          f"wrote {args.out} ({audio.duration:.2f} s at "
          f"{audio.sample_rate:.0f} Hz)")
    return EXIT_OK


def _synth_one(entry, out_dir, params_base, corpus_seed):
    clean = corpus_synth.wav_read(entry["wav_path"])
    seed = corpus_synth.utterance_seed(corpus_seed, entry["id"])
    params = corpus_synth.SynthesisParams(
        lpf1_cutoff=params_base.lpf1_cutoff,
        lpf2_cutoff=params_base.lpf2_cutoff,
        filter_order=params_base.filter_order,
        noise_std=params_base.noise_std,
        noise_reference=params_base.noise_reference,
        seed=seed,
    )
    out = corpus_synth.synthesize_radar_audio(clean, params)
    out_path = Path(out_dir) / f"{entry['id']}.wav"
    corpus_synth.wav_write(out, out_path)
    noise_std = corpus_synth.resolve_noise_std(params)
    snr = (corpus_synth.snr_db(clean, noise_std)
           if noise_std > 0 else None)
    return {
        "id": entry["id"],
        "wav_path": str(out_path),
        "transcript": entry.get("transcript", ""),
        "source": entry["wav_path"],
        "snr_db": snr,
    }


def cmd_synth_corpus(args) -> int:
    entries = corpus_synth.read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise_ref = corpus_synth.wav_read(args.noise_ref) if args.noise_ref else None
    params = corpus_synth.SynthesisParams(
        noise_std=corpus_synth.FROM_REFERENCE if noise_ref else args.noise_std,
        noise_reference=noise_ref,
    )
    worker = lambda e: _synth_one(e, out_dir, params, args.seed)
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(worker, entries))
    else:
        results = [worker(e) for e in entries]
    out_manifest = out_dir / "manifest.jsonl"
    corpus_synth.write_manifest(out_manifest, results)
    run = RunManifest()
    for r in results:
        run.add(r["id"], args.seed, {"noise_std": str(params.noise_std)},
                wav_path=r["wav_path"])
    run.write(out_dir / "run_manifest.json")
    _emit(args, {"out_manifest": str(out_manifest), "count": len(results)},
          f"synthesized {len(results)} utterances into {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pairs = []
    for row in corpus_synth.read_manifest(args.pairs):
        pairs.append(TranscriptPair(
            reference=row["reference"],
            hypothesis=row["hypothesis"],
            id=str(row.get("id", len(pairs))),
            distance_cm=row.get("distance_cm"),
            duration_bin=row.get("duration_bin"),
        ))
    report = eval_metrics.evaluate_corpus(pairs)
    if args.by == "distance" and "by_distance_cm" not in report:
        print("error: no distance_cm tags in the pairs file", file=sys.stderr)
        return EXIT_USAGE
    if args.by == "duration" and "by_duration_bin" not in report:
        print("error: no duration_bin tags in the pairs file", file=sys.stderr)
        return EXIT_USAGE
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(
                report["per_utterance"][0].keys()))
            writer.writeheader()
            writer.writerows(report["per_utterance"])
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        o = report["overall"]
        print(f"utterances: {o['n']}")
        print(f"word acc   micro {o['micro_word_acc']:6.2f}  "
              f"macro {o['macro_word_acc']:6.2f}")
        print(f"char acc   micro {o['micro_char_acc']:6.2f}  "
              f"macro {o['macro_char_acc']:6.2f}")
        key = {"distance": "by_distance_cm", "duration": "by_duration_bin"}
        if args.by and key[args.by] in report:
            for bucket, agg in report[key[args.by]].items():
                print(f"  {bucket}: word {agg['macro_word_acc']:6.2f}  "
                      f"char {agg['macro_char_acc']:6.2f}  (n={agg['n']})")
    return EXIT_OK


def cmd_lora_check(args) -> int:
    checks = []
    rng = np.random.default_rng(args.seed)
    layer = LoraLinear.init(rng.normal(size=(16, 12)), r=4, alpha=8.0, rng=rng)
    x = rng.normal(size=(12, 6))
    checks.append(("zero-init identity",
                   bool(np.array_equal(lora_forward(layer, x), layer.W @ x)),
                   "output == W @ x bit for bit"))
    layer.W_B[:] = rng.normal(0.0, 0.1, layer.W_B.shape)
    y = lora_forward(layer, x)
    rel = float(np.abs(y - layer.merged_weight() @ x).max() /
                np.abs(y).max())
    checks.append(("merge equivalence", rel <= 1e-6, f"rel err {rel:.2e}"))
    err = grad_check(layer, x, rng.normal(size=(16, 6)))
    checks.append(("gradient check", err < 1e-4, f"max rel err {err:.2e}"))
    fraction = trainable_fraction(whisper_large_inventory())
    checks.append(("trainable fraction", 0.007 <= fraction <= 0.013,
                   f"{fraction:.4f} of base parameters"))
    all_ok = all(ok for _, ok, _ in checks)
    if args.json:
        print(json.dumps({"checks": [
            {"name": n, "passed": bool(ok), "detail": d}
            for n, ok, d in checks],
            "fraction": fraction, "passed": bool(all_ok)}, sort_keys=True))
    else:
        for name, ok, detail in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if all_ok else EXIT_THRESHOLD


def cmd_e2e_demo(args) -> int:
    cfg = load_radar_config(args.config) if args.config else RadarConfig()
    drive = acceptance.tone_drive(440.0, 1.0, cfg.frame_rate)
    rows = []
    all_ok = True
    for d_cm in (25, 50, 75, 100, 125):
        scene = Scene(target_distance=d_cm / 100.0,
                      noise_std=args.noise_std)
        art = synthesize_if_frames(cfg, scene, drive, seed=args.seed)
        audio = vibrometry.extract_audio(art.if_frames)
        corr = float(acceptance.aligned_correlation(audio.samples,
                                                    drive.samples))
        ok = corr >= args.threshold
        all_ok = all_ok and ok
        rows.append({"distance_cm": d_cm, "correlation": round(corr, 4),
                     "passed": ok})
    if args.json:
        print(json.dumps({"rows": rows, "passed": all_ok}, sort_keys=True))
    else:
        print(f"{'distance':>10} {'corr':>8}  status")
        for r in rows:
            print(f"{r['distance_cm']:>8}cm {r['correlation']:>8.4f}  "
                  f"{'ok' if r['passed'] else 'FAIL'}")
    if not all_ok:
        failing = [r["distance_cm"] for r in rows if not r["passed"]]
        print(f"failing distances (cm): {failing}", file=sys.stderr)
    return EXIT_OK if all_ok else EXIT_THRESHOLD


def cmd_selftest(args) -> int:
    results = acceptance.run_all()
    if args.json:
        print(json.dumps({"criteria": [
            {"name": r.name, "passed": r.passed, "detail": r.detail}
            for r in results],
            "passed": all(r.passed for r in results)}, sort_keys=True))
    else:
        for r in results:
            print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmvibro",
        description="Radar-vibrometry audio pipeline: simulate, extract, "
                    "synthesize, evaluate.")
    parser.add_argument("--config", help="radar config JSON (flat object)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", action="store_true",
                        help="machine-readable output")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize an IF dump from a drive WAV")
    p.add_argument("--scene", help="scene JSON (flat object)")
    p.add_argument("--drive", required=True, help="drive WAV at frame_rate")
    p.add_argument("--out", required=True, help="output IF dump path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="recover audio from an IF dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--mad-threshold", type=float,
                   default=vibrometry.DEFAULT_MAD_THRESHOLD)
    p.add_argument("--spike-window", type=int,
                   default=vibrometry.DEFAULT_SPIKE_WINDOW)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth-corpus", help="apply the radar-audio recipe "
                                            "to a manifest of clean WAVs")
    p.add_argument("--manifest", required=True, help="input JSONL manifest")
    p.add_argument("--out-dir", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--noise-std", type=float)
    group.add_argument("--noise-ref", help="reference radar-audio WAV")
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("evaluate", help="score reference/hypothesis pairs")
    p.add_argument("--pairs", required=True, help="JSONL pairs file")
    p.add_argument("--by", choices=("distance", "duration"))
    p.add_argument("--csv", help="write per-utterance CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("lora-check", help="run the adaptation invariants")
    p.set_defaults(func=cmd_lora_check)

    p = sub.add_parser("e2e-demo", help="simulate+extract across distances")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--threshold", type=float, default=0.9)
    p.set_defaults(func=cmd_e2e_demo)

    p = sub.add_parser("selftest", help="run the acceptance criteria")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MmvibroError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
