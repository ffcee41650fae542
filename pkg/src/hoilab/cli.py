"""Command-line driver for experiments, ablations, and detection scoring.

Subcommands:
    gen-data      write synthetic datasets and embeddings per seed
    train         train one arm per seed and store its artifacts
    eval          re-evaluate a stored checkpoint on a seed's test split
    compare       run the configured arms and write a comparison report
    ablate-init   random vs embedding initialisation
    ablate-loss   the four losses under embedding initialisation
    ablate-gamma  sweep the logit scale over a grid
    detect-eval   score detection pairs through mask/pool/head

Every run is a pure function of its resolved config: artifacts land in
<out>/seed_<k>/<arm>/ and rerunning an identical config reproduces them
byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import classifier as clf_mod
from . import datagen, evaluation, regional
from .seeding import derive_seed
from .taxonomy import full_product_taxonomy, load_taxonomy
from .trainer import TrainConfig, train

__all__ = [
    "DEFAULT_SPEC",
    "GAMMA_GRID",
    "resolve_spec",
    "run_experiment",
    "ablate_gamma",
    "detect_eval",
    "main",
]

GAMMA_GRID = (50.0, 100.0, 150.0, 300.0, 500.0)

# Ten verbs x eight objects over the full pair grid, a Zipf 1.2 tail,
# and moderately noisy features: small enough to train in seconds,
# skewed enough that tail classes stay hard.  Single-label samples keep
# the few-shot tiers populated; co-labels stay available via config.
DEFAULT_SPEC: dict = {
    "dataset": {
        "num_verbs": 10,
        "num_objects": 8,
        "dim": 64,
        "noise_scale": 0.5,
        "zipf_exponent": 1.2,
        "n_train": 4000,
        "n_test": 2000,
        "max_labels_per_sample": 1,
    },
    "embedding": {"source": "synthetic", "noise": 0.3},
    "train": {
        "loss_name": "lse_sign",
        "gamma": 100.0,
        "epochs": 30,
        "batch_size": 64,
        "base_lr": 1e-3,
        "restart_period_epochs": 5,
        "min_samples_per_class": 40,
    },
    "init_mode": "embedding",
    "init_scheme": "kaiming",
    "arms": [
        {"name": "embedding", "init_mode": "embedding"},
        {"name": "random", "init_mode": "random"},
    ],
    "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    "out": "runs/experiment",
}


class CliError(Exception):
    """Raised for argument or config problems; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A002 - argparse API
        raise CliError(message)


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _apply_override(spec: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise CliError(f"override {assignment!r} is not of the form key=value")
    dotted, raw = assignment.split("=", 1)
    keys = [k for k in dotted.split(".") if k]
    if not keys:
        raise CliError(f"override {assignment!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = spec
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise CliError(f"override {assignment!r} descends into a non-mapping")
    node[keys[-1]] = value


def resolve_spec(
    config_path: str | None,
    overrides: list[str] | None = None,
    seeds: str | None = None,
    out: str | None = None,
) -> dict:
    """Merge defaults, a config file, and command-line overrides."""
    spec = copy.deepcopy(DEFAULT_SPEC)
    if config_path is not None:
        loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise CliError(f"config {config_path} must hold a JSON object")
        _deep_update(spec, loaded)
    for assignment in overrides or []:
        _apply_override(spec, assignment)
    if seeds is not None:
        try:
            spec["seeds"] = [int(tok) for tok in seeds.split(",") if tok.strip() != ""]
        except ValueError:
            raise CliError(f"--seeds must be comma-separated integers, got {seeds!r}")
        if not spec["seeds"]:
            raise CliError("--seeds produced an empty list")
    if out is not None:
        spec["out"] = out
    if not spec.get("seeds"):
        raise CliError("spec contains no seeds")
    return spec


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _build_world(spec: dict, seed: int):
    """Dataset and embeddings for one experiment seed (shared across arms)."""
    ds_cfg = spec["dataset"]
    verbs = [f"verb{i:02d}" for i in range(int(ds_cfg["num_verbs"]))]
    objects = [f"object{i:02d}" for i in range(int(ds_cfg["num_objects"]))]
    taxonomy = full_product_taxonomy(verbs, objects)
    data_seed = derive_seed(seed, "datagen")
    model = datagen.sample_semantic_model(
        taxonomy, int(ds_cfg["dim"]), float(ds_cfg["noise_scale"]), data_seed
    )
    dataset = datagen.generate_dataset(
        model,
        n_train=int(ds_cfg["n_train"]),
        n_test=int(ds_cfg["n_test"]),
        zipf_exponent=float(ds_cfg["zipf_exponent"]),
        max_labels_per_sample=int(ds_cfg["max_labels_per_sample"]),
        seed=data_seed,
    )
    emb_cfg = spec["embedding"]
    if emb_cfg["source"] == "synthetic":
        embeddings = datagen.synthesize_language_embeddings(
            model, float(emb_cfg["noise"]), derive_seed(seed, "embeddings")
        )
    elif emb_cfg["source"] == "file":
        embeddings = clf_mod.load_embeddings(emb_cfg["path"], num_classes=len(taxonomy))
    else:
        raise CliError(f"unknown embedding source {emb_cfg['source']!r}")
    return model, dataset, embeddings


def _arm_config(spec: dict, arm: dict, seed: int) -> tuple[TrainConfig, str, str]:
    overrides = {
        k: v for k, v in arm.items() if k not in ("name", "init_mode", "init_scheme")
    }
    cfg = TrainConfig.from_dict(
        {**spec["train"], **overrides, "seed": derive_seed(seed, "shuffle")}
    )
    init_mode = arm.get("init_mode", spec.get("init_mode", "embedding"))
    scheme = arm.get("init_scheme", spec.get("init_scheme", "kaiming"))
    return cfg, init_mode, scheme


def _init_head(init_mode, scheme, embeddings, dataset, cfg, seed):
    if init_mode == "embedding":
        return clf_mod.init_from_embeddings(embeddings, gamma=cfg.gamma)
    if init_mode == "random":
        return clf_mod.init_random(
            dataset.train.num_classes,
            dataset.dim,
            scheme=scheme,
            seed=derive_seed(seed, "init"),
            gamma=cfg.gamma,
        )
    raise CliError(f"unknown init_mode {init_mode!r}")


def _run_arm(spec, seed, arm, dataset, embeddings, out_dir: Path) -> dict:
    cfg, init_mode, scheme = _arm_config(spec, arm, seed)
    head = _init_head(init_mode, scheme, embeddings, dataset, cfg, seed)
    trained, log = train(dataset, head, cfg)
    features = dataset.test.features
    if cfg.normalize_features:
        norms = np.linalg.norm(features, axis=1, keepdims=True)
        features = features / np.maximum(norms, 1e-12)
    report = evaluation.evaluate(
        clf_mod.forward(trained, features), dataset.test.labels, dataset.stats
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        {
            "arm": arm,
            "dataset": spec["dataset"],
            "embedding": spec["embedding"],
            "init_mode": init_mode,
            "init_scheme": scheme,
            "seed": seed,
            "train": {
                k: getattr(cfg, k)
                for k in (
                    "loss_name", "gamma", "epochs", "batch_size", "base_lr",
                    "restart_period_epochs", "min_samples_per_class", "seed",
                    "beta1", "beta2", "epsilon", "focal_gamma", "focal_alpha",
                    "val_fraction", "normalize_features",
                )
            },
        },
        out_dir / "config.json",
    )
    clf_mod.save_checkpoint(trained, out_dir / "checkpoint.json")
    log.to_csv(out_dir / "training_log.csv")
    evaluation.save_report_json(report, out_dir / "eval.json")
    return {
        "map_all": report.map_all,
        "map_few_1": report.map_few.get(1),
        "map_few_5": report.map_few.get(5),
        "map_few_10": report.map_few.get(10),
    }


_METRICS = ("map_all", "map_few_1", "map_few_5", "map_few_10")


def _aggregate(per_arm: dict[str, dict[int, dict]], seeds: list[int]) -> dict:
    """Comparison report: per-seed metrics, means, and pairwise win counts."""
    arms_out = {}
    for arm, rows in per_arm.items():
        summary = {}
        for metric in _METRICS:
            values = [rows[s][metric] for s in seeds if rows[s][metric] is not None]
            if values:
                mean = sum(values) / len(values)
                var = sum((v - mean) ** 2 for v in values) / len(values)
                summary[f"mean_{metric}"] = mean
                summary[f"std_{metric}"] = math.sqrt(var)
            else:
                summary[f"mean_{metric}"] = None
                summary[f"std_{metric}"] = None
        arms_out[arm] = {
            "per_seed": {str(s): rows[s] for s in seeds},
            **summary,
        }
    wins: dict[str, dict[str, int]] = {metric: {} for metric in _METRICS}
    names = list(per_arm)
    for metric in _METRICS:
        for a in names:
            for b in names:
                if a == b:
                    continue
                count = 0
                for s in seeds:
                    va, vb = per_arm[a][s][metric], per_arm[b][s][metric]
                    if va is not None and vb is not None and va > vb:
                        count += 1
                wins[metric][f"{a}>{b}"] = count
    return {"arms": arms_out, "win_counts": wins, "seeds": seeds}


def run_experiment(spec: dict) -> dict:
    """Run every (seed, arm) cell and write the comparison report."""
    out_root = Path(spec["out"])
    seeds = [int(s) for s in spec["seeds"]]
    arms = spec.get("arms") or [{"name": "main"}]
    names = [arm.get("name", f"arm{i}") for i, arm in enumerate(arms)]
    if len(set(names)) != len(names):
        raise CliError(f"arm names must be unique, got {names}")
    per_arm: dict[str, dict[int, dict]] = {name: {} for name in names}
    for seed in seeds:
        _, dataset, embeddings = _build_world(spec, seed)
        for arm, name in zip(arms, names):
            metrics = _run_arm(
                spec, seed, {**arm, "name": name}, dataset, embeddings,
                out_root / f"seed_{seed}" / name,
            )
            per_arm[name][seed] = metrics
    report = _aggregate(per_arm, seeds)
    _write_json(report, out_root / "report.json")
    return report


def ablate_gamma(spec: dict, gammas=GAMMA_GRID) -> dict:
    """Sweep the logit scale; grid is validated before any training runs."""
    grid = [float(g) for g in gammas]
    for g in grid:
        if not np.isfinite(g) or g <= 0:
            raise CliError(f"gamma grid entries must be positive and finite, got {g}")
    sweep = copy.deepcopy(spec)
    sweep["arms"] = [
        {"name": f"gamma{g:g}", "init_mode": spec.get("init_mode", "embedding"), "gamma": g}
        for g in grid
    ]
    report = run_experiment(sweep)
    out_root = Path(spec["out"])
    lines = ["gamma,seed,mAP\n"]
    means = ["gamma,mean_mAP\n"]
    for g in grid:
        arm = report["arms"][f"gamma{g:g}"]
        for seed in report["seeds"]:
            lines.append(f"{g!r},{seed},{arm['per_seed'][str(seed)]['map_all']!r}\n")
        means.append(f"{g!r},{arm['mean_map_all']!r}\n")
    (out_root / "ablate_gamma.csv").write_text("".join(lines), encoding="utf-8")
    (out_root / "ablate_gamma_means.csv").write_text("".join(means), encoding="utf-8")
    return report


def detect_eval(
    gt_path,
    det_path,
    scenes_path,
    checkpoint_path,
    taxonomy_path,
    out_dir,
    iou_threshold: float = 0.5,
    train_counts_path=None,
    rare_cutoff: int = 10,
) -> regional.DetectionReport:
    """Score stored detections through mask -> pool -> head -> protocol AP."""
    head = clf_mod.load_checkpoint(checkpoint_path)
    taxonomy = load_taxonomy(taxonomy_path)
    if len(taxonomy) != head.num_classes:
        raise CliError(
            f"taxonomy has {len(taxonomy)} classes, checkpoint has {head.num_classes}"
        )
    scenes = {}
    for rec in json.loads(Path(scenes_path).read_text(encoding="utf-8")):
        for key in ("scene_id", "grid_size", "tokens"):
            if key not in rec:
                raise CliError(f"scene record is missing field {key!r}")
        scenes[str(rec["scene_id"])] = (
            int(rec["grid_size"]),
            np.asarray(rec["tokens"], dtype=np.float64),
        )
    detections = regional.load_detections(det_path)
    truth_records = regional.load_ground_truth(gt_path)

    predictions: dict[int, list[regional.PairPrediction]] = {}
    for det in detections:
        if det["scene_id"] not in scenes:
            raise CliError(f"detection references unknown scene {det['scene_id']!r}")
        grid_size, tokens = scenes[det["scene_id"]]
        mask = regional.boxes_to_mask(det["human_box"], det["object_box"], grid_size)
        pooled = regional.masked_attention_pool(
            tokens, mask, regional.AttentionParams.identity(tokens.shape[1])
        )
        scores = regional.score_pair(
            head, pooled, det["object_class"], det["object_probability"], taxonomy
        )
        for cls in np.flatnonzero(scores > 0):
            predictions.setdefault(int(cls), []).append(
                regional.PairPrediction(
                    scene_id=det["scene_id"],
                    human_box=det["human_box"],
                    object_box=det["object_box"],
                    score=float(scores[cls]),
                )
            )
    ground_truth: dict[int, list[regional.PairTruth]] = {}
    for rec in truth_records:
        if not 0 <= rec["hoi_class"] < len(taxonomy):
            raise CliError(f"ground-truth class {rec['hoi_class']} out of range")
        ground_truth.setdefault(rec["hoi_class"], []).append(
            regional.PairTruth(
                scene_id=rec["scene_id"],
                human_box=rec["human_box"],
                object_box=rec["object_box"],
            )
        )
    rare = None
    if train_counts_path is not None:
        counts = json.loads(Path(train_counts_path).read_text(encoding="utf-8"))
        if len(counts) != len(taxonomy):
            raise CliError("train counts length does not match the taxonomy")
        rare = frozenset(
            i for i, c in enumerate(counts) if int(c) < rare_cutoff
        )
    report = regional.detection_ap(
        predictions, ground_truth, iou_threshold=iou_threshold, rare_classes=rare
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    regional.save_detection_report(report, out / "detection_report.json")
    return report


def _cmd_gen_data(spec: dict) -> None:
    out_root = Path(spec["out"])
    for seed in spec["seeds"]:
        _, dataset, embeddings = _build_world(spec, int(seed))
        data_dir = out_root / f"seed_{seed}" / "data"
        data_dir.mkdir(parents=True, exist_ok=True)
        from .taxonomy import save_taxonomy

        save_taxonomy(dataset.taxonomy, data_dir / "taxonomy.tsv")
        datagen.save_samples(dataset.train, data_dir / "train.json", "taxonomy.tsv")
        datagen.save_samples(dataset.test, data_dir / "test.json", "taxonomy.tsv")
        clf_mod.save_embeddings(embeddings, data_dir / "embeddings.txt")


def _cmd_train(spec: dict) -> None:
    arm = {"name": "main", "init_mode": spec.get("init_mode", "embedding")}
    for seed in spec["seeds"]:
        _, dataset, embeddings = _build_world(spec, int(seed))
        _run_arm(
            spec, int(seed), arm, dataset, embeddings,
            Path(spec["out"]) / f"seed_{seed}" / "main",
        )


def _cmd_eval(spec: dict, checkpoint_path: str) -> None:
    seed = int(spec["seeds"][0])
    _, dataset, _ = _build_world(spec, seed)
    head = clf_mod.load_checkpoint(checkpoint_path)
    report = evaluation.evaluate(
        clf_mod.forward(head, dataset.test.features), dataset.test.labels, dataset.stats
    )
    out = Path(spec["out"])
    out.mkdir(parents=True, exist_ok=True)
    evaluation.save_report_json(report, out / "eval.json")
    evaluation.save_report_csv(report, out / "eval.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hoilab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON experiment spec")
        p.add_argument("--out", help="output directory (overrides the spec)")
        p.add_argument("--seeds", help="comma-separated integer seeds")
        p.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="dotted-path config override, value parsed as JSON when possible",
        )

    for name in ("gen-data", "train", "compare", "ablate-init", "ablate-loss"):
        add_common(sub.add_parser(name))

    p_eval = sub.add_parser("eval")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_gamma = sub.add_parser("ablate-gamma")
    add_common(p_gamma)
    p_gamma.add_argument(
        "--gammas", default=",".join(f"{g:g}" for g in GAMMA_GRID),
        help="comma-separated logit scales",
    )

    p_det = sub.add_parser("detect-eval")
    p_det.add_argument("--gt", required=True)
    p_det.add_argument("--detections", required=True)
    p_det.add_argument("--scenes", required=True)
    p_det.add_argument("--checkpoint", required=True)
    p_det.add_argument("--taxonomy", required=True)
    p_det.add_argument("--out", required=True)
    p_det.add_argument("--iou-threshold", type=float, default=0.5)
    p_det.add_argument("--train-counts", default=None)
    return parser


def _dispatch(args) -> None:
    if args.command == "detect-eval":
        detect_eval(
            args.gt, args.detections, args.scenes, args.checkpoint,
            args.taxonomy, args.out, iou_threshold=args.iou_threshold,
            train_counts_path=args.train_counts,
        )
        return
    spec = resolve_spec(args.config, args.override, args.seeds, args.out)
    if args.command == "gen-data":
        _cmd_gen_data(spec)
    elif args.command == "train":
        _cmd_train(spec)
    elif args.command == "eval":
        _cmd_eval(spec, args.checkpoint)
    elif args.command == "compare":
        run_experiment(spec)
    elif args.command == "ablate-init":
        spec["arms"] = [
            {"name": "random", "init_mode": "random"},
            {"name": "embedding", "init_mode": "embedding"},
        ]
        run_experiment(spec)
    elif args.command == "ablate-loss":
        spec["arms"] = [
            {"name": loss, "init_mode": "embedding", "loss_name": loss}
            for loss in ("lse_sign", "bce", "weighted_bce", "focal")
        ]
        run_experiment(spec)
    elif args.command == "ablate-gamma":
        try:
            gammas = [float(tok) for tok in args.gammas.split(",") if tok.strip()]
        except ValueError:
            raise CliError(f"--gammas must be comma-separated numbers, got {args.gammas!r}")
        if not gammas:
            raise CliError("--gammas produced an empty grid")
        ablate_gamma(spec, gammas)
    else:  # pragma: no cover - argparse enforces the choices
        raise CliError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _dispatch(args)
    except CliError as exc:
        print(json.dumps({"error": "CliError", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit nonzero
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
