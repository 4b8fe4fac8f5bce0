"""Command-line surface: segment, eval, sweep, visualize.

The per-frame pipeline is feature map -> affinity graph -> normalized
Laplacian -> smallest eigenpairs -> (Fiedler mask | k-means labels) ->
upscale. Evaluation matches predicted labels to ground-truth classes and
scores mIoU; sweeps reuse one eigendecomposition per frame across every
(k, g) cell.

Exit codes: 0 all frames ok, 2 partial failures, 1 total failure or bad
configuration. Outputs are deterministic for a fixed config and seed
regardless of the worker count; wall-clock timings are segregated into
``timings.json`` so the rest of the output tree is byte-reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics, partition, postprocess, spectral, tensor_io
from .affinity import build_affinity
from .errors import SolverError
from .tensor_io import LabelMask

MODES = ("cluster", "salient")
INTERP_MODES = ("nearest-exact", "majority")
MATCH_MODES = ("auto", "hungarian", "majority")
MATCH_SCOPES = ("frame", "dataset")

EXIT_OK = 0
EXIT_TOTAL_FAILURE = 1
EXIT_PARTIAL = 2


@dataclass
class RunConfig:
    mode: str = "cluster"
    k: int = 15
    g: int | None = None  # defaults to k
    tau: float = 0.0
    seed: int = 0
    interp: str = "nearest-exact"
    height: int | None = None
    width: int | None = None
    eps_degree: float = spectral.DEFAULT_EPS_DEGREE
    eig_tol: float = spectral.DEFAULT_EIG_TOL
    match_mode: str = "auto"
    match_scope: str = "frame"
    foreground_only: bool = False
    workers: int = 1

    def resolved_g(self) -> int:
        return self.k if self.g is None else self.g

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.interp not in INTERP_MODES:
            raise ValueError(f"interp must be one of {INTERP_MODES}")
        if self.match_mode not in MATCH_MODES:
            raise ValueError(f"match_mode must be one of {MATCH_MODES}")
        if self.match_scope not in MATCH_SCOPES:
            raise ValueError(f"match_scope must be one of {MATCH_SCOPES}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.g is not None and self.g < 1:
            raise ValueError("g must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.eps_degree <= 0 or self.eig_tol <= 0:
            raise ValueError("eps_degree and eig_tol must be positive")

    @classmethod
    def from_sources(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        """Defaults, then JSON config file, then explicit flags."""
        values = dataclasses.asdict(cls())
        if config_path:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
            unknown = set(loaded) - set(values)
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            values.update(loaded)
        values.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**values)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class FrameOutput:
    lowres: LabelMask
    mask: LabelMask
    saliency: tensor_io.SaliencyMap | None
    graph_density: float


def upscale(mask: LabelMask, out_h: int, out_w: int, interp: str) -> LabelMask:
    if interp == "majority":
        return postprocess.upscale_majority(mask, out_h, out_w)
    return postprocess.upscale_nearest_exact(mask, out_h, out_w)


def segment_frame(
    fm: tensor_io.FeatureMap, cfg: RunConfig, out_h: int, out_w: int
) -> FrameOutput:
    """Run the whole pipeline for one frame."""
    graph = build_affinity(fm)
    lap = spectral.build_laplacian(graph, cfg.eps_degree)
    if cfg.mode == "salient":
        m = 2
    else:
        m = min(max(2, cfg.resolved_g()), graph.num_nodes)
    basis = spectral.smallest_eigenpairs(lap, m, tol=cfg.eig_tol, seed=cfg.seed)

    saliency = None
    if cfg.mode == "salient":
        saliency = partition.fiedler_saliency(basis, fm.height, fm.width)
        lowres = partition.fiedler_binary_mask(basis, fm.height, fm.width, cfg.tau)
    else:
        g = min(cfg.resolved_g(), basis.m)
        emb = partition.stack_eigenvectors(basis, g, fm.height, fm.width)
        params = partition.ClusterParams(k=cfg.k, g=g, seed=cfg.seed)
        lowres = partition.kmeans_cluster(emb, params)

    mask = upscale(lowres, out_h, out_w, cfg.interp)
    return FrameOutput(lowres, mask, saliency, graph.density())


def choose_assignment(
    table: postprocess.ContingencyTable, match_mode: str
) -> postprocess.Assignment:
    """Hungarian when cluster and class counts agree (or forced), else majority."""
    if match_mode == "hungarian":
        return postprocess.match_hungarian(table)
    if match_mode == "majority":
        return postprocess.match_majority(table)
    if table.is_square():
        return postprocess.match_hungarian(table)
    return postprocess.match_majority(table)


def discover_fmaps(features: Path) -> list[Path]:
    if features.is_file():
        return [features]
    return sorted(features.glob("*.fmap"))


def load_size_manifest(features: Path) -> dict:
    """Per-frame output sizes from a sidecar manifest, if one exists."""
    candidate = (features if features.is_dir() else features.parent) / "manifest.json"
    sizes: dict[str, tuple[int, int]] = {}
    if candidate.exists():
        payload = json.loads(candidate.read_text(encoding="utf-8"))
        for entry in payload.get("frames", []):
            if "frame_id" in entry and "H" in entry and "W" in entry:
                sizes[str(entry["frame_id"])] = (int(entry["H"]), int(entry["W"]))
    return sizes


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _manifest_config(cfg: RunConfig) -> dict:
    """Config as recorded in manifests; the worker count is an execution
    detail that must not make otherwise-identical runs differ."""
    payload = dataclasses.asdict(cfg)
    payload.pop("workers")
    return payload


def _run_frames(worker, frame_ids, workers: int):
    """Apply ``worker`` to every frame id on a pool; results keyed by id."""
    if workers <= 1:
        return {fid: worker(fid) for fid in frame_ids}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(worker, frame_ids))
    return dict(zip(frame_ids, results))


def _exit_code(statuses) -> int:
    statuses = list(statuses)
    if not statuses:
        return EXIT_TOTAL_FAILURE
    failed = sum(1 for ok in statuses if not ok)
    if failed == 0:
        return EXIT_OK
    if failed == len(statuses):
        return EXIT_TOTAL_FAILURE
    return EXIT_PARTIAL


def cmd_segment(cfg: RunConfig, features, out_dir) -> int:
    features = Path(features)
    out_dir = Path(out_dir)
    paths = discover_fmaps(features)
    if not paths:
        print(f"error: no FMAP files found under {features}", file=sys.stderr)
        return EXIT_TOTAL_FAILURE
    sizes = load_size_manifest(features)

    for sub in ("lowres", "masks") + (("saliency",) if cfg.mode == "salient" else ()):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    by_id = {p.stem: p for p in paths}

    def work(frame_id: str):
        start = time.perf_counter()
        try:
            fm = tensor_io.read_feature_map(by_id[frame_id])
            if cfg.height is not None and cfg.width is not None:
                out_h, out_w = cfg.height, cfg.width
            elif frame_id in sizes:
                out_h, out_w = sizes[frame_id]
            else:
                raise ValueError(
                    "no output size: pass --height/--width or provide a "
                    "manifest.json next to the FMAP files"
                )
            result = segment_frame(fm, cfg, out_h, out_w)
            outputs = {}
            lowres_path = out_dir / "lowres" / f"{frame_id}.pgm"
            tensor_io.write_mask(result.lowres, lowres_path)
            outputs["lowres"] = str(lowres_path.relative_to(out_dir))
            mask_path = out_dir / "masks" / f"{frame_id}.pgm"
            tensor_io.write_mask(result.mask, mask_path)
            outputs["mask"] = str(mask_path.relative_to(out_dir))
            if result.saliency is not None:
                sal_path = out_dir / "saliency" / f"{frame_id}.pgm"
                tensor_io.write_saliency(result.saliency, sal_path)
                outputs["saliency"] = str(sal_path.relative_to(out_dir))
            entry = {
                "frame_id": frame_id,
                "status": "ok",
                "graph_density": result.graph_density,
                "outputs": outputs,
            }
        except (ValueError, OSError, SolverError) as exc:
            entry = {"frame_id": frame_id, "status": "error", "error": str(exc)}
        return entry, time.perf_counter() - start

    frame_ids = sorted(by_id)
    results = _run_frames(work, frame_ids, cfg.workers)

    manifest = {
        "config": _manifest_config(cfg),
        "frames": [results[fid][0] for fid in frame_ids],
    }
    _write_json(out_dir / "manifest.json", manifest)
    _write_json(
        out_dir / "timings.json",
        {fid: results[fid][1] for fid in frame_ids},
    )
    for fid in frame_ids:
        entry = results[fid][0]
        if entry["status"] != "ok":
            print(f"error: frame {fid}: {entry['error']}", file=sys.stderr)
    return _exit_code(r[0]["status"] == "ok" for r in results.values())


def _dataset_assignment(tables: dict, match_mode: str) -> postprocess.Assignment:
    """One assignment from counts pooled over every frame."""
    pooled: dict[tuple[int, int], int] = {}
    for table in tables.values():
        for r, rl in enumerate(table.row_labels):
            for c, cl in enumerate(table.col_labels):
                n = int(table.counts[r, c])
                if n:
                    key = (int(rl), int(cl))
                    pooled[key] = pooled.get(key, 0) + n
    row_labels = np.array(sorted({p for p, _ in pooled}), dtype=np.int64)
    col_labels = np.array(sorted({c for _, c in pooled}), dtype=np.int64)
    counts = np.zeros((row_labels.size, col_labels.size), dtype=np.int64)
    r_index = {int(l): i for i, l in enumerate(row_labels)}
    c_index = {int(l): i for i, l in enumerate(col_labels)}
    for (p, c), n in pooled.items():
        counts[r_index[p], c_index[c]] = n
    merged = postprocess.ContingencyTable(row_labels, col_labels, counts)
    return choose_assignment(merged, match_mode)


def cmd_eval(
    cfg: RunConfig,
    pred_dir,
    gt_dir,
    out_dir,
    dataset: str = "",
    task: str = "",
) -> int:
    pred_dir, gt_dir, out_dir = Path(pred_dir), Path(gt_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_files = {p.stem: p for p in pred_dir.glob("*.pgm")}
    gt_files = {p.stem: p for p in gt_dir.glob("*.pgm")}
    shared = sorted(set(pred_files) & set(gt_files))
    unmatched_pred = sorted(set(pred_files) - set(gt_files))
    unmatched_gt = sorted(set(gt_files) - set(pred_files))
    if not shared:
        print("error: no frames with matching filenames to evaluate", file=sys.stderr)
        return EXIT_TOTAL_FAILURE

    dataset = dataset or gt_dir.name

    loaded: dict[str, tuple[LabelMask, LabelMask]] = {}
    tables: dict[str, postprocess.ContingencyTable] = {}
    frame_entries: dict[str, dict] = {}
    for fid in shared:
        try:
            pred = tensor_io.read_mask(pred_files[fid])
            gt = tensor_io.read_mask(gt_files[fid])
            tables[fid] = postprocess.contingency(pred, gt)
            loaded[fid] = (pred, gt)
        except (ValueError, OSError) as exc:
            frame_entries[fid] = {"frame_id": fid, "status": "error", "error": str(exc)}

    shared_assignment = None
    if cfg.match_scope == "dataset" and tables:
        shared_assignment = _dataset_assignment(tables, cfg.match_mode)

    reports = []
    for fid in shared:
        if fid in frame_entries:
            continue
        pred, gt = loaded[fid]
        try:
            assignment = shared_assignment or choose_assignment(
                tables[fid], cfg.match_mode
            )
            matched = postprocess.relabel(pred, assignment)
            report = metrics.frame_report(matched, gt, fid, cfg.foreground_only)
            metrics.write_report_json(report, out_dir / f"{fid}.json")
            reports.append(report)
            frame_entries[fid] = {
                "frame_id": fid,
                "status": "ok",
                "miou": report.miou,
                "match_mode": assignment.mode,
            }
        except (ValueError, OSError) as exc:
            frame_entries[fid] = {"frame_id": fid, "status": "error", "error": str(exc)}

    rows = []
    if reports:
        summary = metrics.aggregate(reports)
        rows.append(
            {
                "dataset": dataset,
                "task": task,
                "k": cfg.k,
                "g": cfg.resolved_g(),
                "miou_mean": summary["miou_mean"],
                "miou_std": summary["miou_std"],
                "n_frames": summary["n_frames"],
            }
        )
        # files keep full precision; the console line is rounded for reading
        print(
            f"{dataset}{'/' + task if task else ''}: "
            f"mIoU {100 * summary['miou_mean']:.2f} "
            f"+/- {100 * summary['miou_std']:.2f} "
            f"over {summary['n_frames']} frames"
        )
    metrics.write_summary_csv(rows, out_dir / "summary.csv")
    _write_json(
        out_dir / "eval_manifest.json",
        {
            "config": _manifest_config(cfg),
            "dataset": dataset,
            "task": task,
            "frames": [frame_entries[fid] for fid in shared],
            "unmatched_pred": unmatched_pred,
            "unmatched_gt": unmatched_gt,
        },
    )
    for fid in shared:
        entry = frame_entries[fid]
        if entry["status"] != "ok":
            print(f"error: frame {fid}: {entry['error']}", file=sys.stderr)
    for fid in unmatched_pred:
        print(f"warning: prediction {fid} has no ground truth", file=sys.stderr)
    for fid in unmatched_gt:
        print(f"warning: ground truth {fid} has no prediction", file=sys.stderr)
    return _exit_code(frame_entries[fid]["status"] == "ok" for fid in shared)


def cmd_sweep(
    cfg: RunConfig,
    features,
    gt_dir,
    k_list,
    g_list,
    out_dir,
    dataset: str = "",
    task: str = "",
) -> int:
    features, gt_dir, out_dir = Path(features), Path(gt_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = discover_fmaps(features)
    gt_files = {p.stem: p for p in gt_dir.glob("*.pgm")}
    frame_ids = sorted({p.stem for p in paths} & set(gt_files))
    if not frame_ids or not k_list or not g_list:
        print("error: sweep needs FMAP/GT pairs and non-empty k/g lists", file=sys.stderr)
        return EXIT_TOTAL_FAILURE
    dataset = dataset or gt_dir.name
    by_id = {p.stem: p for p in paths}

    # one eigendecomposition per frame at the largest requested g, sliced per cell
    cache: dict[str, tuple] = {}
    errors: dict[str, str] = {}
    target_m = max(2, max(g_list))
    for fid in frame_ids:
        try:
            fm = tensor_io.read_feature_map(by_id[fid])
            gt = tensor_io.read_mask(gt_files[fid])
            graph = build_affinity(fm)
            lap = spectral.build_laplacian(graph, cfg.eps_degree)
            m = min(target_m, graph.num_nodes)
            basis = spectral.smallest_eigenpairs(lap, m, tol=cfg.eig_tol, seed=cfg.seed)
            cache[fid] = (fm, gt, basis)
        except (ValueError, OSError, SolverError) as exc:
            errors[fid] = str(exc)

    rows = []
    cell_errors = []
    for k in k_list:
        for g in g_list:
            reports = []
            failure = None
            for fid in frame_ids:
                if fid in errors:
                    failure = f"{fid}: {errors[fid]}"
                    break
                fm, gt, basis = cache[fid]
                try:
                    if g > basis.m:
                        raise ValueError(f"g={g} exceeds {basis.m} eigenvectors")
                    emb = partition.stack_eigenvectors(basis, g, fm.height, fm.width)
                    params = partition.ClusterParams(k=k, g=g, seed=cfg.seed)
                    lowres = partition.kmeans_cluster(emb, params)
                    mask = upscale(lowres, gt.height, gt.width, cfg.interp)
                    assignment = choose_assignment(
                        postprocess.contingency(mask, gt), cfg.match_mode
                    )
                    matched = postprocess.relabel(mask, assignment)
                    reports.append(
                        metrics.frame_report(matched, gt, fid, cfg.foreground_only)
                    )
                except ValueError as exc:
                    failure = f"{fid}: {exc}"
                    break
            row = {"dataset": dataset, "task": task, "k": k, "g": g}
            if failure is None:
                summary = metrics.aggregate(reports)
                row.update(
                    miou_mean=summary["miou_mean"],
                    miou_std=summary["miou_std"],
                    n_frames=summary["n_frames"],
                )
            else:
                row.update(miou_mean="error", miou_std="error", n_frames=0)
                cell_errors.append({"k": k, "g": g, "error": failure})
            rows.append(row)

    metrics.write_summary_csv(rows, out_dir / "sweep.csv")
    _write_json(
        out_dir / "sweep_manifest.json",
        {"config": _manifest_config(cfg), "cell_errors": cell_errors},
    )
    for cell in cell_errors:
        print(
            f"error: cell k={cell['k']} g={cell['g']}: {cell['error']}",
            file=sys.stderr,
        )
    return _exit_code(row["n_frames"] != 0 for row in rows)


def cmd_visualize(cfg: RunConfig, features, indices, out_dir) -> int:
    features, out_dir = Path(features), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = discover_fmaps(features)
    if not paths or not indices:
        print("error: need FMAP files and at least one eigenvector index", file=sys.stderr)
        return EXIT_TOTAL_FAILURE
    if min(indices) < 1:
        print("error: eigenvector indices are 1-based", file=sys.stderr)
        return EXIT_TOTAL_FAILURE

    statuses = []
    for path in paths:
        try:
            fm = tensor_io.read_feature_map(path)
            graph = build_affinity(fm)
            lap = spectral.build_laplacian(graph, cfg.eps_degree)
            m = min(max(2, max(indices)), graph.num_nodes)
            basis = spectral.smallest_eigenpairs(lap, m, tol=cfg.eig_tol, seed=cfg.seed)
            bad = [i for i in indices if i > basis.m]
            if bad:
                raise ValueError(f"indices {bad} exceed the {basis.m} computed eigenvectors")
            for i in indices:
                tensor_io.export_eigenvector_image(
                    basis.eigenvectors[:, i - 1],
                    fm.height,
                    fm.width,
                    out_dir / f"{path.stem}_eig{i}.pgm",
                )
            statuses.append(True)
        except (ValueError, OSError, SolverError) as exc:
            print(f"error: frame {path.stem}: {exc}", file=sys.stderr)
            statuses.append(False)
    return _exit_code(statuses)


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigenseg",
        description="Unsupervised segmentation of dense feature maps by "
        "spectral graph partitioning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--k", type=int)
        p.add_argument("--g", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--interp", choices=INTERP_MODES)
        p.add_argument("--height", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("--eps-degree", dest="eps_degree", type=float)
        p.add_argument("--eig-tol", dest="eig_tol", type=float)
        p.add_argument("--match-mode", dest="match_mode", choices=MATCH_MODES)
        p.add_argument("--match-scope", dest="match_scope", choices=MATCH_SCOPES)
        p.add_argument(
            "--foreground-only",
            dest="foreground_only",
            action=argparse.BooleanOptionalAction,
            default=None,
        )
        p.add_argument("--workers", type=int)
        p.add_argument("--out-dir", dest="out_dir", default="out")

    seg = sub.add_parser("segment", help="segment FMAP frames into masks")
    seg.add_argument("features", help="FMAP file or directory")
    add_common(seg)

    ev = sub.add_parser("eval", help="score predicted masks against ground truth")
    ev.add_argument("pred_dir")
    ev.add_argument("gt_dir")
    ev.add_argument("--dataset", default="")
    ev.add_argument("--task", default="")
    add_common(ev)

    sw = sub.add_parser("sweep", help="mIoU grid over (k, g) hyper-parameters")
    sw.add_argument("features")
    sw.add_argument("gt_dir")
    sw.add_argument("--k-list", dest="k_list", type=_int_list, required=True)
    sw.add_argument("--g-list", dest="g_list", type=_int_list, required=True)
    sw.add_argument("--dataset", default="")
    sw.add_argument("--task", default="")
    add_common(sw)

    vis = sub.add_parser("visualize", help="export eigenvectors as grayscale images")
    vis.add_argument("features")
    vis.add_argument(
        "--indices", type=_int_list, required=True, help="1-based, comma separated"
    )
    add_common(vis)
    return parser


_CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(RunConfig))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FIELDS}
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
    except (ValueError, OSError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_TOTAL_FAILURE

    if args.command == "segment":
        return cmd_segment(cfg, args.features, args.out_dir)
    if args.command == "eval":
        return cmd_eval(
            cfg, args.pred_dir, args.gt_dir, args.out_dir, args.dataset, args.task
        )
    if args.command == "sweep":
        return cmd_sweep(
            cfg,
            args.features,
            args.gt_dir,
            args.k_list,
            args.g_list,
            args.out_dir,
            args.dataset,
            args.task,
        )
    if args.command == "visualize":
        return cmd_visualize(cfg, args.features, args.indices, args.out_dir)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
