"""Command-line interface: gen, train, eval, rollout, export, selftest.

Every command is a pure function of (config file, input files): rerunning
with the same seed reproduces outputs byte for byte. Exit codes: 0 success,
2 configuration/usage error, 3 numerical blowup, 4 I/O error. Timing or other
non-reproducible chatter goes to stderr only.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .algebra import ALGEBRAS, algebra_by_name, build_table
from .config import echo_config, grid_spec, load_config, model_config, obstacle_preset
from .dataset import (
    SplitManifest,
    Trajectory,
    load_manifest,
    load_trajectory,
    loss_mask,
    save_manifest,
    save_trajectory,
    window,
)
from .errors import BlowupError, ConfigError, StapdeError, UsageError
from .fdtd import TrajectoryConfig, random_sources, run_trajectory
from .harness import (
    MetricsRecord,
    TrainConfig,
    faraday_diff_map,
    faraday_map,
    metric_correlation,
    metric_mse,
    metric_ssim,
    predict_frame,
    rollout as run_rollout,
    train as run_train,
    write_loss_curves_csv,
    write_metrics_csv,
)
from .models import Model, ModelConfig, build, param_count
from .mvtensor import MvTensor, Tape, load_checkpoint, mse_loss, save_checkpoint

MODEL_NAMES = {
    "ga2": "clifford-resnet-2d",
    "sta2": "staresnet-2d",
    "ga3": "clifford-resnet-3d",
    "sta3": "staresnet-3d",
}


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def _gen_one(task):
    """Worker: simulate one trajectory and write it. Returns the relative path."""
    (data_dir, rel_path, grid, tcfg) = task
    traj = run_trajectory(tcfg, grid)
    out = Path(data_dir) / rel_path
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trajectory(out, traj)
    return rel_path


def cmd_gen(cfg: dict) -> int:
    grid = grid_spec(cfg)
    t = cfg["trajectory"]
    seed = int(cfg["seed"])
    data_dir = Path(cfg["data_dir"])
    data_dir.mkdir(parents=True, exist_ok=True)

    preset = t["obstacle_preset"]
    split_plan = [("train", int(cfg["splits"]["train"]), preset),
                  ("val", int(cfg["splits"]["val"]), preset),
                  ("test", int(cfg["splits"]["test"]), preset)]
    if preset is not None:
        split_plan.append(("test_unseen", int(cfg["splits"]["test"]), "unseen"))

    tasks = []
    splits: dict[str, list[str]] = {}
    for si, (split, count, preset_name) in enumerate(split_plan):
        configs = obstacle_preset(preset_name, grid)
        files = []
        for i in range(count):
            rng = np.random.default_rng([seed, si, i])
            sources = random_sources(grid, int(t["n_sources"]), float(t["wavelength"]),
                                     rng, tuple(t["amplitude_range"]))
            tcfg = TrajectoryConfig(
                frames=int(t["frames"]), stride=int(t["stride"]),
                seed=seed, sources=sources,
                obstacles=configs[i % len(configs)], warmup=int(t["warmup"]))
            rel = f"{split}/seq_{i:04d}.traj"
            tasks.append((str(data_dir), rel, grid, tcfg))
            files.append(rel)
        splits[split] = files

    workers = int(os.environ.get("STAPDE_THREADS", "1") or "1")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_gen_one, tasks))
    else:
        for task in tasks:
            _gen_one(task)

    manifest = SplitManifest(splits=splits, frames_per_sequence=int(t["frames"]))
    save_manifest(data_dir / "manifest.json", manifest)
    echo_config(cfg, data_dir)
    for split, info in manifest.counts().items():
        print(f"{split}: {info['sequences']} sequences, {info['frames']} frames")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _split_trajectories(cfg: dict, split: str, required: bool = True):
    manifest_path = Path(cfg["data_dir"]) / "manifest.json"
    manifest = load_manifest(manifest_path)
    if split not in manifest.splits:
        if required:
            raise ConfigError(f"dataset has no split {split!r}; run gen first")
        return None
    base = manifest_path.parent
    return [(rel, load_trajectory(base / rel)) for rel in manifest.splits[split]]


def _load_samples(cfg: dict, split: str):
    samples = []
    for rel, traj in _split_trajectories(cfg, split):
        samples.extend(window(traj, "train", source=rel))
    return samples


def _load_sequences(cfg: dict, split: str, m: int):
    trajs = _split_trajectories(cfg, split, required=False)
    if trajs is None:
        return None
    return [(rel, traj, window(traj, "rollout", m=m, source=rel)[0])
            for rel, traj in trajs]


def cmd_train(cfg: dict) -> int:
    if cfg["model"].get("kind", "resnet") != "resnet":
        raise ConfigError("only model.kind=resnet is trainable")
    mcfg = model_config(cfg)
    tr = cfg["train"]
    tcfg = TrainConfig(epochs=int(tr["epochs"]), batch_size=int(tr["batch_size"]),
                       lr=float(tr["lr"]), seed=int(cfg["seed"]))
    train_samples = _load_samples(cfg, "train")
    val_samples = _load_samples(cfg, "val")

    model = build(mcfg, seed=int(cfg["seed"]))
    print(f"model: {MODEL_NAMES[mcfg.algebra]} "
          f"C={mcfg.resolved_channels} blocks={mcfg.blocks} "
          f"params={param_count(model)}")
    result = run_train(model, train_samples, val_samples, tcfg)
    model.load_param_arrays(result.best_params)

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {
        "model": mcfg.to_dict(),
        "train": {"epochs": tcfg.epochs, "batch_size": tcfg.batch_size,
                  "lr": tcfg.lr, "seed": tcfg.seed},
        "stride": int(cfg["trajectory"]["stride"]),
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "curves": [[e, tr_, va] for e, tr_, va in result.curves],
    }
    save_checkpoint(out_dir / "model.ckpt", echo,
                    [p.data for p in model.parameters()])
    write_loss_curves_csv(out_dir / "loss_curves.csv", result.curves)
    echo_config(cfg, out_dir)
    print(f"best epoch {result.best_epoch}: val mse {result.best_val_mse:.6e}")
    return 0


def _restore_model(cfg: dict) -> tuple[Model, dict]:
    path = Path(cfg["out_dir"]) / "model.ckpt"
    if not path.exists():
        raise UsageError(f"checkpoint {path} not found; run train first")
    echo, arrays = load_checkpoint(path)
    mcfg = ModelConfig.from_dict(echo["model"])
    model = build(mcfg, seed=int(echo["train"]["seed"]))
    model.load_param_arrays(arrays)
    return model, echo


# ---------------------------------------------------------------------------
# eval / rollout
# ---------------------------------------------------------------------------

def _eval_splits(cfg: dict) -> list[str]:
    manifest = load_manifest(Path(cfg["data_dir"]) / "manifest.json")
    return [s for s in ("test", "test_unseen") if s in manifest.splits]


def cmd_eval(cfg: dict) -> int:
    kind = cfg["model"].get("kind", "resnet")
    if kind == "resnet":
        model, _ = _restore_model(cfg)
        algebra = model.config.algebra
        name = MODEL_NAMES[algebra]
    else:
        algebra = cfg["model"]["algebra"]
        name = kind
        model = None

    records = []
    for split in _eval_splits(cfg):
        for rel, traj in _split_trajectories(cfg, split):
            for s in window(traj, "train", source=rel):
                f1 = s.inputs[1].astype(np.float64)
                gt = s.target.astype(np.float64)
                if kind == "resnet":
                    pred = predict_frame(model, s.inputs[0].astype(np.float64), f1)
                elif kind == "oracle":
                    pred = gt.copy()
                else:  # persistence
                    pred = f1.copy()
                records.append(MetricsRecord(
                    model=name, algebra=algebra, dt_stride=traj.stride, split=split,
                    rollout_m=1, mse=metric_mse(pred, gt),
                    corr=metric_correlation(pred, gt), ssim=metric_ssim(pred, gt)))
    if not records:
        raise ConfigError("no test splits found; run gen first")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics_eval.csv", records)
    echo_config(cfg, out_dir)
    for split in _eval_splits(cfg):
        rows = [r for r in records if r.split == split]
        mean_mse = float(np.mean([r.mse for r in rows]))
        mean_corr = float(np.mean([r.corr for r in rows]))
        print(f"{split}: n={len(rows)} mse={mean_mse:.6e} corr={mean_corr:.6e}")
    return 0


def cmd_rollout(cfg: dict) -> int:
    kind = cfg["model"].get("kind", "resnet")
    m = int(cfg["rollout"]["m"])
    if kind == "oracle":
        raise ConfigError("the oracle stub cannot roll out (it needs the future)")
    if kind == "resnet":
        model, _ = _restore_model(cfg)
        name = MODEL_NAMES[model.config.algebra]
    else:
        class _Persistence:
            signature = algebra_by_name(cfg["model"]["algebra"])
            config = model_config(cfg)

            def __call__(self, x):
                return MvTensor(self.signature, x.data[:, 1:2].copy())

        model = _Persistence()
        name = kind

    records = []
    for split in _eval_splits(cfg):
        seqs = _load_sequences(cfg, split, m)
        for rel, traj, seq in seqs:
            _, recs = run_rollout(model, seq.frames, m,
                                  tag={"model": name,
                                       "algebra": model.config.algebra,
                                       "dt_stride": traj.stride, "split": split})
            records.extend(recs)
    if not records:
        raise ConfigError("no test splits found; run gen first")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics_rollout.csv", records)
    echo_config(cfg, out_dir)
    for step in range(1, m + 1):
        rows = [r for r in records if r.rollout_m == step]
        print(f"m={step}: mse={float(np.mean([r.mse for r in rows])):.6e} "
              f"ssim={float(np.mean([r.ssim for r in rows])):.6e}")
    return 0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def cmd_export(cfg: dict) -> int:
    model, echo = _restore_model(cfg)
    sig = model.signature
    seq_ids = list(cfg["export"]["sequences"])
    steps = sorted(int(s) for s in cfg["export"]["steps"])
    out_dir = Path(cfg["out_dir"])
    export_dir = out_dir / "export"

    write_loss_table = echo.get("curves")
    out_dir.mkdir(parents=True, exist_ok=True)
    if write_loss_table:
        write_loss_curves_csv(out_dir / "loss_table.csv", echo["curves"])

    if not seq_ids or not steps:
        print("empty export selection: no field maps written")
        return 0

    m = max(steps)
    seqs = _load_sequences(cfg, "test", m)
    if seqs is None:
        raise ConfigError("no test split found; run gen first")
    export_dir.mkdir(parents=True, exist_ok=True)
    part_names = ("scalar",) if model.config.spatial_dim == 2 else ("scalar", "pseudo")
    written = 0
    for idx in seq_ids:
        if not 0 <= int(idx) < len(seqs):
            raise ConfigError(f"export sequence {idx} out of range 0..{len(seqs) - 1}")
        rel, traj, seq = seqs[int(idx)]
        preds, _ = run_rollout(model, seq.frames, m, with_ssim=False,
                               tag={"split": "test", "dt_stride": traj.stride})
        pred_traj = Trajectory(dims=traj.dims, dx=traj.dx, stride=traj.stride,
                               frames=preds.astype(np.float32))
        save_trajectory(export_dir / f"seq{int(idx):03d}_pred.traj", pred_traj)
        for step in steps:
            gt = seq.frames[1 + step].astype(np.float64)
            pred = preds[step - 1]
            gt_parts = faraday_map(gt, sig)
            pred_parts = faraday_map(pred, sig)
            diff_parts = faraday_diff_map(gt, pred, sig)
            for pname, g, p, d in zip(part_names, gt_parts, pred_parts, diff_parts):
                stem = f"seq{int(idx):03d}_m{step:02d}_{pname}"
                for tag, grid in (("gt", g), ("pred", p), ("diff", d)):
                    path = export_dir / f"{stem}_{tag}.txt"
                    np.savetxt(path, grid.reshape(grid.shape[0], -1), fmt="%.8e")
                    written += 1
    echo_config(cfg, out_dir)
    print(f"wrote {written} field maps for {len(seq_ids)} sequence(s) to {export_dir}")
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def _bruteforce_blade_product(a: int, b: int, metric) -> tuple[int, int]:
    symbols = [i for i in range(len(metric)) if a >> i & 1]
    symbols += [i for i in range(len(metric)) if b >> i & 1]
    sign = 1
    changed = True
    while changed:
        changed = False
        for i in range(len(symbols) - 1):
            if symbols[i] > symbols[i + 1]:
                symbols[i], symbols[i + 1] = symbols[i + 1], symbols[i]
                sign = -sign
                changed = True
    out_bits = 0
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == symbols[i + 1]:
            sign *= metric[symbols[i]]
            i += 2
        else:
            out_bits |= 1 << symbols[i]
            i += 1
    return out_bits, sign


def cmd_selftest() -> int:
    failures = 0
    print(f"kernel backend: {kernels.backend_name()}")

    for name in sorted(ALGEBRAS):
        sig = ALGEBRAS[name]
        table = build_table(sig)
        n = sig.n_blades
        ok = all(
            (table.result[a, b], table.sign[a, b])
            == _bruteforce_blade_product(a, b, sig.metric)
            for a in range(n) for b in range(n))
        print(f"algebra-oracle {name}: {'ok' if ok else 'FAIL'} ({n * n} blade pairs)")
        failures += 0 if ok else 1

    for name in sorted(ALGEBRAS):
        sig = ALGEBRAS[name]
        spatial = (4, 4) if name in ("ga2", "sta2") else (3, 3, 3)
        err = _gradient_spot_check(name, spatial, n_probe=24)
        ok = err <= 1e-4
        print(f"gradient-check {name}: {'ok' if ok else 'FAIL'} "
              f"(max rel err {err:.2e} over 24 sampled parameters)")
        failures += 0 if ok else 1

    return 1 if failures else 0


def _gradient_spot_check(algebra: str, spatial, n_probe: int) -> float:
    sig = algebra_by_name(algebra)
    rng = np.random.default_rng([99, sig.n_blades])
    cfg = ModelConfig(algebra=algebra, channels=2, blocks=2)
    model = build(cfg, seed=17, dtype=np.float64)
    # keep pre-activations away from the ReLU kink so central differences hold
    model.kernels[0].bias.data += 0.5
    x = MvTensor(sig, rng.uniform(0.05, 1.0,
                                  size=(1, 2) + spatial + (sig.n_blades,)))
    target = rng.uniform(-1, 1, size=(1, 1) + spatial + (sig.n_blades,))
    mask = loss_mask(sig)

    def forward() -> float:
        pred = model(x)
        return mse_loss(pred, target, mask).item()

    model.zero_grad()
    with Tape() as tape:
        pred = model(x)
        loss = mse_loss(pred, target, mask)
        tape.backward(loss)

    params = model.parameters()
    h = 1e-3
    worst = 0.0
    flat_grads = np.concatenate([p.grad.ravel() for p in params])
    flat_params = [p.data.ravel() for p in params]
    sizes = np.cumsum([0] + [fp.size for fp in flat_params])
    total = sizes[-1]
    probe_idx = rng.choice(total, size=min(n_probe, total), replace=False)
    for gi in sorted(int(i) for i in probe_idx):
        which = int(np.searchsorted(sizes, gi, side="right") - 1)
        local = gi - sizes[which]
        arr = flat_params[which]
        keep = arr[local]
        arr[local] = keep + h
        fp = forward()
        arr[local] = keep - h
        fm = forward()
        arr[local] = keep
        fd = (fp - fm) / (2 * h)
        denom = max(abs(fd), abs(flat_grads[gi]), 1e-8)
        worst = max(worst, abs(fd - flat_grads[gi]) / denom)
    return worst


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stapde",
        description="Maxwell surrogate pipeline: data generation, training, "
                    "evaluation, rollout, export.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (("gen", True), ("train", True), ("eval", True),
                               ("rollout", True), ("export", True),
                               ("selftest", False)):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="experiment JSON file")
            p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                           help="override a config key, e.g. --set train.epochs=5")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest()
        cfg = load_config(args.config, args.set)
        handler = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
                   "rollout": cmd_rollout, "export": cmd_export}[args.command]
        return handler(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except BlowupError as e:
        print(f"numerical blowup: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
