"""Training loop, schedules, checkpointing, inference and evaluation.

The generator and both discriminators train with Adam (betas 0.5/0.999, no
weight decay) at a learning rate that stays constant for the first
``lr_constant_epochs`` and then decays linearly to zero. The segmentation
term switches on at ``seg_start_epoch``. All data-side randomness is drawn
from stateless per-(seed, epoch, index) generators, so a run can resume from
a checkpoint bitwise.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import yaml

from . import data as data_mod
from .data import SceneSample, normalize_cube, random_crop_pair, synth_dataset
from .discriminators import PatchDiscriminator, StatsDiscriminator
from .fusion import Colorizer
from .losses import (ContentLoss, LossWeights, discriminator_loss,
                     generator_adversarial_loss, pretrain_segmentation,
                     segmentation_loss)
from .metrics import metric_report, psnr, ssim, uiqi


@dataclass
class DatasetSpec:
    kind: str = "synth"          # "synth" or "dir"
    count: int = 200
    val_count: int = 20
    height: int = 64
    width: int = 64
    bands: int = 8
    classes: int = 4
    path: str = ""               # used when kind == "dir"


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1
    lr0: float = 1.2e-4
    lr_constant_epochs: int = 50
    crop: int = 256
    seed: int = 0
    data_seed: int = 0
    base_channels: int = 48
    n_groups: int = 2
    blocks_per_group: int = 3
    d_state: int = 8
    spectral_group: int = 8
    d_base_width: int = 64
    use_fsb: bool = True
    use_rbs: bool = True
    use_seg_loss: bool = True
    use_fem: bool = True
    use_mdfm: bool = True
    use_dgm: bool = True
    use_spectral: bool = True
    use_dcn: bool = True
    use_asm: bool = True
    seg_start_epoch: int = 50
    seg_weight: float = 0.5
    lambda_adv: float = 0.5
    lambda_content: float = 1.0
    lambda_pix: float = 10.0
    lambda_per: float = 10.0
    lambda_edge: float = 1.0
    lambda_tv: float = 1.0
    lambda_ssim: float = 1.0
    lambda_fft: float = 1.0
    seg_epochs: int = 20
    seg_lr: float = 1e-3
    seg_target_acc: float = 0.95
    checkpoint_every: int = 10
    out_dir: str = "runs/default"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        if not isinstance(raw, dict):
            raise ValueError("config root must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        raw = dict(raw)
        ds_raw = raw.pop("dataset", None)
        cfg = cls(**raw)
        if ds_raw is not None:
            ds_known = {f.name for f in dataclasses.fields(DatasetSpec)}
            ds_unknown = set(ds_raw) - ds_known
            if ds_unknown:
                raise ValueError(f"unknown dataset keys: {sorted(ds_unknown)}")
            cfg.dataset = DatasetSpec(**ds_raw)
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "TrainConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Constant lr0 through lr_constant_epochs-1, then linear decay hitting
    zero at cfg.epochs."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.lr_constant_epochs:
        return cfg.lr0
    return cfg.lr0 * ((cfg.epochs - epoch) / (cfg.epochs - cfg.lr_constant_epochs))


def seg_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Segmentation term weight: zero until seg_start_epoch, then seg_weight."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return 0.0 if epoch < cfg.seg_start_epoch else cfg.seg_weight


# ---------------------------------------------------------------------------
# Tensors
# ---------------------------------------------------------------------------

def sample_to_tensors(samples: list[SceneSample]):
    cube = torch.stack([
        torch.from_numpy(np.ascontiguousarray(s.cube.transpose(2, 0, 1)))
        for s in samples])
    rgb = torch.stack([
        torch.from_numpy(np.ascontiguousarray(s.rgb.transpose(2, 0, 1)))
        for s in samples])
    mask = torch.stack([
        torch.from_numpy(np.ascontiguousarray(s.mask)) for s in samples])
    return cube, rgb, mask


def colorize_cube(generator: Colorizer, cube: np.ndarray) -> np.ndarray:
    """Full-resolution forward pass of one (H, W, L) cube -> (H, W, 3) RGB."""
    x = torch.from_numpy(np.ascontiguousarray(cube.transpose(2, 0, 1)))[None]
    with torch.no_grad():
        y = generator(x.float())
    return y[0].permute(1, 2, 0).numpy().astype(np.float32)


def evaluate_generator(generator: Colorizer, samples: list[SceneSample],
                       names: list[str] | None = None):
    """Per-image rows (name, psnr, ssim, uiqi) on [0, 1]-mapped images."""
    if not samples:
        raise ValueError("no samples to evaluate")
    rows = []
    for i, s in enumerate(samples):
        name = names[i] if names else f"img_{i:05d}"
        pred = colorize_cube(generator, normalize_cube(s.cube))
        pred01 = (pred.astype(np.float64) + 1.0) * 0.5
        gt01 = (s.rgb.astype(np.float64) + 1.0) * 0.5
        rows.append((name, psnr(pred01, gt01, 1.0), ssim(pred01, gt01, 1.0),
                     uiqi(pred01, gt01)))
    return rows


def _mean_of(rows, idx):
    return float(np.mean([r[idx] for r in rows]))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _optimizer_arrays(opt: torch.optim.Adam, named_params, prefix: str) -> dict:
    out = {}
    state = opt.state
    for name, p in named_params:
        st = state.get(p)
        if not st:
            continue
        out[f"{prefix}/{name}/step"] = np.float64(float(st["step"]))
        out[f"{prefix}/{name}/exp_avg"] = st["exp_avg"].numpy().astype(np.float32)
        out[f"{prefix}/{name}/exp_avg_sq"] = st["exp_avg_sq"].numpy().astype(np.float32)
    return out


def _load_optimizer_arrays(opt: torch.optim.Adam, named_params, prefix: str,
                           arrays) -> None:
    for name, p in named_params:
        key = f"{prefix}/{name}/step"
        if key not in arrays:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(arrays[key])),
            "exp_avg": torch.from_numpy(arrays[f"{prefix}/{name}/exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(
                arrays[f"{prefix}/{name}/exp_avg_sq"].copy()),
        }


def _module_arrays(module: torch.nn.Module, prefix: str) -> dict:
    return {f"{prefix}/{k}": v.detach().numpy().astype(np.float32)
            for k, v in module.state_dict().items()}


def _load_module_arrays(module: torch.nn.Module, prefix: str, arrays) -> None:
    sd = module.state_dict()
    tensors = {}
    for k, v in sd.items():
        key = f"{prefix}/{k}"
        if key not in arrays:
            raise ValueError(f"checkpoint missing parameter {key}")
        arr = arrays[key]
        if tuple(arr.shape) != tuple(v.shape):
            raise ValueError(
                f"shape mismatch for {key}: checkpoint {tuple(arr.shape)} "
                f"vs model {tuple(v.shape)}")
        tensors[k] = torch.from_numpy(arr.copy()).to(v.dtype)
    module.load_state_dict(tensors)


def atomic_savez(path, **arrays) -> None:
    """Write an npz archive via a temp file and rename, so a crash never
    leaves a truncated checkpoint behind."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint_arrays(path) -> dict:
    with np.load(path, allow_pickle=False) as npz:
        return {k: npz[k] for k in npz.files}


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    val_history: list
    loss_history: list
    report: str
    checkpoint_path: str
    log_path: str


class Trainer:
    """Owns the models, optimizers and the epoch loop for one config."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        ds = cfg.dataset
        self.generator = Colorizer(
            bands=ds.bands, base_channels=cfg.base_channels,
            n_groups=cfg.n_groups, blocks_per_group=cfg.blocks_per_group,
            height=cfg.crop, width=cfg.crop, use_fsb=cfg.use_fsb,
            use_rbs=cfg.use_rbs, use_fem=cfg.use_fem, use_mdfm=cfg.use_mdfm,
            use_dgm=cfg.use_dgm, use_spectral=cfg.use_spectral,
            use_dcn=cfg.use_dcn, use_asm=cfg.use_asm, d_state=cfg.d_state,
            spectral_group=cfg.spectral_group)
        self.d_patch = PatchDiscriminator(cond_channels=ds.bands,
                                          base_width=cfg.d_base_width)
        self.d_stats = StatsDiscriminator()
        self.content = ContentLoss(LossWeights(
            cfg.lambda_pix, cfg.lambda_per, cfg.lambda_edge,
            cfg.lambda_tv, cfg.lambda_ssim, cfg.lambda_fft))
        self.opt_g = torch.optim.Adam(self.generator.parameters(),
                                      lr=cfg.lr0, betas=(0.5, 0.999))
        d_params = list(self.d_patch.parameters()) + list(self.d_stats.parameters())
        self.opt_d = torch.optim.Adam(d_params, lr=cfg.lr0, betas=(0.5, 0.999))
        self.segnet = None
        self.epoch = 0            # next epoch to run
        self.loss_history: list[dict] = []
        self.val_history: list[dict] = []

    # -- data ---------------------------------------------------------------

    def build_data(self):
        ds = self.cfg.dataset
        if ds.kind == "synth":
            train = synth_dataset(self.cfg.data_seed, ds.count, ds.height,
                                  ds.width, ds.bands, ds.classes)
            val = synth_dataset(self.cfg.data_seed, ds.val_count, ds.height,
                                ds.width, ds.bands, ds.classes, start=ds.count)
        elif ds.kind == "dir":
            root = Path(ds.path)
            train = data_mod.load_dataset(root / "train")
            val = data_mod.load_dataset(root / "val")
        else:
            raise ValueError(f"unknown dataset kind {ds.kind!r}")
        norm = lambda s: dataclasses.replace(s, cube=normalize_cube(s.cube))
        return [norm(s) for s in train], [norm(s) for s in val]

    # -- one optimization step ----------------------------------------------

    def train_step(self, cube: torch.Tensor, rgb: torch.Tensor,
                   mask: torch.Tensor, epoch: int, step: int,
                   lam_seg: float) -> dict:
        t0 = time.perf_counter()
        cfg = self.cfg
        fake = self.generator(cube)

        self.opt_d.zero_grad()
        real_logits = {"patch": self.d_patch(cube, rgb),
                       "stats": self.d_stats(rgb)}
        fake_det = fake.detach()
        fake_logits = {"patch": self.d_patch(cube, fake_det),
                       "stats": self.d_stats(fake_det)}
        loss_d, _ = discriminator_loss(real_logits, fake_logits)
        loss_d.backward()
        self.opt_d.step()

        self.opt_g.zero_grad()
        gen_logits = {"patch": self.d_patch(cube, fake),
                      "stats": self.d_stats(fake)}
        adv, _ = generator_adversarial_loss(gen_logits)
        content, parts = self.content(fake, rgb)
        if self.segnet is not None and lam_seg > 0.0:
            seg = segmentation_loss(self.segnet, fake, mask)
        else:
            seg = fake.new_tensor(0.0)
        total = cfg.lambda_adv * adv + cfg.lambda_content * content + lam_seg * seg
        total.backward()
        self.opt_g.step()

        stats = {
            "epoch": epoch, "step": step,
            "lr": lr_schedule(epoch, cfg), "lam_seg": lam_seg,
            "loss_d": loss_d.item(), "adv": adv.item(),
            "pix": parts["pix"].item(), "per": parts["per"].item(),
            "edge": parts["edge"].item(), "tv": parts["tv"].item(),
            "ssim": parts["ssim"].item(), "fft": parts["fft"].item(),
            "content": content.item(), "seg": seg.item(), "total": total.item(),
            "wall": time.perf_counter() - t0,
        }
        bad = [k for k, v in stats.items() if not np.isfinite(v)]
        if bad:
            raise RuntimeError(
                f"non-finite loss at epoch {epoch} step {step}: "
                f"{ {k: stats[k] for k in bad} }; full record {stats}")
        return stats

    # -- checkpoint ---------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        arrays = {
            "config_json": np.array(json.dumps(self.cfg.to_dict(), sort_keys=True)),
            "config_fingerprint": np.array(self.cfg.fingerprint()),
            "epoch": np.int64(self.epoch),
            "loss_history_json": np.array(json.dumps(self.loss_history)),
            "val_history_json": np.array(json.dumps(self.val_history)),
        }
        arrays.update(_module_arrays(self.generator, "g"))
        arrays.update(_module_arrays(self.d_patch, "dp"))
        arrays.update(_module_arrays(self.d_stats, "ds"))
        if self.segnet is not None:
            arrays.update(_module_arrays(self.segnet, "seg"))
        arrays.update(_optimizer_arrays(
            self.opt_g, list(self.generator.named_parameters()), "optg"))
        d_named = ([("dp." + n, p) for n, p in self.d_patch.named_parameters()]
                   + [("ds." + n, p) for n, p in self.d_stats.named_parameters()])
        arrays.update(_optimizer_arrays(self.opt_d, d_named, "optd"))
        atomic_savez(path, **arrays)

    def load_checkpoint(self, path) -> None:
        arrays = load_checkpoint_arrays(path)
        saved = json.loads(str(arrays["config_json"]))
        if saved != self.cfg.to_dict():
            raise ValueError("checkpoint config does not match trainer config")
        _load_module_arrays(self.generator, "g", arrays)
        _load_module_arrays(self.d_patch, "dp", arrays)
        _load_module_arrays(self.d_stats, "ds", arrays)
        if any(k.startswith("seg/") for k in arrays):
            from .losses import SegmentationNet
            self.segnet = SegmentationNet(self.cfg.dataset.classes)
            _load_module_arrays(self.segnet, "seg", arrays)
            self.segnet.eval()
            for p in self.segnet.parameters():
                p.requires_grad_(False)
        _load_optimizer_arrays(
            self.opt_g, list(self.generator.named_parameters()), "optg", arrays)
        d_named = ([("dp." + n, p) for n, p in self.d_patch.named_parameters()]
                   + [("ds." + n, p) for n, p in self.d_stats.named_parameters()])
        _load_optimizer_arrays(self.opt_d, d_named, "optd", arrays)
        self.epoch = int(arrays["epoch"])
        self.loss_history = json.loads(str(arrays["loss_history_json"]))
        self.val_history = json.loads(str(arrays["val_history_json"]))

    # -- main loop ----------------------------------------------------------

    def fit(self, resume: str | None = None, log=None) -> TrainResult:
        cfg = self.cfg
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train.log"
        ckpt_path = out_dir / "checkpoint.npz"
        train, val = self.build_data()

        if resume is not None:
            self.load_checkpoint(resume)
        elif cfg.use_seg_loss and self.segnet is None:
            # a caller may pre-assign a frozen segnet (e.g. shared across
            # variant runs on the same dataset); otherwise pretrain here
            self.segnet = pretrain_segmentation(
                train, cfg.dataset.classes, epochs=cfg.seg_epochs,
                lr=cfg.seg_lr, target_acc=cfg.seg_target_acc, seed=cfg.seed,
                log=log)

        mode = "a" if resume is not None else "w"
        with open(log_path, mode) as log_fh:
            def emit(line):
                log_fh.write(line + "\n")
                if log is not None:
                    log(line)

            crop = min(cfg.crop, min(s.height for s in train),
                       min(s.width for s in train))
            for epoch in range(self.epoch, cfg.epochs):
                lr = lr_schedule(epoch, cfg)
                for opt in (self.opt_g, self.opt_d):
                    for group in opt.param_groups:
                        group["lr"] = lr
                lam = seg_schedule(epoch, cfg) if cfg.use_seg_loss else 0.0
                order = np.random.default_rng(
                    (cfg.data_seed, 7, epoch)).permutation(len(train))
                step = 0
                for b0 in range(0, len(order), cfg.batch_size):
                    idxs = order[b0:b0 + cfg.batch_size]
                    crops = [random_crop_pair(
                        train[i], crop, (cfg.data_seed, 11, epoch, int(i)))
                        for i in idxs]
                    cube, rgb, mask = sample_to_tensors(crops)
                    stats = self.train_step(cube, rgb, mask, epoch, step, lam)
                    self.loss_history.append(stats)
                    emit(" ".join(f"{k}={v:.9g}" if isinstance(v, float)
                                  else f"{k}={v}" for k, v in stats.items()))
                    step += 1
                rows = evaluate_generator(self.generator, val)
                entry = {"epoch": epoch, "psnr": _mean_of(rows, 1),
                         "ssim": _mean_of(rows, 2), "uiqi": _mean_of(rows, 3)}
                self.val_history.append(entry)
                emit(f"val epoch={epoch} psnr={entry['psnr']:.4f} "
                     f"ssim={entry['ssim']:.6f} uiqi={entry['uiqi']:.6f}")
                self.epoch = epoch + 1
                if (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
                    self.save_checkpoint(ckpt_path)

        rows = evaluate_generator(self.generator, val)
        report = metric_report(rows)
        (out_dir / "report.txt").write_text(report)
        self.save_checkpoint(ckpt_path)
        return TrainResult(val_history=self.val_history,
                           loss_history=self.loss_history, report=report,
                           checkpoint_path=str(ckpt_path),
                           log_path=str(log_path))


def train(cfg: TrainConfig, resume: str | None = None, log=None) -> TrainResult:
    return Trainer(cfg).fit(resume=resume, log=log)


# ---------------------------------------------------------------------------
# Inference / evaluation entry points
# ---------------------------------------------------------------------------

def load_generator(checkpoint_path) -> tuple[Colorizer, TrainConfig]:
    arrays = load_checkpoint_arrays(checkpoint_path)
    cfg = TrainConfig.from_dict(json.loads(str(arrays["config_json"])))
    trainer = Trainer(cfg)
    _load_module_arrays(trainer.generator, "g", arrays)
    trainer.generator.eval()
    return trainer.generator, cfg


def infer(checkpoint_path, cube_path, out_path) -> np.ndarray:
    """Colorize one cube file and write the result as PPM."""
    generator, _ = load_generator(checkpoint_path)
    cube = normalize_cube(data_mod.read_cube(cube_path))
    rgb = colorize_cube(generator, cube)
    data_mod.write_ppm(rgb, out_path)
    return rgb


def evaluate(checkpoint_path, data_dir) -> str:
    """Metric report over a directory of cube/ppm pairs."""
    generator, _ = load_generator(checkpoint_path)
    samples = data_mod.load_dataset(data_dir)
    names = [p.stem for p in sorted(Path(data_dir).glob("*.cube"))]
    rows = evaluate_generator(generator, samples, names)
    return metric_report(rows)
