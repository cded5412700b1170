"""Staged optimization for the stereo reconstruction pipeline.

Training happens in stages. The disparity stage fits the disparity network
alone against rendered ground truth. The reconstruction stage freezes it
and fits the encoder, correlation network, and decoder on occupancy or
point losses, optionally sourcing disparity from ground truth or the
classical block matcher instead. A joint stage finetunes everything with a
weighted sum of both losses.

Every run is deterministic for a fixed seed: batch order is drawn from a
seed sequence keyed by (seed, epoch), and checkpoints capture optimizer
moments so a resumed run is bit-identical to an uninterrupted one.

Datasets are loaded fully into memory before the first step; the intended
regime is small desk-scale sets, not disk-streaming epochs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    NumericError,
    ParameterStore,
    Tensor,
    load_checkpoint,
    no_grad,
    ops,
)
from .metrics import (
    chamfer_distance,
    chamfer_distance_eval,
    disparity_loss,
    iou,
    volume_loss,
)
from .nets import ScaleConfig, StereoPipeline, pipeline_from_header
from .scenegen.dataset import StereoSample, load_sample, read_manifest
from .sgbm import SgmParams, fill_background, sgbm_disparity

STAGES = ("disp-pretrain", "rec-train", "joint-finetune")
DISP_SOURCES = ("dispnetb", "sgbm", "groundtruth")


class Adam:
    """Adam with bias correction over a fixed list of named parameters.

    Moment buffers live in the parameter dtype, so a float64 store gets
    float64 state and matches the closed-form recurrence to roundoff.
    """

    def __init__(self, params: list[tuple[str, Tensor]], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not params:
            raise ValueError("optimizer needs at least one parameter")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.data.dtype, copy=False)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.step_count], np.float32)}
        for name, _ in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state(self, arrays: dict[str, np.ndarray]):
        self.step_count = int(arrays["adam.step"][0])
        for name, p in self.params:
            for store, key in ((self.m, f"adam.m.{name}"),
                               (self.v, f"adam.v.{name}")):
                src = arrays[key]
                if src.shape != p.data.shape:
                    raise ValueError(f"moment shape mismatch for {name}")
                store[name][...] = src


@dataclass(frozen=True)
class TrainPlan:
    """Everything that defines one training run except data and seed.

    task may be "disparity" only together with the disp-pretrain stage;
    the reconstruction head is untouched there. decay_at defaults to 60%
    of the epoch budget and the rate drops once, not per epoch.
    """

    task: str
    stage: str
    epochs: int
    batch_size: int
    lr: float = 1e-4
    lr_decay: float = 0.5
    decay_at: int | None = None
    disp_weight: float = 0.1
    use_disp: bool = True
    use_corr: bool = True
    disp_source: str = "dispnetb"
    unfreeze_disp: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.task not in ("volume", "point", "disparity"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.task == "disparity" and self.stage != "disp-pretrain":
            raise ValueError("disparity task only trains in disp-pretrain")
        if self.stage == "disp-pretrain" and not self.use_disp:
            raise ValueError("disp-pretrain needs the disparity network")
        if self.stage == "joint-finetune" and not self.use_disp:
            raise ValueError("joint-finetune needs the disparity network")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("bad learning rate schedule")
        if self.decay_at is not None and not 0 < self.decay_at < self.epochs:
            raise ValueError("decay epoch must fall inside the run")
        if self.disp_weight < 0:
            raise ValueError("disparity weight must be non-negative")
        if self.disp_source not in DISP_SOURCES:
            raise ValueError(f"unknown disparity source {self.disp_source!r}")
        live_needed = self.unfreeze_disp or self.stage == "joint-finetune"
        if live_needed and self.disp_source != "dispnetb":
            raise ValueError(
                "training the disparity network requires disp_source dispnetb"
            )

    @property
    def pipeline_task(self) -> str:
        return "volume" if self.task == "disparity" else self.task

    @property
    def decay_epoch(self) -> int:
        if self.decay_at is not None:
            return self.decay_at
        return max(1, int(round(0.6 * self.epochs)))

    def lr_at(self, epoch: int) -> float:
        return self.lr * (self.lr_decay if epoch >= self.decay_epoch else 1.0)


def load_training_set(manifest_path: str, scale: ScaleConfig,
                      task: str) -> list[StereoSample]:
    """Load every sample and fail fast on any shape disagreement."""
    dirs = read_manifest(manifest_path)
    if not dirs:
        raise ValueError(f"manifest {manifest_path} lists no samples")
    samples = []
    for d in dirs:
        s = load_sample(d)
        if s.left_rgb.shape[:2] != scale.input_size:
            raise ValueError(
                f"sample {d} is {s.left_rgb.shape[:2]}, "
                f"scale expects {scale.input_size}"
            )
        if task == "volume" and s.voxels.resolution != scale.volume_res:
            raise ValueError(
                f"sample {d} voxel grid is {s.voxels.resolution}^3, "
                f"scale expects {scale.volume_res}^3"
            )
        samples.append(s)
    return samples


def _batch_images(samples: list[StereoSample], idx: np.ndarray):
    left = np.stack([samples[i].left_rgb for i in idx]).transpose(0, 3, 1, 2)
    right = np.stack([samples[i].right_rgb for i in idx]).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(left), np.ascontiguousarray(right)


def _batch_disp(samples: list[StereoSample], idx: np.ndarray):
    dl = np.stack([samples[i].disp_l for i in idx]).astype(np.float32)
    dr = np.stack([samples[i].disp_r for i in idx]).astype(np.float32)
    return dl, dr


def _sgbm_maps(samples: list[StereoSample],
               scale: ScaleConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Precompute block-matcher disparities once, background filled in."""
    params = SgmParams(d_max=scale.max_disparity)
    maps = []
    for s in samples:
        dl, vl, dr, vr = sgbm_disparity(s.left_rgb, s.right_rgb, params)
        maps.append((fill_background(dl, vl).astype(np.float32),
                     fill_background(dr, vr).astype(np.float32)))
    return maps


def _rec_target_loss(pipe: StereoPipeline, pred: Tensor,
                     samples: list[StereoSample], idx: np.ndarray) -> Tensor:
    if pipe.task == "volume":
        target = np.stack(
            [samples[i].voxels.occupancy.astype(np.float32) for i in idx])
        return volume_loss(pred, target)
    gt = [np.asarray(samples[i].points.points, np.float32) for i in idx]
    losses = [chamfer_distance(ops.select_batch(pred, j), gt[j])
              for j in range(len(idx))]
    total = losses[0]
    for extra in losses[1:]:
        total = ops.add(total, extra)
    return ops.scale(total, 1.0 / len(idx))


@dataclass
class _RunState:
    pipe: StereoPipeline
    adam: Adam
    start_epoch: int
    global_step: int


def _trainable(pipe: StereoPipeline, plan: TrainPlan):
    named = pipe.store.named_parameters()
    if plan.stage == "disp-pretrain":
        return [(n, p) for n, p in named if n.startswith("dispnet.")]
    if plan.stage == "rec-train" and not plan.unfreeze_disp:
        return [(n, p) for n, p in named if not n.startswith("dispnet.")]
    return named


def _init_run(plan: TrainPlan, scale: ScaleConfig, seed: int,
              resume: str | None) -> _RunState:
    if resume is None:
        pipe = StereoPipeline(scale, plan.pipeline_task, plan.use_disp,
                              plan.use_corr, seed)
        return _RunState(pipe, Adam(_trainable(pipe, plan), plan.lr), 0, 0)
    arrays, header = load_checkpoint(resume)
    pipe = pipeline_from_header(header)
    if pipe.scale != scale:
        raise ValueError("checkpoint scale differs from the requested scale")
    if pipe.task != plan.pipeline_task:
        raise ValueError(
            f"checkpoint task {pipe.task!r} differs from plan "
            f"{plan.pipeline_task!r}"
        )
    if pipe.use_disp != plan.use_disp or pipe.use_corr != plan.use_corr:
        raise ValueError("checkpoint ablation flags differ from the plan")
    own = set(pipe.store.state_arrays())
    pipe.store.load_state({k: v for k, v in arrays.items() if k in own},
                          strict=True)
    adam = Adam(_trainable(pipe, plan), plan.lr)
    start_epoch = int(header.get("epochs_done", "0"))
    if header.get("stage") == plan.stage and "adam.step" in arrays:
        adam.load_state(arrays)
    else:
        start_epoch = 0  # new stage starts its own schedule
    return _RunState(pipe, adam, start_epoch, adam.step_count)


def _save_run(path: str, state: _RunState, plan: TrainPlan, epochs_done: int):
    state.pipe.save(
        path,
        extra_header={"stage": plan.stage, "plan_task": plan.task,
                      "epochs_done": str(epochs_done)},
        extra_arrays=state.adam.state_arrays(),
    )


def train(plan: TrainPlan, manifest_path: str, scale: ScaleConfig, seed: int,
          out_dir: str, resume: str | None = None) -> tuple[str, str]:
    """Run one stage of the schedule; returns (checkpoint, loss curve)."""
    samples = load_training_set(manifest_path, scale, plan.pipeline_task)
    os.makedirs(out_dir, exist_ok=True)
    state = _init_run(plan, scale, seed, resume)
    pipe = state.pipe

    sgbm_maps = None
    if (plan.use_disp and plan.stage != "disp-pretrain"
            and plan.disp_source == "sgbm"):
        sgbm_maps = _sgbm_maps(samples, scale)

    curve_path = os.path.join(out_dir, "loss_curve.tsv")
    mode = "a" if resume is not None and os.path.exists(curve_path) else "w"
    curve = open(curve_path, mode, encoding="utf-8")
    if mode == "w":
        curve.write("step\tstage\tloss\tlr\n")

    final_path = os.path.join(out_dir, "model.ssck")
    try:
        for epoch in range(state.start_epoch, plan.epochs):
            state.adam.lr = plan.lr_at(epoch)
            order = np.random.default_rng(
                np.random.SeedSequence((seed, epoch))).permutation(len(samples))
            for lo in range(0, len(order), plan.batch_size):
                idx = order[lo:lo + plan.batch_size]
                loss = _train_step(pipe, plan, samples, idx, sgbm_maps)
                state.adam.zero_grad()
                loss.backward()
                state.adam.step()
                state.global_step += 1
                curve.write(f"{state.global_step}\t{plan.stage}\t"
                            f"{float(loss.data):.8e}\t{state.adam.lr:.3e}\n")
            curve.flush()
            done = epoch + 1
            if plan.checkpoint_every and done % plan.checkpoint_every == 0:
                _save_run(os.path.join(out_dir, f"checkpoint_ep{done:04d}.ssck"),
                          state, plan, done)
        _save_run(final_path, state, plan, plan.epochs)
    finally:
        curve.close()
    return final_path, curve_path


def _train_step(pipe: StereoPipeline, plan: TrainPlan,
                samples: list[StereoSample], idx: np.ndarray,
                sgbm_maps) -> Tensor:
    left, right = _batch_images(samples, idx)
    gt_dl, gt_dr = _batch_disp(samples, idx)

    if plan.stage == "disp-pretrain":
        out = pipe.forward(left, right, training=True)
        return disparity_loss(out.disp_left, out.disp_right, gt_dl, gt_dr)

    disparity = None
    if plan.use_disp:
        if plan.disp_source == "groundtruth":
            disparity = (gt_dl, gt_dr)
        elif plan.disp_source == "sgbm":
            dl = np.stack([sgbm_maps[i][0] for i in idx])
            dr = np.stack([sgbm_maps[i][1] for i in idx])
            disparity = (dl, dr)
        elif plan.stage == "rec-train" and not plan.unfreeze_disp:
            # run only the frozen disparity net, detached from the graph
            with no_grad():
                dl, dr = pipe.dispnet(Tensor(left), Tensor(right))
            disparity = (dl.data, dr.data)

    out = pipe.forward(left, right, training=True, disparity=disparity)
    loss = _rec_target_loss(pipe, out.prediction, samples, idx)
    if plan.stage == "joint-finetune" and plan.disp_weight > 0:
        disp = disparity_loss(out.disp_left, out.disp_right, gt_dl, gt_dr)
        loss = ops.add(loss, ops.scale(disp, plan.disp_weight))
    return loss


def evaluate(pipe: StereoPipeline, samples: list[StereoSample],
             disparity_maps=None) -> float:
    """Mean IoU (volume task) or chamfer distance (point task)."""
    values = []
    for i, s in enumerate(samples):
        left = np.ascontiguousarray(s.left_rgb.transpose(2, 0, 1))[None]
        right = np.ascontiguousarray(s.right_rgb.transpose(2, 0, 1))[None]
        disparity = None
        if disparity_maps is not None:
            dl, dr = disparity_maps[i]
            disparity = (dl[None], dr[None])
        with no_grad():
            out = pipe.forward(left, right, disparity=disparity)
        pred = out.prediction.data[0]
        if pipe.task == "volume":
            values.append(iou(pred, s.voxels.occupancy))
        else:
            values.append(chamfer_distance_eval(pred, s.points.points))
    return float(np.mean(values))


ABLATION_CONFIGS = (
    ("full", True, True),
    ("no-dispnet", False, True),
    ("no-corrnet", True, False),
    ("neither", False, False),
)


def run_ablation_suite(manifest_path: str, scale: ScaleConfig, seed: int,
                       out_dir: str, epochs: int = 4,
                       batch_size: int = 4) -> list[dict]:
    """Train and score all four network configurations on both tasks.

    Disparity comes from ground truth during reconstruction training so
    each configuration's budget goes to the networks under study; the
    relative ordering, not absolute quality, is the point of the table.
    """
    rows = []
    for label, use_disp, use_corr in ABLATION_CONFIGS:
        row = {"config": label, "use_disp": use_disp, "use_corr": use_corr}
        for task, metric in (("volume", "iou"), ("point", "cd")):
            plan = TrainPlan(task=task, stage="rec-train", epochs=epochs,
                             batch_size=batch_size, use_disp=use_disp,
                             use_corr=use_corr, disp_source="groundtruth")
            run_dir = os.path.join(out_dir, f"{label}-{task}")
            ckpt, _ = train(plan, manifest_path, scale, seed, run_dir)
            pipe, _ = _load_for_eval(ckpt)
            samples = load_training_set(manifest_path, scale, task)
            maps = ([(s.disp_l.astype(np.float32), s.disp_r.astype(np.float32))
                     for s in samples] if use_disp else None)
            row[metric] = evaluate(pipe, samples, maps)
        rows.append(row)
    _write_table(os.path.join(out_dir, "ablation.tsv"), rows,
                 ("config", "use_disp", "use_corr", "iou", "cd"))
    return rows


def run_disparity_swap(manifest_path: str, scale: ScaleConfig, seed: int,
                       out_dir: str,
                       sources=("groundtruth", "sgbm", "dispnetb"),
                       pretrain_epochs: int = 4, rec_epochs: int = 4,
                       batch_size: int = 4) -> list[dict]:
    """Score one frozen reconstruction model under different disparity inputs.

    The disparity network is pretrained first, then the reconstruction
    networks are trained on ground-truth disparity, and finally the same
    frozen model is evaluated with each requested source feeding it.
    """
    for src in sources:
        if src not in DISP_SOURCES:
            raise ValueError(f"unknown disparity source {src!r}")

    pre = TrainPlan(task="volume", stage="disp-pretrain",
                    epochs=pretrain_epochs, batch_size=batch_size)
    pre_ckpt, _ = train(pre, manifest_path, scale, seed,
                        os.path.join(out_dir, "pretrain"))
    rec = TrainPlan(task="volume", stage="rec-train", epochs=rec_epochs,
                    batch_size=batch_size, disp_source="groundtruth")
    rec_ckpt, _ = train(rec, manifest_path, scale, seed,
                        os.path.join(out_dir, "rec"), resume=pre_ckpt)

    pipe, _ = _load_for_eval(rec_ckpt)
    samples = load_training_set(manifest_path, scale, "volume")
    rows = []
    for src in sources:
        if src == "groundtruth":
            maps = [(s.disp_l.astype(np.float32), s.disp_r.astype(np.float32))
                    for s in samples]
        elif src == "sgbm":
            maps = _sgbm_maps(samples, scale)
        else:
            maps = None  # let the trained disparity network run
        rows.append({"source": src, "iou": evaluate(pipe, samples, maps)})
    _write_table(os.path.join(out_dir, "disparity_swap.tsv"), rows,
                 ("source", "iou"))
    return rows


def _load_for_eval(path: str):
    from .nets import load_pipeline

    return load_pipeline(path)


def _write_table(path: str, rows: list[dict], columns) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("\t".join(columns) + "\n")
        for row in rows:
            f.write("\t".join(_fmt(row.get(c)) for c in columns) + "\n")
    os.replace(tmp, path)


def _fmt(value) -> str:
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)
