"""End-to-end stereo reconstruction pipeline.

Composition: the disparity network predicts both maps, each view's RGB is
stacked with its own normalized disparity and encoded by the shared
encoder, the two 1/8-scale taps form a cost volume digested by the
correlation network, and the concatenated vectors feed the task decoder.

Ablations drop the disparity input (plain RGB encoding) or the correlation
vector. An external disparity pair can be injected in place of the
disparity network's output, which is how ground-truth and classical
matcher sources are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    ParameterStore,
    Tensor,
    load_checkpoint,
    ops,
    save_checkpoint,
)
from .config import ScaleConfig
from .corrnet import CorrNet, build_cost_volume
from .decoders import PointDecoder, VolumeDecoder
from .dispnet import DispNetB
from .encoder import RecEncoder

TASKS = ("volume", "point")


@dataclass
class PipelineOutput:
    prediction: Tensor
    disp_left: Tensor | None
    disp_right: Tensor | None


class StereoPipeline:
    def __init__(self, scale: ScaleConfig, task: str = "volume",
                 use_disp: bool = True, use_corr: bool = True,
                 seed: int = 0, dtype=np.float32):
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {task!r}")
        self.scale = scale
        self.task = task
        self.use_disp = use_disp
        self.use_corr = use_corr
        self.seed = int(seed)
        self.store = ParameterStore(dtype)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(self.seed,)))

        self.dispnet = DispNetB(self.store, scale, rng) if use_disp else None
        in_ch = 4 if use_disp else 3
        self.encoder = RecEncoder(self.store, scale, rng, in_channels=in_ch)
        self.corrnet = CorrNet(self.store, scale, rng) if use_corr else None
        dec_in = 2 * scale.feature_len + (scale.corr_len if use_corr else 0)
        if task == "volume":
            self.decoder = VolumeDecoder(self.store, scale, dec_in, rng)
        else:
            self.decoder = PointDecoder(self.store, scale, dec_in, rng)

    # -- forward ------------------------------------------------------------

    def _as_input(self, img: np.ndarray | Tensor) -> Tensor:
        if isinstance(img, Tensor):
            x = img
        else:
            x = Tensor(np.asarray(img, self.store.dtype))
        if x.data.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected [N,3,H,W] images, got {x.shape}")
        if x.shape[2:] != tuple(self.scale.input_size):
            raise ValueError(
                f"input size {x.shape[2:]} does not match the configured "
                f"{tuple(self.scale.input_size)}"
            )
        return x

    def _disp_tensor(self, d, n: int) -> Tensor:
        t = d if isinstance(d, Tensor) else Tensor(np.asarray(d, self.store.dtype))
        h, w = self.scale.input_size
        if t.shape != (n, h, w):
            raise ValueError(f"disparity must be [N,H,W] = {(n, h, w)}: {t.shape}")
        return t

    def forward(self, left, right, training: bool = False,
                disparity=None) -> PipelineOutput:
        left = self._as_input(left)
        right = self._as_input(right)
        n, _, h, w = left.shape

        disp_l = disp_r = None
        if self.use_disp:
            if disparity is None:
                disp_l, disp_r = self.dispnet(left, right)
            else:
                disp_l = self._disp_tensor(disparity[0], n)
                disp_r = self._disp_tensor(disparity[1], n)
            inv = 1.0 / float(self.scale.max_disparity)
            enc_l = ops.concat(
                [left, ops.reshape(ops.scale(disp_l, inv), (n, 1, h, w))], axis=1)
            enc_r = ops.concat(
                [right, ops.reshape(ops.scale(disp_r, inv), (n, 1, h, w))], axis=1)
        elif disparity is not None:
            raise ValueError("disparity injection requires the disparity path")
        else:
            enc_l, enc_r = left, right

        vec_l, tap_l = self.encoder(enc_l, training)
        vec_r, tap_r = self.encoder(enc_r, training)
        parts = [vec_l, vec_r]
        if self.use_corr:
            cv = build_cost_volume(tap_l, tap_r, self.scale.feature_max_shift,
                                   self.scale.shift_interval)
            parts.append(self.corrnet(cv, training))
        z = ops.concat(parts, axis=1)
        pred = self.decoder(z, training)
        return PipelineOutput(pred, disp_l, disp_r)

    # -- persistence --------------------------------------------------------

    def arch_header(self) -> dict[str, str]:
        h, w = self.scale.input_size
        return {
            "format": "stereo3d-pipeline",
            "task": self.task,
            "use_disp": str(int(self.use_disp)),
            "use_corr": str(int(self.use_corr)),
            "init_seed": str(self.seed),
            "input_h": str(h),
            "input_w": str(w),
            "base_channels": str(self.scale.base_channels),
            "feature_len": str(self.scale.feature_len),
            "corr_len": str(self.scale.corr_len),
            "volume_res": str(self.scale.volume_res),
            "n_points": str(self.scale.n_points),
            "max_disparity": str(self.scale.max_disparity),
            "shift_interval": str(self.scale.shift_interval),
        }

    def save(self, path: str, extra_header: dict[str, str] | None = None,
             extra_arrays: dict[str, np.ndarray] | None = None):
        header = self.arch_header()
        if extra_header:
            overlap = set(header) & set(extra_header)
            if overlap:
                raise ValueError(f"extra header collides with arch keys: {overlap}")
            header.update(extra_header)
        arrays = self.store.state_arrays()
        if extra_arrays:
            arrays = dict(arrays)
            for k, v in extra_arrays.items():
                if k in arrays:
                    raise ValueError(f"extra array collides with state: {k!r}")
                arrays[k] = v
        save_checkpoint(path, arrays, header)


def pipeline_from_header(header: dict[str, str]) -> StereoPipeline:
    if header.get("format") != "stereo3d-pipeline":
        raise ValueError("checkpoint does not describe a stereo pipeline")
    scale = ScaleConfig(
        input_size=(int(header["input_h"]), int(header["input_w"])),
        base_channels=int(header["base_channels"]),
        feature_len=int(header["feature_len"]),
        corr_len=int(header["corr_len"]),
        volume_res=int(header["volume_res"]),
        n_points=int(header["n_points"]),
        max_disparity=int(header["max_disparity"]),
        shift_interval=int(header["shift_interval"]),
    )
    return StereoPipeline(
        scale,
        task=header["task"],
        use_disp=bool(int(header["use_disp"])),
        use_corr=bool(int(header["use_corr"])),
        seed=int(header.get("init_seed", "0")),
    )


def load_pipeline(path: str) -> tuple[StereoPipeline, dict[str, str]]:
    """Rebuild the architecture from the header and restore its weights."""
    arrays, header = load_checkpoint(path)
    pipe = pipeline_from_header(header)
    own = set(pipe.store.state_arrays())
    state = {k: v for k, v in arrays.items() if k in own}
    pipe.store.load_state(state, strict=True)
    return pipe, header
