"""The full predictor: seed encoding, corrected rollout, BPTT training.

Per step the recurrence is: rotate the carried field R onto the last
spectrum, invert to get the naive frame, let the transform variant update R
from it, rotate and invert again, gate through the refine stack, emit, and
re-transform the emitted frame for the next step. Gradients flow through
the whole unrolled chain into every parameter.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .freqcore import PhaseField, _encode
from .gridfft import ComplexGrid, RealGrid, _neg_index, fft2_fast
from .nn import Adam, Conv2d, Dense, save_params, softmax4
from .rng import SplitMix64, sub_seed

__all__ = [
    "FdtnConfig",
    "RolloutState",
    "FdtnModel",
    "rollout",
    "mse_loss",
    "train_bptt",
    "evaluate",
    "copy_last_baseline",
]

VARIANTS = ("none", "fc", "conv", "morse_denoise")


@dataclass
class FdtnConfig:
    transform_variant: str = "none"
    refine_enabled: bool = True
    seed_count: int = 2
    horizon: int = 8
    frame_width: int = 40
    frame_height: int = 40
    eps: float = 1e-8
    fc_hidden: int = 19
    conv_channels: int = 4
    conv_kernel: int = 3
    refine_channels: int = 4
    refine_kernel: int = 3
    morse_hidden: int = 64

    def __post_init__(self):
        if self.transform_variant not in VARIANTS:
            raise ValueError(f"unknown transform_variant {self.transform_variant!r}")
        if self.seed_count < 2:
            raise ValueError("seed_count must be at least 2")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.frame_width < 1 or self.frame_height < 1:
            raise ValueError("frame dimensions must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.transform_variant == "morse_denoise" and self.frame_height != 1:
            raise ValueError("morse_denoise is a 1-D variant; frame_height must be 1")


@dataclass
class RolloutState:
    """Recurrence state after a step: latest spectrum, carried field, index."""

    current_spectrum: ComplexGrid
    current_transform: PhaseField
    step: int


class FdtnModel:
    """Holds the learned layers for one configuration."""

    def __init__(self, config: FdtnConfig, init_seed: int = 0):
        self.config = config
        rng = SplitMix64(sub_seed(init_seed, 0))
        w, h = config.frame_width, config.frame_height
        n = w * h
        self._layers = []
        v = config.transform_variant
        if v == "fc":
            self.t_fc1 = Dense("transform.fc1", n, config.fc_hidden, rng)
            self.t_fc2 = Dense("transform.fc2", config.fc_hidden, 4 * n, rng)
            # favor the unflipped field at init (softmax weight ~0.95), so a
            # fresh model starts from plain phase advancement instead of a
            # motion-cancelling average of mirrored velocities
            self.t_fc2.bias.value[:n] = 4.0
            self._layers += [self.t_fc1, self.t_fc2]
        elif v == "conv":
            c = config.conv_channels
            k = config.conv_kernel
            self.t_conv1 = Conv2d(
                "transform.conv1", 1, c, k, rng, location_dependent=True, width=w, height=h
            )
            self.t_conv2 = Conv2d(
                "transform.conv2", c, c, k, rng, location_dependent=True, width=w, height=h
            )
            self.t_conv3 = Conv2d(
                "transform.conv3", c, 4, k, rng, location_dependent=True, width=w, height=h
            )
            self.t_conv3.bias.value[0] = 4.0  # same near-identity start as fc
            self._layers += [self.t_conv1, self.t_conv2, self.t_conv3]
        elif v == "morse_denoise":
            self.m_fc1 = Dense("transform.fc1", 2 * n, config.morse_hidden, rng)
            self.m_fc2 = Dense("transform.fc2", config.morse_hidden, 2 * n, rng)
            self._layers += [self.m_fc1, self.m_fc2]
        if config.refine_enabled:
            rc = config.refine_channels
            rk = config.refine_kernel
            self.r_conv1 = Conv2d("refine.conv1", 1, rc, rk, rng)
            self.r_conv2 = Conv2d("refine.conv2", rc, rc, rk, rng)
            # gate starts near identity: an all-zero gate would erase the
            # frame and feed garbage spectra back into the recurrence
            self.r_conv3 = Conv2d("refine.conv3", rc, 1, rk, rng, bias_init=1.0)
            self._layers += [self.r_conv1, self.r_conv2, self.r_conv3]
        self._flip_cols = _neg_index(w)
        self._flip_rows = _neg_index(h)

    def params(self):
        out = []
        for layer in self._layers:
            out.extend(layer.params())
        return out

    def param_count(self) -> int:
        return int(sum(p.value.size for p in self.params()))

    def load_state(self, state: dict):
        for p in self.params():
            if p.name not in state:
                raise ValueError(f"checkpoint is missing parameter {p.name!r}")
            arr = state[p.name]
            if arr.shape != p.value.shape:
                raise ValueError(
                    f"parameter {p.name!r}: checkpoint shape {arr.shape}, "
                    f"model expects {p.value.shape}"
                )
            p.value[...] = arr

    def save(self, path):
        save_params(path, self.params())

    # -- seed encoding (constants: no parameters upstream) ------------------

    def encode_seeds(self, seeds: np.ndarray):
        """seeds (B, S, H, W) -> (R0, H_last) complex (B, H, W) arrays."""
        spectra = fft2_fast(seeds.astype(np.float64))
        s = seeds.shape[1]
        acc = np.zeros_like(spectra[:, 0])
        for i in range(s - 1):
            acc += _encode(spectra[:, i], spectra[:, i + 1], self.config.eps)
        acc /= s - 1
        if s > 2:
            mag = np.abs(acc)
            acc = np.where(mag > 1.0, acc / np.maximum(mag, 1e-300), acc)
        return acc, spectra[:, -1]

    # -- per-step pieces -----------------------------------------------------

    def _blend_flips(self, r: Tensor, weights: Tensor) -> Tensor:
        rows, cols = self._flip_rows, self._flip_cols
        keep = np.arange(len(rows))
        variants = (
            r,
            ad.permute_hw(r, keep, cols),
            ad.permute_hw(r, rows, keep),
            ad.permute_hw(r, rows, cols),
        )
        out = ad.rcmul(ad.slice_channel(weights, 0), variants[0])
        for k in (1, 2, 3):
            out = ad.add(out, ad.rcmul(ad.slice_channel(weights, k), variants[k]))
        return out

    def transform_step(self, naive_frame, r: Tensor) -> Tensor:
        v = self.config.transform_variant
        if v == "none":
            return r
        if v == "morse_denoise":
            return self._morse_step(r)
        b = naive_frame.shape[0]
        w, h = self.config.frame_width, self.config.frame_height
        if v == "fc":
            x = ad.reshape(naive_frame, (b, h * w))
            hidden = ad.sigmoid(self.t_fc1(x))
            logits = ad.reshape(self.t_fc2(hidden), (b, 4, h, w))
        else:
            x = ad.reshape(naive_frame, (b, 1, h, w))
            t = ad.relu(self.t_conv1(x))
            t = ad.relu(self.t_conv2(t))
            logits = self.t_conv3(t)
        return self._blend_flips(r, softmax4(logits))

    def _morse_step(self, r: Tensor) -> Tensor:
        b = r.shape[0]
        w = self.config.frame_width
        flat_re = ad.reshape(ad.creal(r), (b, w))
        flat_im = ad.reshape(ad.cimag(r), (b, w))
        x = ad.concat_last(flat_re, flat_im)
        hidden = ad.sigmoid(self.m_fc1(x))
        out = self.m_fc2(hidden)
        re = ad.reshape(ad.slice_last(out, 0, w), (b, 1, w))
        im = ad.reshape(ad.slice_last(out, w, 2 * w), (b, 1, w))
        return ad.ccomplex(re, im)

    def refine(self, frame: Tensor) -> Tensor:
        b = frame.shape[0]
        w, h = self.config.frame_width, self.config.frame_height
        x = ad.reshape(frame, (b, 1, h, w))
        t = ad.relu(self.r_conv1(x))
        t = ad.relu(self.r_conv2(t))
        gate = ad.relu(self.r_conv3(t))
        return ad.reshape(ad.mul(gate, x), (b, h, w))

    # -- rollout ---------------------------------------------------------------

    def rollout_batch(self, seeds: np.ndarray, horizon=None, states=None):
        """seeds (B, S, H, W) -> list of horizon (B, H, W) frame Tensors.

        When states is a list, the post-step (R, spectrum) value pair is
        appended for each step.
        """
        cfg = self.config
        if seeds.ndim != 4 or seeds.shape[1] != cfg.seed_count:
            raise ValueError(
                f"seeds shape {seeds.shape} does not match seed_count {cfg.seed_count}"
            )
        if seeds.shape[2] != cfg.frame_height or seeds.shape[3] != cfg.frame_width:
            raise ValueError(
                f"frame size {seeds.shape[3]}x{seeds.shape[2]} does not match config "
                f"{cfg.frame_width}x{cfg.frame_height}"
            )
        horizon = cfg.horizon if horizon is None else horizon
        r0, h0 = self.encode_seeds(seeds)
        r = Tensor(r0)
        h_last = Tensor(h0)
        modifies_r = cfg.transform_variant != "none"
        needs_naive = cfg.transform_variant in ("fc", "conv")
        frames = []
        for _ in range(horizon):
            if modifies_r:
                naive = None
                if needs_naive:
                    naive = ad.ifft2_real(ad.cmul(r, h_last))
                r = self.transform_step(naive, r)
            frame = ad.ifft2_real(ad.cmul(r, h_last))
            if cfg.refine_enabled:
                frame = self.refine(frame)
            frames.append(frame)
            h_last = ad.fft2_real(frame)
            if states is not None:
                states.append((r.value, h_last.value))
        return frames

    def rollout_states(self, seeds: np.ndarray, horizon=None):
        """Single-sequence rollout yielding (RealGrid, RolloutState) pairs."""
        cfg = self.config
        raw = []
        with ad.no_grad():
            frames = self.rollout_batch(
                np.asarray(seeds, dtype=np.float64)[None], horizon, states=raw
            )
        out = []
        for step, (f, (rv, hv)) in enumerate(zip(frames, raw)):
            out.append(
                (
                    RealGrid(cfg.frame_width, cfg.frame_height, f.value[0].copy()),
                    RolloutState(
                        ComplexGrid.from_complex(hv[0]),
                        PhaseField.from_complex(rv[0]),
                        step,
                    ),
                )
            )
        return out


def rollout(seeds, config: FdtnConfig, model: FdtnModel = None):
    """Predict config.horizon frames from a list of seed RealGrids."""
    if len(seeds) != config.seed_count:
        raise ValueError(f"expected {config.seed_count} seeds, got {len(seeds)}")
    for s in seeds:
        if s.width != config.frame_width or s.height != config.frame_height:
            raise ValueError("seed frame size does not match config")
    if model is None:
        model = FdtnModel(config)
    arr = np.stack([s.values for s in seeds])[None]
    with ad.no_grad():
        frames = model.rollout_batch(arr)
    return [
        RealGrid(config.frame_width, config.frame_height, f.value[0].copy())
        for f in frames
    ]


def mse_loss(pred, target) -> float:
    """Mean over all frames and pixels of the squared difference."""
    pa = _frames_to_array(pred)
    ta = _frames_to_array(target)
    if pa.shape != ta.shape:
        raise ValueError(f"prediction shape {pa.shape} != target shape {ta.shape}")
    return float(np.mean((pa - ta) ** 2))


def _frames_to_array(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        return frames.astype(np.float64)
    return np.stack([np.asarray(f.values, dtype=np.float64) for f in frames])


def _sequences(dataset) -> np.ndarray:
    seqs = getattr(dataset, "sequences", dataset)
    return np.asarray(seqs, dtype=np.float64)


def _loss_graph(frames, targets: np.ndarray) -> Tensor:
    total = None
    for t, frame in enumerate(frames):
        d = ad.sub(frame, Tensor(targets[:, t]))
        term = ad.mean_all(ad.mul(d, d))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / len(frames))


def train_bptt(
    dataset,
    config: FdtnConfig,
    *,
    epochs: int = 20,
    batch_size: int = 32,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_adam: float = 1e-8,
    seed: int = 0,
    lr_final=None,
    augment_mirror: bool = False,
    model: FdtnModel = None,
    test_dataset=None,
    log_path=None,
    progress=None,
):
    """Train through the unrolled rollout; deterministic given seed.

    Returns (model, curve) where curve rows are (train_mse, test_mse) per
    epoch (test is nan without a test set). lr_final, if given, turns the
    learning rate into a cosine ramp from lr down to lr_final over the
    epochs. augment_mirror reflects each sampled sequence across a random
    subset of axes; wall-bounce dynamics are mirror-symmetric and the
    renderer uses half-pixel centers, so flipped sequences stay exactly on
    the data manifold. Passing a model resumes training on its parameters
    instead of initializing fresh ones. The optional log file gets one
    tab-separated line per epoch: index, train MSE, test MSE. Wall-clock
    timing goes only to the progress callback, never into the log, so
    re-running a config reproduces the log byte for byte. progress, if
    given, is called with (epoch, train_mse, test_mse, secs) per epoch.
    """
    seqs = _sequences(dataset)
    cfg = config
    need = cfg.seed_count + cfg.horizon
    if seqs.shape[1] < need:
        raise ValueError(
            f"sequences of length {seqs.shape[1]} are too short for "
            f"{cfg.seed_count} seeds + {cfg.horizon} predictions"
        )
    if model is None:
        model = FdtnModel(cfg, init_seed=sub_seed(seed, 0))
    opt = Adam(model.params(), lr=lr, beta1=beta1, beta2=beta2, eps=eps_adam)
    shuffle_rng = SplitMix64(sub_seed(seed, 1))
    mirror_rng = SplitMix64(sub_seed(seed, 2))
    n = seqs.shape[0]
    curve = []
    log_lines = []
    for epoch in range(epochs):
        t0 = time.perf_counter()
        if lr_final is not None:
            frac = epoch / max(epochs - 1, 1)
            opt.lr = lr_final + 0.5 * (lr - lr_final) * (1.0 + math.cos(math.pi * frac))
        order = np.arange(n)
        shuffle_rng.shuffle(order)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch = seqs[idx]
            if augment_mirror:
                bits = mirror_rng.uniform_array((len(idx), 2)) < 0.5
                batch = batch.copy()
                batch[bits[:, 0]] = batch[bits[:, 0], :, :, ::-1]
                batch[bits[:, 1]] = batch[bits[:, 1], :, ::-1, :]
            seeds = batch[:, : cfg.seed_count]
            targets = batch[:, cfg.seed_count : need]
            opt.zero_grad()
            loss = _loss_graph(model.rollout_batch(seeds), targets)
            ad.backward(loss)
            opt.step()
            total += float(loss.value) * len(idx)
        train_mse = total / n
        test_mse = float("nan")
        if test_dataset is not None:
            test_mse, _ = evaluate(test_dataset, cfg, model)
        curve.append((train_mse, test_mse))
        log_lines.append(f"{epoch}\t{train_mse:.12e}\t{test_mse:.12e}")
        if progress is not None:
            progress(epoch, train_mse, test_mse, time.perf_counter() - t0)
    if log_path is not None:
        with open(log_path, "w") as f:
            f.write("\n".join(log_lines) + "\n")
    return model, curve


def evaluate(dataset, config: FdtnConfig, model: FdtnModel, horizon=None, batch_size=64):
    """Mean MSE over a dataset plus the per-step error profile."""
    seqs = _sequences(dataset)
    cfg = config
    horizon = cfg.horizon if horizon is None else horizon
    need = cfg.seed_count + horizon
    if seqs.shape[1] < need:
        raise ValueError(
            f"sequences of length {seqs.shape[1]} are too short for "
            f"{cfg.seed_count} seeds + {horizon} predictions"
        )
    n = seqs.shape[0]
    per_step = np.zeros(horizon)
    with ad.no_grad():
        for start in range(0, n, batch_size):
            batch = seqs[start : start + batch_size]
            seeds = batch[:, : cfg.seed_count]
            targets = batch[:, cfg.seed_count : need]
            frames = model.rollout_batch(seeds, horizon)
            for t, frame in enumerate(frames):
                err = frame.value - targets[:, t]
                per_step[t] += float(np.sum(err * err))
    pixels = cfg.frame_width * cfg.frame_height
    per_step /= n * pixels
    return float(per_step.mean()), per_step


def copy_last_baseline(dataset, seed_count: int, horizon: int):
    """MSE of repeating the last seed frame for every prediction step."""
    seqs = _sequences(dataset)
    last = seqs[:, seed_count - 1 : seed_count]
    targets = seqs[:, seed_count : seed_count + horizon]
    per_step = np.mean((targets - last) ** 2, axis=(0, 2, 3))
    return float(per_step.mean()), per_step
