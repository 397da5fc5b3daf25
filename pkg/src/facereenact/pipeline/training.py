"""Alternating discriminator/generator training on synthetic face pairs."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..adversarial import (MultiScaleDiscriminator, PerceptualNet, content_loss, disc_forward_I,
                           disc_forward_L, gan_loss, local_loss, total_loss)
from ..engine import Tensor, adam_step, backward, frozen, no_grad, set_power_iters, stack_batch
from ..generator import Generator, GeneratorOutput, adapt_driving
from ..geometry import N_LANDMARKS, crop_with_frame
from ..synthdata import FaceDataset, SyntheticSample
from .checkpoint import decode, encode
from .config import TrainConfig

log = logging.getLogger(__name__)


class NumericalAbort(RuntimeError):
    """A loss term became NaN or infinite."""

    def __init__(self, term: str, step: int):
        super().__init__(f"non-finite {term} loss at step {step}")
        self.term = term
        self.step = step


@dataclass
class LossReport:
    step: int
    gan: float
    content: float
    local: float
    total: float
    discriminator: float

    def as_dict(self) -> dict:
        return dict(step=self.step, gan=self.gan, content=self.content, local=self.local,
                    total=self.total, discriminator=self.discriminator)


@dataclass
class Batch:
    source_image: np.ndarray  # (n, 3, h, w)
    driving_image: np.ndarray
    source_landmarks: list
    driving_landmarks: list
    same_identity: bool = True

    @classmethod
    def from_pairs(cls, pairs: Sequence, same_identity: bool = True) -> "Batch":
        src: Sequence[SyntheticSample] = [p[0] for p in pairs]
        drv: Sequence[SyntheticSample] = [p[1] for p in pairs]
        return cls(np.stack([s.image for s in src]), np.stack([d.image for d in drv]),
                   [s.landmarks for s in src], [d.landmarks for d in drv], same_identity)


def prepare_driving(driving_landmarks, source_landmarks, mode: str, same_identity: bool) -> list:
    """Apply driving-shape adaptation according to ``mode`` (cross/always/never)."""
    if mode == "always" or (mode == "cross" and not same_identity):
        return adapt_driving(driving_landmarks, source_landmarks)
    return [np.asarray(d, dtype=np.float64) for d in driving_landmarks]


def build_models(config: TrainConfig):
    gen = Generator(config.generator_config(), seed=config.seed)
    rng_l = np.random.default_rng([config.seed, 0xD1])
    rng_i = np.random.default_rng([config.seed, 0xD2])
    widths = config.disc_widths()
    disc_l = MultiScaleDiscriminator(3 + N_LANDMARKS, rng_l, config.disc_scales, widths)
    disc_i = MultiScaleDiscriminator(6, rng_i, config.disc_scales, widths)
    percep = PerceptualNet(config.perceptual_seed, weights_path=config.perceptual_weights or None)
    set_power_iters(gen, config.power_iters)
    return gen, disc_l, disc_i, percep


def _check(value: Tensor, term: str, step: int) -> float:
    v = float(value.data)
    if not math.isfinite(v):
        raise NumericalAbort(term, step)
    return v


class Trainer:
    """Owns the networks, their optimizer state and the step counter."""

    def __init__(self, config: TrainConfig, dataset: Optional[FaceDataset] = None):
        self.config = config
        self.generator, self.disc_l, self.disc_i, self.perceptual = build_models(config)
        if dataset is None:
            if config.overfit_mode:
                dataset = FaceDataset(1, 2, config.data_seed, config.resolution)
            else:
                dataset = FaceDataset(config.n_identities, config.frames_per_identity,
                                      config.data_seed, config.resolution)
        self.dataset = dataset
        self.step = 0
        self.history: list = []

    # ------------------------------------------------------------------ data
    def batch_for_step(self, step: int) -> Batch:
        if self.config.overfit_mode:
            return Batch.from_pairs([(self.dataset.frame(0, 0), self.dataset.frame(0, 1))])
        return Batch.from_pairs(self.dataset.pairs(step, self.config.batch_size))

    # --------------------------------------------------------------- forward
    def generate(self, batch: Batch) -> tuple:
        drv_lms = prepare_driving(batch.driving_landmarks, batch.source_landmarks,
                                  self.config.shape_adaptation, batch.same_identity)
        out = self.generator(Tensor(batch.source_image), batch.source_landmarks, drv_lms)
        return out, drv_lms

    def local_targets(self, out: GeneratorOutput, driving_image: np.ndarray) -> list:
        targets = []
        for loc, region in zip(out.locals, self.generator.regions):
            crops = [crop_with_frame(Tensor(driving_image[i:i + 1]), frame, region.crop_size)
                     for i, frame in enumerate(loc.placements)]
            targets.append(stack_batch(crops).data)
        return targets

    def generator_losses(self, out: GeneratorOutput, batch: Batch) -> dict:
        real = Tensor(batch.driving_image)
        src = Tensor(batch.source_image)
        heat = Tensor(out.driving_heatmaps)
        gan = (gan_loss(None, disc_forward_L(self.disc_l, out.image, heat), "generator")
               + gan_loss(None, disc_forward_I(self.disc_i, src, out.image), "generator"))
        content = content_loss(out.image, real, self.perceptual)
        if out.locals is not None:
            targets = self.local_targets(out, batch.driving_image)
            local = local_loss([loc.crop for loc in out.locals], [Tensor(t) for t in targets], self.perceptual)
        else:
            local = Tensor(np.zeros((), dtype=np.float32))
        total = total_loss(gan, content, local, self.config.loss_weights)
        return dict(gan=gan, content=content, local=local, total=total)

    def discriminator_loss(self, out: GeneratorOutput, batch: Batch) -> Tensor:
        real = Tensor(batch.driving_image)
        src = Tensor(batch.source_image)
        fake = out.image.detach()
        heat = Tensor(out.driving_heatmaps)
        loss_l = gan_loss(disc_forward_L(self.disc_l, real, heat), disc_forward_L(self.disc_l, fake, heat),
                          "discriminator")
        loss_i = gan_loss(disc_forward_I(self.disc_i, src, real), disc_forward_I(self.disc_i, src, fake),
                          "discriminator")
        return loss_l + loss_i

    # ------------------------------------------------------------------ step
    def train_step(self, batch: Optional[Batch] = None) -> LossReport:
        """One discriminator update followed by one generator update."""
        if batch is None:
            batch = self.batch_for_step(self.step)
        lr_g, lr_d = self.config.effective_lr
        b1, b2, eps = self.config.beta1, self.config.beta2, self.config.adam_eps
        self.generator.train()
        out, _ = self.generate(batch)

        d_loss = self.discriminator_loss(out, batch)
        d_value = _check(d_loss, "discriminator", self.step)
        backward(d_loss)
        adam_step(self.disc_l.parameters() + self.disc_i.parameters(), lr_d, b1, b2, eps)

        with frozen(self.disc_l, self.disc_i):
            terms = self.generator_losses(out, batch)
            values = {k: _check(v, k, self.step) for k, v in terms.items()}
            backward(terms["total"])
        adam_step(self.generator.trainable_parameters(), lr_g, b1, b2, eps)

        self.step += 1
        report = LossReport(self.step, values["gan"], values["content"], values["local"],
                            values["total"], d_value)
        self.history.append(report)
        return report

    def fit(self, steps: int, callback: Optional[Callable] = None) -> list:
        reports = []
        t0 = time.time()
        for _ in range(steps):
            report = self.train_step()
            reports.append(report)
            if self.config.log_every and report.step % self.config.log_every == 0:
                log.info("step %d  total %.4f  gan %.4f  content %.4f  local %.4f  D %.4f  (%.2fs/step)",
                         report.step, report.total, report.gan, report.content, report.local,
                         report.discriminator, (time.time() - t0) / len(reports))
            if callback is not None:
                callback(self, report)
        return reports

    # ------------------------------------------------------------- inference
    def reenact(self, source_image: np.ndarray, source_landmarks, driving_landmarks,
                same_identity: bool = False) -> np.ndarray:
        """Forward pass only; returns ``(n, 3, h, w)`` images in [-1, 1]."""
        self.generator.eval()
        drv = prepare_driving(driving_landmarks, source_landmarks, self.config.shape_adaptation, same_identity)
        with no_grad():
            out = self.generator(Tensor(np.asarray(source_image, dtype=np.float32)), list(source_landmarks), drv)
        self.generator.train()
        return out.image.data

    # ------------------------------------------------------------ checkpoint
    def _nets(self) -> dict:
        return {"G": self.generator, "DL": self.disc_l, "DI": self.disc_i}

    def state_tensors(self) -> dict:
        table = {"trainer/step": np.array([self.step], dtype=np.uint32)}
        for prefix, net in self._nets().items():
            for name, p in net.named_parameters():
                key = f"{prefix}/{name}"
                table[key] = p.data
                table[key + "#m"] = p.adam_m
                table[key + "#v"] = p.adam_v
                table[key + "#t"] = np.array([p.step_count], dtype=np.uint32)
                if p.spectral_u is not None:
                    table[key + "#u"] = p.spectral_u
        return table

    def load_state_tensors(self, table: dict) -> None:
        self.step = int(table["trainer/step"][0])
        for prefix, net in self._nets().items():
            for name, p in net.named_parameters():
                key = f"{prefix}/{name}"
                if key not in table:
                    raise KeyError(f"checkpoint is missing {key}")
                if table[key].shape != p.shape:
                    raise ValueError(f"{key}: checkpoint shape {table[key].shape} != model {p.shape}")
                p.data = table[key].astype(np.float32)
                p.adam_m = table[key + "#m"].astype(np.float32)
                p.adam_v = table[key + "#v"].astype(np.float32)
                p.step_count = int(table[key + "#t"][0])
                if key + "#u" in table:
                    p.spectral_u = table[key + "#u"].astype(np.float32)
                p.grad = None

    def to_bytes(self) -> bytes:
        return encode(self.state_tensors(), self.config.to_text())

    def save(self, path) -> None:
        """Write atomically so an interrupted save never leaves a torn checkpoint."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def from_bytes(cls, blob: bytes, dataset: Optional[FaceDataset] = None) -> "Trainer":
        config_text, table = decode(blob)
        trainer = cls(TrainConfig.from_text(config_text, "<checkpoint>"), dataset)
        trainer.load_state_tensors(table)
        return trainer

    @classmethod
    def load(cls, path, dataset: Optional[FaceDataset] = None) -> "Trainer":
        return cls.from_bytes(Path(path).read_bytes(), dataset)
