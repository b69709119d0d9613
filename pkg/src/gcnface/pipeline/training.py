"""Alternating critic/generator training with the scheduled loss mix.

One cycle = ``critic_steps`` critic updates followed by one generator
update; the logged ``step`` counts cycles.  Fake images for the critic are
rendered once per cycle without gradients and reused across its updates,
since the generator does not move in between.

Randomness is stateless: every draw seeds a fresh generator from
``[seed, stream, step]`` (plus the update index where needed), so resuming
from a checkpoint at step k replays exactly the run that never stopped.
Streams: 40 dataset synthesis, 50 generator batch, 51 critic real batch,
52 interpolation epsilon.

The log is JSON lines, one record per cycle, carrying every loss term
(null when its weight is zero and it was skipped) and the four sigma
values.  A non-finite loss aborts the run after dumping all parameters
and the offending record next to the log.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..diffcore import Tape, backward, no_grad, ops
from ..errors import ContractViolation, TrainingDiverged
from ..losses import (
    LossTerms,
    adversarial_loss,
    identity_loss,
    pixel_loss,
    sigmas_at,
    total_loss,
    vertex_loss,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import SynthDataset
from .optim import Adam
from .system import (
    System,
    build_system,
    masked_image,
    refine_sample,
    render_albedo,
    vertex_shading,
)

LOG_NAME = "train_log.jsonl"
FINAL_CHECKPOINT = "checkpoint_final.bin"


def _mean(values):
    acc = values[0]
    for v in values[1:]:
        acc = ops.add(acc, v)
    return ops.mul(acc, ops.constant(1.0 / len(values)))


class Trainer:
    def __init__(self, config: RunConfig, dataset: SynthDataset,
                 system: System | None = None):
        config.validate()
        if len(dataset) < 1:
            raise ContractViolation("training needs a nonempty dataset")
        self.config = config
        self.dataset = dataset
        self.system = system if system is not None else build_system(config)
        self.weights = config.weights()
        self.gen_params = self.system.generator_parameters()
        self.critic_params = self.system.critic_parameters()
        self.opt_gen = Adam(self.gen_params, lr=config.learning_rate,
                            beta1=config.adam_beta1, beta2=config.adam_beta2)
        self.opt_critic = Adam(self.critic_params, lr=config.learning_rate,
                               beta1=config.adam_beta1, beta2=config.adam_beta2)
        self.step = 0
        self.out_dir = config.out_dir
        # the critic never reaches the generator when its weight is zero,
        # so its updates would be dead work
        self.critic_enabled = config.sigma3 > 0.0

    # -- checkpoint plumbing ------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(
            path, self.step,
            {k: t.data for k, t in self.gen_params.items()},
            {k: t.data for k, t in self.critic_params.items()},
            self.opt_gen.state_arrays(),
            self.opt_critic.state_arrays(),
        )

    def load(self, path) -> None:
        ckpt = load_checkpoint(path)
        self.system.load_parameters(ckpt.generator, ckpt.critic)
        self.opt_gen.load_state(ckpt.opt_generator)
        self.opt_critic.load_state(ckpt.opt_critic)
        self.step = ckpt.step

    # -- batch plumbing -----------------------------------------------------

    def _indices(self, stream: int, *tail: int) -> np.ndarray:
        rng = np.random.default_rng([self.config.seed, stream, *tail])
        count, batch = len(self.dataset), self.config.batch_size
        return rng.choice(count, size=batch, replace=count < batch)

    def _fake_cache(self, indices) -> list[tuple[np.ndarray, np.ndarray]]:
        """Current-generator renders of the batch, (image, coverage) pairs."""
        out = []
        with no_grad():
            for i in indices:
                fwd = refine_sample(self.system, self.dataset[int(i)])
                result = render_albedo(self.system, fwd, fwd.fine_albedo)
                image = np.clip(result.image.data, 0.0, 1.0)
                out.append((image, result.m_proj))
        return out

    # -- one cycle ----------------------------------------------------------

    def _critic_updates(self, step: int, fakes) -> list[float]:
        losses = []
        fake_tensors = [ops.constant(img) for img, _ in fakes]
        for k in range(self.config.critic_steps):
            real_idx = self._indices(51, step, k)
            reals = [ops.constant(self.dataset[int(i)].image) for i in real_idx]
            eps_rng = np.random.default_rng([self.config.seed, 52, step, k])
            with Tape() as tape:
                critic_loss, _ = adversarial_loss(
                    self.system.critic, reals, fake_tensors,
                    self.config.lambda_gp, eps_rng,
                )
            grads = backward(tape, critic_loss)
            self.opt_critic.step(
                {name: grads.wrt(t).data
                 for name, t in self.critic_params.items()}
            )
            losses.append(float(critic_loss.data))
        return losses

    def _generator_update(self, step: int, indices, fakes) -> dict:
        s1, s2, s3, s4 = sigmas_at(self.weights, step)
        record: dict[str, object] = {}
        pixel_terms, identity_terms, adv_terms = [], [], []
        coarse_terms, detail_terms = [], []
        with Tape() as tape:
            for i in indices:
                sample = self.dataset[int(i)]
                fwd = refine_sample(self.system, sample)
                if s4 > 0.0:
                    coarse_terms.append(
                        vertex_loss(fwd.coarse_albedo, fwd.fine_albedo))
                    detail_terms.append(vertex_loss(
                        ops.constant(fwd.projected),
                        vertex_shading(self.system, fwd),
                    ))
                if s1 > 0.0:
                    result = render_albedo(self.system, fwd, fwd.fine_albedo)
                    rendered = masked_image(result.image)
                    pixel_terms.append(pixel_loss(
                        ops.constant(sample.image), rendered,
                        sample.face_mask, result.m_proj,
                    ))
                    if s2 > 0.0:
                        identity_terms.append(identity_loss(
                            ops.constant(sample.image), rendered,
                            self.system.embedder,
                        ))
                    if s3 > 0.0:
                        adv_terms.append(
                            ops.neg(self.system.critic(rendered)))
            terms = LossTerms(
                pixel=_mean(pixel_terms) if pixel_terms else None,
                identity=_mean(identity_terms) if identity_terms else None,
                adversarial=_mean(adv_terms) if adv_terms else None,
                vertex_coarse=_mean(coarse_terms) if coarse_terms else None,
                vertex_detail=_mean(detail_terms) if detail_terms else None,
            )
            total = total_loss(terms, self.weights, step)
        grads = backward(tape, total)
        self.opt_gen.step(
            {name: grads.wrt(t).data for name, t in self.gen_params.items()}
        )

        def scalar(t):
            return None if t is None else float(t.data)

        record["pixel"] = scalar(terms.pixel)
        record["identity"] = scalar(terms.identity)
        record["adversarial"] = scalar(terms.adversarial)
        record["vertex_coarse"] = scalar(terms.vertex_coarse)
        record["vertex_detail"] = scalar(terms.vertex_detail)
        record["total"] = float(total.data)
        # keep the pixel term observable while its weight is still zero:
        # the warm-up exit level is the descent baseline downstream
        if record["pixel"] is None:
            with no_grad():
                vals = [
                    float(pixel_loss(
                        ops.constant(self.dataset[int(i)].image),
                        ops.constant(img),
                        self.dataset[int(i)].face_mask, proj,
                    ).data)
                    for i, (img, proj) in zip(indices, fakes)
                ]
            record["pixel"] = sum(vals) / len(vals)
        return record

    def train_cycle(self) -> dict:
        step = self.step
        s1, s2, s3, s4 = sigmas_at(self.weights, step)
        indices = self._indices(50, step)
        # the cache feeds the critic and the warm-up pixel monitor; with
        # neither consumer it is dead work
        need_fakes = self.critic_enabled or s1 == 0.0
        fakes = self._fake_cache(indices) if need_fakes else []
        critic_losses = (
            self._critic_updates(step, fakes) if self.critic_enabled else []
        )
        record = {
            "step": step,
            "sigma1": s1, "sigma2": s2, "sigma3": s3, "sigma4": s4,
        }
        record.update(self._generator_update(step, indices, fakes))
        record["critic"] = critic_losses
        self.step = step + 1
        self._check_finite(record)
        return record

    def _check_finite(self, record: dict) -> None:
        flat = [v for v in record.values() if isinstance(v, float)]
        flat.extend(v for v in record.get("critic", []))
        if all(np.isfinite(flat)):
            return
        os.makedirs(self.out_dir, exist_ok=True)
        dump_path = os.path.join(self.out_dir, f"diverged_step{record['step']}.npz")
        arrays = {f"gen.{k}": t.data for k, t in self.gen_params.items()}
        arrays.update({f"critic.{k}": t.data for k, t in self.critic_params.items()})
        arrays["record"] = np.array(
            [v if isinstance(v, float) else np.nan for v in record.values()]
        )
        np.savez(dump_path, **arrays)
        raise TrainingDiverged(
            f"non-finite loss at step {record['step']}; state dumped",
            dump_path=dump_path,
        )

    # -- full run -----------------------------------------------------------

    def run(self) -> dict:
        os.makedirs(self.out_dir, exist_ok=True)
        log_path = os.path.join(self.out_dir, LOG_NAME)
        mode = "a" if self.step > 0 else "w"
        every = self.config.checkpoint_every
        with open(log_path, mode, encoding="utf-8") as log:
            while self.step < self.config.train_steps:
                record = self.train_cycle()
                log.write(json.dumps(record) + "\n")
                log.flush()
                if every and self.step % every == 0 and self.step < self.config.train_steps:
                    self.save(os.path.join(
                        self.out_dir, f"checkpoint_{self.step:05d}.bin"))
        final = os.path.join(self.out_dir, FINAL_CHECKPOINT)
        self.save(final)
        return {"checkpoint": final, "log": log_path, "steps": self.step}


def train(config: RunConfig, dataset: SynthDataset,
          resume=None, system: System | None = None) -> dict:
    trainer = Trainer(config, dataset, system=system)
    if resume is not None:
        trainer.load(resume)
    return trainer.run()
