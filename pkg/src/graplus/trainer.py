"""Adversarial training loop, checkpointing and inference helpers."""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig, augment
from .composer import compose
from .config import RunConfig, config_from_dict
from .data import PlacementDataset, stack_samples
from .discriminator import Discriminator
from .embeddings import EmbeddingTable
from .losses import adversarial_loss, discriminator_losses, reconstruction_loss
from .model import PlacementGenerator, Vocabulary, collate_graphs
from .sampler import BatchStream

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(f"{message}: {json.dumps(snapshot, default=str)}")
        self.snapshot = snapshot


@dataclass
class StepMetrics:
    step: int
    L_D_real: float
    L_D_fake: float
    L_G_adv: float
    L_G_rec: float
    d_acc_real: float | None
    d_acc_fake: float | None
    mean_t: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps({
            "step": self.step, "L_D_real": self.L_D_real, "L_D_fake": self.L_D_fake,
            "L_G_adv": self.L_G_adv, "L_G_rec": self.L_G_rec, "d_acc_real": self.d_acc_real,
            "d_acc_fake": self.d_acc_fake, "mean_t": list(self.mean_t),
        })


def _seeded_generator(seed: int, stream: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(np.random.SeedSequence([seed, stream]).generate_state(1)[0]))
    return g


class Trainer:
    """Owns generator, discriminator, optimizers and the three named rng streams.

    Streams: batch order (:class:`BatchStream`, a pure function of seed and
    cursor), generator noise (torch), augmentation (numpy).
    """

    def __init__(self, config: RunConfig, dataset: PlacementDataset, table: EmbeddingTable | None = None,
                 vocabularies: tuple[Vocabulary, Vocabulary] | None = None):
        self.config = config
        self.dataset = dataset
        tc, mc = config.train, config.model
        if dataset.size != tc.image_size or dataset.node_budget != mc.node_budget:
            raise ValueError(f"dataset built for {dataset.size}px / {dataset.node_budget} nodes, config wants "
                             f"{tc.image_size}px / {mc.node_budget} nodes")
        torch.manual_seed(tc.seed)
        self.objects, self.relations = vocabularies or dataset.vocabularies()
        self.generator = PlacementGenerator(mc, self.objects, self.relations, table)
        self.discriminator = Discriminator(4, tc.d_base_channels, image_size=tc.image_size)
        betas = (tc.beta1, tc.beta2)
        self.opt_g = torch.optim.Adam([p for p in self.generator.parameters() if p.requires_grad], lr=tc.lr_g, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=tc.lr_d, betas=betas)
        self.stream = BatchStream(dataset.real_ids, dataset.fake_ids, tc.batch_size, tc.seed, tc.balanced_sampling)
        self.noise = _seeded_generator(tc.seed, 1)
        self.aug_rng = np.random.default_rng([tc.seed, 2])
        self.aug_config = AugmentConfig(tc.p_flip, tc.p_jitter, tc.p_blur, tc.p_gray)
        self.step_count = 0

    # pieces -------------------------------------------------------------------
    def _planes(self, ids: list[int], augmented: bool):
        samples = [self.dataset.composite_sample(i) for i in ids]
        if augmented and self.config.train.augment:
            samples = [augment(s, self.aug_rng, self.aug_config) for s in samples]
        return stack_samples(samples)

    def _score(self, planes: dict, t: torch.Tensor | None = None) -> torch.Tensor:
        comp, mask = compose(planes["bg"], planes["fg"], planes["mask"],
                             planes["t"] if t is None else t, planes["fg_dims"], self.config.model.eps)
        return self.discriminator(comp, mask)

    def generate(self, scene_ids: list[int], z: torch.Tensor | None = None):
        batch = self.dataset.graph_batch(scene_ids, self.objects, self.relations)
        fg = torch.tensor([self.objects[self.dataset.scenes[i].fg_category] for i in scene_ids])
        if z is None:
            z = torch.randn(len(scene_ids), self.config.model.d_noise, generator=self.noise)
        return self.generator(batch, fg, z)

    def predict(self, scene_ids: list[int], seed: int = 0, dataset: PlacementDataset | None = None) -> torch.Tensor:
        """Placements for ``scene_ids`` with noise from a private stream; training rngs are untouched."""
        ds = dataset or self.dataset
        return predict_placements(self.generator, [ds.scenes[i].encoded for i in scene_ids],
                                  [ds.scenes[i].fg_category for i in scene_ids], seed)

    def _d_update(self, loss: torch.Tensor):
        self.opt_d.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_d.step()

    # one iteration ------------------------------------------------------------
    def step(self) -> StepMetrics:
        tc = self.config.train
        batch = next(self.stream)
        labels = [self.dataset.samples[i].label for i in batch]
        reals = [i for i, lb in zip(batch, labels) if lb == 1]
        fakes = [i for i, lb in zip(batch, labels) if lb == 0]
        real_sets = [reals] + [
            [i for i in self.stream.peek(k) if self.dataset.samples[i].label == 1] for k in range(tc.real_updates - 1)
        ]
        gen_scenes = [self.dataset.samples[i].scene for i in reals]
        t_gt = torch.tensor([self.dataset.samples[i].t for i in reals], dtype=torch.float32)

        l_real = l_fake = 0.0
        acc_real = acc_fake = None
        if tc.adversarial:
            # (a) critic on real composites, once per real half-batch
            for k, ids in enumerate(real_sets):
                scores = self._score(self._planes(ids, True))
                lr_, _ = discriminator_losses(scores, scores[:0], scores[:0])
                if k == 0:
                    l_real, acc_real = lr_.item(), float((scores > 0.5).float().mean())
                self._d_update(-lr_)

        t_gen, _ = self.generate(gen_scenes)
        if not torch.isfinite(t_gen).all():
            raise NumericalError("non-finite generator output", {"step": self.step_count + 1, "stream": self.stream.state()})
        gen_planes = stack_samples([self.dataset.scene_sample(s) for s in gen_scenes])

        l_adv = 0.0
        if tc.adversarial:
            # (b) critic on dataset fakes plus fresh generated composites
            fake_scores = self._score(self._planes(fakes, True)) if fakes else torch.zeros(0)
            gen_scores = self._score(gen_planes, t_gen.detach())
            _, lf = discriminator_losses(gen_scores[:0], fake_scores, gen_scores)
            l_fake = lf.item()
            acc_fake = float(torch.cat([fake_scores, gen_scores]).lt(0.5).float().mean())
            self._d_update(-lf)

        # (c) generator: adversarial term through the updated critic plus gated reconstruction
        rec = reconstruction_loss(t_gen, t_gt)
        loss = tc.lambda_rec * rec
        if tc.adversarial:
            adv = adversarial_loss(self._score(gen_planes, t_gen))
            loss = loss + adv
            l_adv = adv.item()
        self.opt_g.zero_grad(set_to_none=True)
        self.discriminator.requires_grad_(False)
        loss.backward()
        self.discriminator.requires_grad_(True)
        self.opt_g.step()

        self.step_count += 1
        m = StepMetrics(self.step_count, l_real, l_fake, l_adv, rec.item(), acc_real, acc_fake,
                        tuple(float(v) for v in t_gen.detach().mean(0)))
        values = [m.L_D_real, m.L_D_fake, m.L_G_adv, m.L_G_rec]
        if not all(math.isfinite(v) for v in values):
            raise NumericalError("non-finite loss", {**json.loads(m.to_json()), "stream": self.stream.state()})
        return m

    def train(self, steps: int, metrics_path=None, checkpoint_path=None, checkpoint_every: int = 0,
              progress: bool = False):
        fh = open(metrics_path, "a", encoding="utf-8") if metrics_path else None
        history = []
        try:
            for _ in range(steps):
                m = self.step()
                history.append(m)
                if fh:
                    fh.write(m.to_json() + "\n")
                    fh.flush()
                if progress and m.step % 50 == 0:
                    log.info("step %d rec=%.5f adv=%.3f D(real)=%.3f", m.step, m.L_G_rec, m.L_G_adv, m.L_D_real)
                if checkpoint_path and checkpoint_every and m.step % checkpoint_every == 0:
                    self.save(checkpoint_path)
        finally:
            if fh:
                fh.close()
        if checkpoint_path:
            self.save(checkpoint_path)
        return history

    # checkpointing ------------------------------------------------------------
    def _named_arrays(self) -> dict[str, torch.Tensor]:
        arrays = {}
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator)):
            for name, t in module.state_dict().items():
                arrays[f"{prefix}/{name}"] = t
        for prefix, opt, module in (("adam_g", self.opt_g, self.generator), ("adam_d", self.opt_d, self.discriminator)):
            names = {id(p): n for n, p in module.named_parameters()}
            for p in opt.param_groups[0]["params"]:
                st = opt.state.get(p)
                if st:
                    for key in ("exp_avg", "exp_avg_sq", "step"):
                        arrays[f"{prefix}/{names[id(p)]}/{key}"] = st[key].reshape(p.shape if key != "step" else ())
        return arrays

    def save(self, path) -> None:
        """Single zip: config echo, vocabularies, rng/cursor state and little-endian float32 arrays."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        state = {
            "step": self.step_count,
            "stream": self.stream.state(),
            "noise_rng": self.noise.get_state().tolist(),
            "aug_rng": self.aug_rng.bit_generator.state,
            "vocab": {"objects": self.objects.labels[1:], "relations": self.relations.labels[1:]},
        }
        tmp = path.with_suffix(path.suffix + ".tmp")
        with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
            zf.writestr("config.json", json.dumps(self.config.to_dict(), indent=1, sort_keys=True))
            zf.writestr("state.json", json.dumps(state, sort_keys=True))
            for name, t in self._named_arrays().items():
                buf = io.BytesIO()
                np.save(buf, t.detach().cpu().numpy().astype("<f4"))
                zf.writestr(f"arrays/{name}.npy", buf.getvalue())
        tmp.replace(path)

    def load_state(self, path) -> None:
        arrays, state, _ = read_checkpoint(path)
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator)):
            sd = {k[len(prefix) + 1:]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith(prefix + "/")}
            module.load_state_dict(sd)
        for prefix, opt, module in (("adam_g", self.opt_g, self.generator), ("adam_d", self.opt_d, self.discriminator)):
            for name, p in module.named_parameters():
                key = f"{prefix}/{name}"
                if f"{key}/exp_avg" in arrays:
                    opt.state[p] = {
                        "step": torch.tensor(float(arrays[f"{key}/step"])),
                        "exp_avg": torch.from_numpy(arrays[f"{key}/exp_avg"].copy()),
                        "exp_avg_sq": torch.from_numpy(arrays[f"{key}/exp_avg_sq"].copy()),
                    }
        self.step_count = state["step"]
        self.stream.epoch, self.stream.index = state["stream"]["epoch"], state["stream"]["index"]
        self.noise.set_state(torch.tensor(state["noise_rng"], dtype=torch.uint8))
        self.aug_rng.bit_generator.state = state["aug_rng"]

    @classmethod
    def from_checkpoint(cls, path, dataset: PlacementDataset, table: EmbeddingTable | None = None) -> "Trainer":
        _, state, config = read_checkpoint(path)
        vocab = (Vocabulary(state["vocab"]["objects"]), Vocabulary(state["vocab"]["relations"]))
        trainer = cls(config, dataset, table, vocab)
        trainer.load_state(path)
        return trainer


@torch.no_grad()
def predict_placements(generator: PlacementGenerator, graphs: list, fg_categories: list[str], seed: int = 0,
                       samples: int = 1) -> torch.Tensor:
    """``(len(graphs) * samples) x 3`` placements, input-major: row ``i * samples + s``.

    Draw ``s`` uses the ``s``-th noise matrix of the stream derived from ``seed``,
    so asking for more samples never changes the earlier ones.
    """
    was_training = generator.training
    generator.eval()
    batch = collate_graphs(graphs, generator.objects, generator.relations)
    fg = torch.tensor([generator.objects[c] for c in fg_categories])
    rng = _seeded_generator(seed, 3)
    draws = []
    for _ in range(samples):
        z = torch.randn(len(graphs), generator.config.d_noise, generator=rng)
        draws.append(generator(batch, fg, z)[0])
    generator.train(was_training)
    return torch.stack(draws, dim=1).reshape(-1, 3)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, RunConfig]:
    arrays = {}
    with zipfile.ZipFile(path) as zf:
        config = config_from_dict(json.loads(zf.read("config.json")))
        state = json.loads(zf.read("state.json"))
        for name in zf.namelist():
            if name.startswith("arrays/") and name.endswith(".npy"):
                arrays[name[len("arrays/"):-len(".npy")]] = np.load(io.BytesIO(zf.read(name)))
    return arrays, state, config


def load_generator(path, table: EmbeddingTable | None = None) -> PlacementGenerator:
    """Rebuild just the generator from a checkpoint, for inference."""
    arrays, state, config = read_checkpoint(path)
    gen = PlacementGenerator(config.model, Vocabulary(state["vocab"]["objects"]),
                             Vocabulary(state["vocab"]["relations"]), table)
    gen.load_state_dict({k[len("generator/"):]: torch.from_numpy(v) for k, v in arrays.items()
                         if k.startswith("generator/")})
    gen.run_config = config
    return gen.eval()
