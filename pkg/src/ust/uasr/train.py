"""Adversarial training loop, unsupervised scoring, checkpoint selection."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..checkpoints import Checkpoint, average_checkpoints, module_to_params, params_into_module, select_checkpoints
from ..errors import NonFiniteLossError
from ..guard import training_guard
from ..kmeans import Codebook, assign_labels, kmeans_fit
from ..vocab import Vocab
from .decode import decode_phonemes
from .losses import diversity_penalty, gaussian_perturb, gradient_penalty, rdrop_loss, smoothness_penalty
from .models import PhonemeClassMap, PhonemeGenerator, SequenceDiscriminator, select_run_representatives


@dataclass
class UasrLossWeights:
    lambda_gp: float = 1.0
    gamma_sp: float = 1.5
    delta_pd: float = 0.3
    eta_aux: float = 3.0
    alpha_rdrop: float = 1.0
    sigma_noise: float = 0.1

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class UasrConfig:
    weights: UasrLossWeights = field(default_factory=UasrLossWeights)
    hidden: int = 64
    input_dropout: float = 0.2
    hidden_dropout: float = 0.1
    aux_clusters: int = 16
    steps: int = 3000
    batch_size: int = 8
    lr_g: float = 4e-4
    lr_d: float = 4e-4
    ckpt_interval: int = 250
    seed: int = 0


@dataclass
class UasrCheckpointScore:
    lm_nll: float
    usage_entropy: float

    @property
    def score(self) -> float:
        return self.lm_nll - self.usage_entropy


def unsup_score(decoded: list[list[int]], phoneme_lm, phoneme_vocab: Vocab) -> UasrCheckpointScore:
    """LM negative log likelihood per symbol minus decoded-unigram entropy."""
    sym_seqs = [[phoneme_vocab.symbol(p) for p in seq] for seq in decoded]
    nll = float(np.mean([phoneme_lm.sentence_nll(s) for s in sym_seqs])) if sym_seqs else float("inf")
    counts = Counter(p for seq in decoded for p in seq)
    total = sum(counts.values())
    if total == 0:
        return UasrCheckpointScore(lm_nll=nll, usage_entropy=0.0)
    ent = -sum((c / total) * math.log(c / total) for c in counts.values())
    return UasrCheckpointScore(lm_nll=nll, usage_entropy=ent)


class UasrTrainer:
    """One alternating GAN update per `step` call.

    The discriminator sub-step only touches discriminator parameters and
    the generator sub-step only generator parameters.
    """

    def __init__(self, generator: PhonemeGenerator, discriminator: SequenceDiscriminator,
                 class_map: PhonemeClassMap, codebook: Codebook, cfg: UasrConfig):
        self.gen = generator
        self.disc = discriminator
        self.class_map = class_map
        self.codebook = codebook
        self.cfg = cfg
        w = cfg.weights
        self.w = w
        self.opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.lr_g, betas=(0.5, 0.98))
        self.opt_d = torch.optim.Adam(discriminator.parameters(), lr=cfg.lr_d, betas=(0.5, 0.98))
        self.noise_rng = torch.Generator().manual_seed(cfg.seed)

    def _aux_labels(self, feats: torch.Tensor) -> torch.Tensor:
        labels = assign_labels(feats.numpy(), self.codebook).labels
        return torch.tensor(labels, dtype=torch.long) - 1  # 0-based for CE

    def _fake(self, logits: torch.Tensor, training: bool) -> torch.Tensor:
        idx = select_run_representatives(
            logits, mode="random" if training else "first",
            generator=self.noise_rng if training else None,
        )
        return F.softmax(logits[idx], dim=-1)

    def step(self, batch_speech: list[torch.Tensor], batch_text: list[list[int]]) -> dict[str, float]:
        """Discriminator update then generator update on one batch."""
        w = self.w
        reals = [self.class_map.one_hot(seq) for seq in batch_text]
        perturbed = [
            gaussian_perturb(x, w.sigma_noise, generator=self.noise_rng) for x in batch_speech
        ]

        # -- discriminator sub-step
        self.opt_d.zero_grad()
        with torch.no_grad():
            fakes = [self._fake(self.gen(x, training=True)[0], training=True) for x in perturbed]
        d_real = torch.stack([F.softplus(-self.disc(r)) for r in reals]).mean()
        d_fake = torch.stack([F.softplus(self.disc(f)) for f in fakes]).mean()
        gp = torch.stack(
            [gradient_penalty(self.disc, r, f, generator=self.noise_rng)
             for r, f in zip(reals, fakes)]
        ).mean()
        d_loss = d_real + d_fake + w.lambda_gp * gp
        self._check_finite({"d_real": d_real, "d_fake": d_fake, "grad_pen": gp})
        d_loss.backward()
        self.opt_d.step()

        # -- generator sub-step
        self.opt_g.zero_grad()
        adv_terms, sp_terms, aux_terms, rdp_terms, all_soft = [], [], [], [], []
        for x, xp in zip(batch_speech, perturbed):
            logits1, aux1 = self.gen(xp, training=True)
            logits2, _ = self.gen(xp, training=True)  # fresh dropout masks
            fake = self._fake(logits1, training=True)
            adv_terms.append(F.softplus(-self.disc(fake)))
            sp_terms.append(smoothness_penalty(logits1))
            aux_terms.append(F.cross_entropy(aux1, self._aux_labels(x)))
            rdp_terms.append(rdrop_loss(logits1, logits2))
            all_soft.append(F.softmax(logits1, dim=-1))
        adv = torch.stack(adv_terms).mean()
        sp = torch.stack(sp_terms).mean()
        aux = torch.stack(aux_terms).mean()
        rdp = torch.stack(rdp_terms).mean()
        pd = diversity_penalty(torch.cat(all_soft, dim=0))
        g_loss = adv + w.gamma_sp * sp + w.delta_pd * pd + w.eta_aux * aux + w.alpha_rdrop * rdp
        self._check_finite(
            {"adversarial": adv, "smoothness": sp, "diversity": pd, "aux_cluster": aux, "rdrop": rdp}
        )
        g_loss.backward()
        self.opt_g.step()

        return {
            name: float(value.detach())
            for name, value in {
                "d_loss": d_loss, "d_real": d_real, "d_fake": d_fake, "grad_pen": gp,
                "g_loss": g_loss, "adversarial": adv, "smoothness": sp,
                "diversity": pd, "aux_cluster": aux, "rdrop": rdp,
            }.items()
        }

    @staticmethod
    def _check_finite(named: dict[str, torch.Tensor]) -> None:
        for name, value in named.items():
            if not torch.isfinite(value).all():
                raise NonFiniteLossError(name, {k: float(v) for k, v in named.items() if torch.isfinite(v).all()})


def generator_loss_components(
    gen: PhonemeGenerator, disc: SequenceDiscriminator, feats: torch.Tensor,
    aux_labels: torch.Tensor, weights: UasrLossWeights,
    masks1: dict | None = None, masks2: dict | None = None,
) -> torch.Tensor:
    """Deterministic total generator loss for one utterance (gradient checks).

    Dropout masks are injected; merge selection uses first-of-run.
    """
    logits1, aux1 = gen(feats, training=True, masks=masks1)
    logits2, _ = gen(feats, training=True, masks=masks2)
    idx = select_run_representatives(logits1, mode="first")
    fake = F.softmax(logits1[idx], dim=-1)
    adv = F.softplus(-disc(fake))
    total = (
        adv
        + weights.gamma_sp * smoothness_penalty(logits1)
        + weights.delta_pd * diversity_penalty(F.softmax(logits1, dim=-1))
        + weights.eta_aux * F.cross_entropy(aux1, aux_labels)
        + weights.alpha_rdrop * rdrop_loss(logits1, logits2)
    )
    return total


@dataclass
class UasrRunResult:
    generator: PhonemeGenerator
    history: list[Checkpoint]
    curves: dict[str, list[float]]
    codebook: Codebook
    selected_steps: list[int]


def unsup_select(
    checkpoints: list[Checkpoint], generator: PhonemeGenerator, class_map: PhonemeClassMap,
    decode_sample: list[np.ndarray], phoneme_lm, phoneme_vocab: Vocab, k: int = 2,
) -> list[Checkpoint]:
    """Score checkpoints with the unsupervised metric; return the k best."""
    scored = []
    for ckpt in checkpoints:
        params_into_module(generator, ckpt.params)
        decoded = [decode_phonemes(generator, f, class_map) for f in decode_sample]
        s = unsup_score(decoded, phoneme_lm, phoneme_vocab)
        scored.append(
            Checkpoint(params=ckpt.params, step=ckpt.step, valid_loss=ckpt.valid_loss,
                       metric=s.score, seed=ckpt.seed,
                       extra={**ckpt.extra, "lm_nll": s.lm_nll, "usage_entropy": s.usage_entropy})
        )
    return select_checkpoints(scored, "best_k_by_metric", k)


def train_uasr(
    speech_feats: list[np.ndarray], text_phonemes: list[list[int]],
    valid_feats: list[np.ndarray], phoneme_lm, phoneme_vocab: Vocab, cfg: UasrConfig,
) -> UasrRunResult:
    """Full adversarial run: train, snapshot, select best 2, average."""
    with training_guard("train-uasr"):
        torch.manual_seed(cfg.seed)
        class_map = PhonemeClassMap.from_vocab(phoneme_vocab)
        dim = speech_feats[0].shape[1]
        all_frames = np.concatenate(speech_feats, axis=0)
        codebook = kmeans_fit(all_frames, min(cfg.aux_clusters, len(all_frames)), seed=cfg.seed)
        gen = PhonemeGenerator(
            dim, class_map.n_classes, codebook.k, hidden=cfg.hidden,
            input_dropout=cfg.input_dropout, hidden_dropout=cfg.hidden_dropout,
        )
        disc = SequenceDiscriminator(class_map.n_classes, hidden=cfg.hidden)
        trainer = UasrTrainer(gen, disc, class_map, codebook, cfg)

        rng = np.random.default_rng(cfg.seed)
        tensors = [torch.from_numpy(f.astype(np.float32)) for f in speech_feats]
        curves: dict[str, list[float]] = {}
        history: list[Checkpoint] = []
        for step in range(cfg.steps):
            sp_idx = rng.choice(len(tensors), size=min(cfg.batch_size, len(tensors)), replace=False)
            tx_idx = rng.choice(len(text_phonemes), size=min(cfg.batch_size, len(text_phonemes)), replace=False)
            stats = trainer.step([tensors[i] for i in sp_idx], [text_phonemes[i] for i in tx_idx])
            for k_, v in stats.items():
                curves.setdefault(k_, []).append(v)
            if (step + 1) % cfg.ckpt_interval == 0:
                history.append(Checkpoint(params=module_to_params(gen), step=step + 1, seed=cfg.seed))
        if not history:
            history.append(Checkpoint(params=module_to_params(gen), step=cfg.steps, seed=cfg.seed))

        best = unsup_select(history, gen, class_map, valid_feats, phoneme_lm, phoneme_vocab, k=2)
        averaged = average_checkpoints(best)
        params_into_module(gen, averaged.params)
        return UasrRunResult(
            generator=gen, history=history, curves=curves, codebook=codebook,
            selected_steps=[c.step for c in best],
        )
