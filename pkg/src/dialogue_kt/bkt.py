"""Per-KC Bayesian knowledge tracing.

Each KC is a two-state hidden Markov chain (unmastered/mastered) with no
forgetting: init is the prior mastery probability, learn the per-step
transition into mastery, and slip/guess the emission noise. Parameters are
fit by expectation-maximization over the per-KC pseudo-turn sequences of
each dialogue; prediction replays a dialogue's labels through the Bayesian
update and emits P(correct) per KC at its current state.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from dialogue_kt.kt_core import PairContext, PseudoTurn

log = logging.getLogger(__name__)

PROB_FLOOR = 0.01
PROB_CEIL = 0.99
NOISE_CEIL = 0.49  # slip and guess stay below 0.5 for identifiability


@dataclass(frozen=True)
class KCParams:
    init: float
    learn: float
    slip: float
    guess: float

    def clamped(self) -> "KCParams":
        return KCParams(
            init=min(max(self.init, PROB_FLOOR), PROB_CEIL),
            learn=min(max(self.learn, PROB_FLOOR), PROB_CEIL),
            slip=min(max(self.slip, PROB_FLOOR), NOISE_CEIL),
            guess=min(max(self.guess, PROB_FLOOR), NOISE_CEIL),
        )


DEFAULT_INIT = KCParams(init=0.5, learn=0.2, slip=0.1, guess=0.2)


@dataclass(frozen=True)
class BKTParams:
    """Fitted parameters per KC plus a pooled fallback for unseen KCs."""

    per_kc: Mapping[str, KCParams]
    fallback: KCParams

    def for_kc(self, kc: str) -> KCParams:
        return self.per_kc.get(kc, self.fallback)

    def save(self, path: str | Path) -> None:
        doc = {
            kc: [p.init, p.learn, p.slip, p.guess] for kc, p in sorted(self.per_kc.items())
        }
        doc["__fallback__"] = [
            self.fallback.init,
            self.fallback.learn,
            self.fallback.slip,
            self.fallback.guess,
        ]
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BKTParams":
        doc = json.loads(Path(path).read_text())
        fallback = KCParams(*doc.pop("__fallback__"))
        return cls(per_kc={kc: KCParams(*v) for kc, v in doc.items()}, fallback=fallback)


def bkt_predict_step(mastery: float, params: KCParams) -> float:
    """P(correct) given the current mastery prior."""
    if not 0.0 <= mastery <= 1.0:
        raise ValueError(f"mastery prior {mastery} outside [0, 1]")
    return mastery * (1.0 - params.slip) + (1.0 - mastery) * params.guess


def bkt_update(mastery: float, y: int, params: KCParams) -> float:
    """Posterior on the observation, then the learning transition."""
    if y == 1:
        num = mastery * (1.0 - params.slip)
        den = num + (1.0 - mastery) * params.guess
    else:
        num = mastery * params.slip
        den = num + (1.0 - mastery) * (1.0 - params.guess)
    posterior = num / den if den > 0 else mastery
    return posterior + (1.0 - posterior) * params.learn


@dataclass
class BKTFitConfig:
    max_iter: int = 100
    tol: float = 1e-4
    restarts: int = 5  # random restarts in addition to the fixed start
    seed: int = 0


@dataclass
class FitResult:
    params: KCParams
    log_likelihood: float
    ll_history: list[float] = field(default_factory=list)


def _pad_sequences(sequences: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    n = len(sequences)
    t_max = max(len(s) for s in sequences)
    obs = np.zeros((n, t_max), dtype=np.float64)
    mask = np.zeros((n, t_max), dtype=bool)
    for i, seq in enumerate(sequences):
        obs[i, : len(seq)] = seq
        mask[i, : len(seq)] = True
    return obs, mask


def _em_run(
    obs: np.ndarray, mask: np.ndarray, start: KCParams, max_iter: int, tol: float
) -> FitResult:
    """One EM run (scaled forward-backward) from a given start."""
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n, t_max = obs.shape
    p = start.clamped()
    ll_history: list[float] = []
    prev_ll = -np.inf

    for _ in range(max_iter):
        init, learn, slip, guess = p.init, p.learn, p.slip, p.guess
        # Emission likelihoods; padded positions use 1 so they are inert in
        # both recursions and contribute nothing to the log-likelihood.
        b0 = np.where(mask, np.where(obs == 1, guess, 1.0 - guess), 1.0)
        b1 = np.where(mask, np.where(obs == 1, 1.0 - slip, slip), 1.0)

        alpha = np.zeros((n, t_max, 2))
        scale = np.ones((n, t_max))
        a0 = (1.0 - init) * b0[:, 0]
        a1 = init * b1[:, 0]
        c = a0 + a1
        alpha[:, 0, 0], alpha[:, 0, 1] = a0 / c, a1 / c
        scale[:, 0] = c
        for t in range(1, t_max):
            a0 = alpha[:, t - 1, 0] * (1.0 - learn) * b0[:, t]
            a1 = (alpha[:, t - 1, 0] * learn + alpha[:, t - 1, 1]) * b1[:, t]
            c = a0 + a1
            alpha[:, t, 0], alpha[:, t, 1] = a0 / c, a1 / c
            scale[:, t] = c

        ll = float(np.sum(np.log(scale)))
        ll_history.append(ll)

        beta = np.ones((n, t_max, 2))
        for t in range(t_max - 2, -1, -1):
            c = scale[:, t + 1]
            beta[:, t, 0] = (
                (1.0 - learn) * b0[:, t + 1] * beta[:, t + 1, 0]
                + learn * b1[:, t + 1] * beta[:, t + 1, 1]
            ) / c
            beta[:, t, 1] = b1[:, t + 1] * beta[:, t + 1, 1] / c

        gamma = alpha * beta  # exact posteriors under this scaling
        # xi(0, 1) on transitions where both endpoints are real observations
        trans_mask = mask[:, :-1] & mask[:, 1:]
        xi01 = (
            alpha[:, :-1, 0]
            * learn
            * b1[:, 1:]
            * beta[:, 1:, 1]
            / scale[:, 1:]
        )

        g0 = np.where(mask, gamma[:, :, 0], 0.0)
        g1 = np.where(mask, gamma[:, :, 1], 0.0)
        correct = np.where(mask, obs, 0.0)

        new_init = float(np.mean(gamma[:, 0, 1]))
        learn_den = float(np.sum(np.where(trans_mask, gamma[:, :-1, 0], 0.0)))
        learn_num = float(np.sum(np.where(trans_mask, xi01, 0.0)))
        guess_den = float(np.sum(g0))
        guess_num = float(np.sum(g0 * correct))
        slip_den = float(np.sum(g1))
        slip_num = float(np.sum(g1 * (mask.astype(float) - correct)))

        p = KCParams(
            init=new_init,
            learn=learn_num / learn_den if learn_den > 0 else p.learn,
            slip=slip_num / slip_den if slip_den > 0 else p.slip,
            guess=guess_num / guess_den if guess_den > 0 else p.guess,
        ).clamped()

        if ll - prev_ll < -1e-8 * max(1.0, abs(ll)):
            log.debug("EM log-likelihood decreased: %.6f -> %.6f", prev_ll, ll)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll

    return FitResult(params=p, log_likelihood=ll_history[-1], ll_history=ll_history)


def _stable_rng(seed: int, tag: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def fit_sequences(
    sequences: Sequence[Sequence[int]], config: BKTFitConfig | None = None, tag: str = ""
) -> FitResult:
    """Fit one parameter set to binary sequences, best of several EM starts."""
    config = config or BKTFitConfig()
    if not sequences or any(len(s) == 0 for s in sequences):
        raise ValueError("every sequence must have at least one observation")
    obs, mask = _pad_sequences(sequences)
    rng = _stable_rng(config.seed, tag)
    starts = [DEFAULT_INIT]
    for _ in range(config.restarts):
        starts.append(
            KCParams(
                init=rng.uniform(0.1, 0.9),
                learn=rng.uniform(0.05, 0.4),
                slip=rng.uniform(0.02, 0.3),
                guess=rng.uniform(0.02, 0.4),
            )
        )
    best: FitResult | None = None
    for start in starts:
        result = _em_run(obs, mask, start, config.max_iter, config.tol)
        if best is None or result.log_likelihood > best.log_likelihood:
            best = result
    return best


def _sequences_by_kc(pseudo_turns: Iterable[PseudoTurn]) -> dict[str, list[list[int]]]:
    # One sequence per (KC, dialogue), in encounter order of the input.
    per_kc: dict[str, dict[str, list[int]]] = {}
    for pt in pseudo_turns:
        per_kc.setdefault(pt.kc, {}).setdefault(pt.dialogue_id, []).append(pt.y)
    return {kc: list(by_dialogue.values()) for kc, by_dialogue in per_kc.items()}


def bkt_fit(
    pseudo_turns: Iterable[PseudoTurn], config: BKTFitConfig | None = None
) -> BKTParams:
    """Fit per-KC parameters plus the pooled fallback used for unseen KCs."""
    config = config or BKTFitConfig()
    pseudo_turns = list(pseudo_turns)
    if not pseudo_turns:
        raise ValueError("no pseudo-turns to fit")
    grouped = _sequences_by_kc(pseudo_turns)
    per_kc = {
        kc: fit_sequences(seqs, config, tag=kc).params for kc, seqs in grouped.items()
    }
    pooled: dict[str, list[int]] = {}
    for pt in pseudo_turns:
        pooled.setdefault(f"{pt.dialogue_id}::{pt.kc}", []).append(pt.y)
    fallback = fit_sequences(list(pooled.values()), config, tag="__fallback__").params
    return BKTParams(per_kc=per_kc, fallback=fallback)


class BKTPredictor:
    """KTPredictor over fitted parameters.

    Per-KC mastery state is rebuilt from the context history on every call,
    updating on observed labels only (teacher forcing); KC chains never
    interact, so no label information leaks across KCs.
    """

    def __init__(self, params: BKTParams):
        self.params = params

    def predict_masteries(self, context: PairContext) -> list[float]:
        state: dict[str, float] = {}
        for past in context.history:
            if past.correctness is None:
                continue
            for kc in past.kcs:
                p = self.params.for_kc(kc)
                prior = state.get(kc, p.init)
                state[kc] = bkt_update(prior, past.correctness, p)
        out = []
        for kc in context.kcs:
            p = self.params.for_kc(kc)
            out.append(bkt_predict_step(state.get(kc, p.init), p))
        return out


def bkt_as_predictor(params: BKTParams) -> BKTPredictor:
    return BKTPredictor(params)
