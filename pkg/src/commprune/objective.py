"""Scalar objective pieces: task utility, sparsity surrogate, alignment, penalties."""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def _normalize(text: str) -> str:
    return " ".join(text.casefold().translate(_PUNCT_TABLE).split())


def utility_em(prediction: str, gold: str) -> float:
    """Exact-match utility: 1.0 if the normalized prediction equals or contains
    the normalized gold answer (on token boundaries), else 0.0.

    Normalization case-folds, strips punctuation and collapses whitespace.
    """
    gold_norm = _normalize(gold)
    if not gold_norm:
        raise ValueError("gold answer must be non-empty")
    pred_norm = _normalize(prediction)
    if pred_norm == gold_norm:
        return 1.0
    return 1.0 if f" {gold_norm} " in f" {pred_norm} " else 0.0


def nuclear_norm(matrix: np.ndarray) -> float:
    """Sum of singular values (convex rank surrogate)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError("nuclear_norm: non-finite entries")
    try:
        return float(np.linalg.svd(matrix, compute_uv=False).sum())
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc


def nuclear_norm_subgradient(matrix: np.ndarray, support: np.ndarray | None = None) -> np.ndarray:
    """U @ Vt from the thin SVD, optionally masked to an adjacency support."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError("nuclear_norm_subgradient: non-finite entries")
    try:
        u, _, vt = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    grad = u @ vt
    if support is not None:
        grad = grad * (np.asarray(support) != 0)
    return grad


def _row_cosine(u: np.ndarray, v: np.ndarray) -> float:
    # sqrt(du * dv) keeps cos(u, u) == 1.0 exactly; zero rows count as cos 0.
    du = float(u @ u)
    dv = float(v @ v)
    if du == 0.0 or dv == 0.0:
        return 0.0
    return float(u @ v) / np.sqrt(du * dv)


def alignment_loss(txt_to_vis: np.ndarray, vis_to_txt: np.ndarray, normalize: str = "verbatim") -> float:
    """Cross-direction cosine coupling of the two inter-modal logit blocks.

    Row i of ``txt_to_vis`` is compared against row i of ``vis_to_txt``
    transposed; the loss is -(1/(N_T * N_I)) * sum_i (1 - cos_i), so it is 0
    exactly when every nonzero row pair is positively collinear and negative
    otherwise. ``normalize="rows"`` divides by N_T instead of N_T * N_I.
    """
    tv = np.asarray(txt_to_vis, dtype=np.float64)
    vt = np.asarray(vis_to_txt, dtype=np.float64)
    if tv.shape != vt.T.shape:
        raise ValueError(f"shape mismatch: {tv.shape} vs transpose of {vt.shape}")
    n_text, n_visual = tv.shape
    total = 0.0
    for i in range(n_text):
        total += 1.0 - _row_cosine(tv[i, :], vt[:, i])
    scale = n_text if normalize == "rows" else n_text * n_visual
    return -total / scale


def alignment_loss_gradients(
    txt_to_vis: np.ndarray, vis_to_txt: np.ndarray, normalize: str = "verbatim"
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of alignment_loss with respect to both blocks.

    Zero rows get zero gradient (the zero-row cosine is held constant at 0).
    """
    tv = np.asarray(txt_to_vis, dtype=np.float64)
    vt = np.asarray(vis_to_txt, dtype=np.float64)
    if tv.shape != vt.T.shape:
        raise ValueError(f"shape mismatch: {tv.shape} vs transpose of {vt.shape}")
    n_text, n_visual = tv.shape
    scale = n_text if normalize == "rows" else n_text * n_visual
    g_tv = np.zeros_like(tv)
    g_vt = np.zeros_like(vt)
    for i in range(n_text):
        u = tv[i, :]
        v = vt[:, i]
        nu = np.linalg.norm(u)
        nv = np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            continue
        c = _row_cosine(u, v)
        # d cos / du and d cos / dv; the loss term is -(1 - cos) / scale.
        g_tv[i, :] = (v / (nu * nv) - c * u / (nu * nu)) / scale
        g_vt[:, i] = (u / (nu * nv) - c * v / (nv * nv)) / scale
    return g_tv, g_vt


def _as_pairs(adjacency, logits) -> list[tuple[np.ndarray, np.ndarray]]:
    if isinstance(adjacency, np.ndarray):
        return [(np.asarray(adjacency, dtype=np.float64), np.asarray(logits, dtype=np.float64))]
    return [
        (np.asarray(a, dtype=np.float64), np.asarray(l, dtype=np.float64))
        for a, l in zip(adjacency, logits, strict=True)
    ]


def frobenius_penalty(adjacency, logits, eps: float) -> float:
    """Hinge-squared drift penalty: max(0, sum_b ||A_b - L_b||_F - eps)^2.

    Accepts a single (adjacency, logits) pair or parallel sequences forming
    one constraint group whose Frobenius distances are summed before the
    hinge.
    """
    gap = 0.0
    for adj, logit in _as_pairs(adjacency, logits):
        if adj.shape != logit.shape:
            raise ValueError(f"shape mismatch: {adj.shape} vs {logit.shape}")
        gap += float(np.linalg.norm(adj - logit))
    return max(0.0, gap - eps) ** 2


def frobenius_penalty_gradients(adjacency, logits, eps: float) -> list[np.ndarray]:
    """Gradients of frobenius_penalty with respect to each logits matrix."""
    pairs = _as_pairs(adjacency, logits)
    norms = [float(np.linalg.norm(adj - logit)) for adj, logit in pairs]
    excess = max(0.0, sum(norms) - eps)
    grads = []
    for (adj, logit), norm in zip(pairs, norms):
        if excess == 0.0 or norm == 0.0:
            grads.append(np.zeros_like(logit))
        else:
            grads.append(2.0 * excess * (logit - adj) / norm)
    return grads


@dataclass
class UtilityFn:
    """Task utility in [0, 1]: exact match, an LLM-judge stub, or a custom callable."""

    kind: str = "exact_match"
    params: dict = field(default_factory=dict)

    def __call__(self, prediction: str, gold: str) -> float:
        if self.kind == "exact_match":
            return utility_em(prediction, gold)
        if self.kind == "custom":
            value = float(self.params["fn"](prediction, gold))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"custom utility returned {value}, expected [0, 1]")
            return value
        if self.kind == "judge_stub":
            return self._judge(prediction, gold)
        raise ConfigurationError(f"unknown utility kind {self.kind!r}")

    def _judge(self, prediction: str, gold: str) -> float:
        # Semantic scoring needs an external judge backend; the caller supplies
        # a callable(prompt) -> str along with a prompt template.
        backend = self.params.get("backend")
        if backend is None:
            raise ConfigurationError("judge_stub utility requires a 'backend' callable")
        template = self.params.get(
            "template",
            "Rate 1-5 how consistent the answer is with the reference.\nAnswer: {prediction}\nReference: {gold}\nScore:",
        )
        reply = backend(template.format(prediction=prediction, gold=gold))
        for token in str(reply).replace("/", " ").split():
            if token.isdigit():
                return 1.0 if int(token) >= int(self.params.get("threshold", 4)) else 0.0
        raise ValueError(f"judge backend reply had no integer score: {reply!r}")


def make_utility(kind: str = "exact_match", **params) -> UtilityFn:
    return UtilityFn(kind=kind, params=params)
