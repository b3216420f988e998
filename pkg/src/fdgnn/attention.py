"""Self-attention over an entity's history and attention over neighbors.

Both are softmax normalizations of ``exp(activity product * similarity)``
terms. Activity values are 1 (active) or 0 (inactive or undefined), and the
similarity is cosine, so every exponent lies in [-1, 1].
"""

from __future__ import annotations

import torch

from .params import DTYPE


def similarity(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity; 0 when either operand is the zero vector."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    na = torch.linalg.vector_norm(a)
    nb = torch.linalg.vector_norm(b)
    if na.item() == 0.0 or nb.item() == 0.0:
        return torch.zeros((), dtype=DTYPE)
    return torch.dot(a, b) / (na * nb)


def similarity_rows(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise cosine similarity of two (n, k) matrices, zero rows give 0."""
    na = torch.linalg.vector_norm(a, dim=1)
    nb = torch.linalg.vector_norm(b, dim=1)
    denom = na * nb
    ok = denom > 0
    safe = torch.where(ok, denom, torch.ones_like(denom))
    return torch.where(ok, (a * b).sum(dim=1) / safe, torch.zeros_like(denom))


class SelfAttentionAccumulator:
    """Running denominator of the self-attention softmax for one entity.

    Keeps every exponent pushed so far; the weight of the newest event is
    its term over the sum of all terms up to and including it.
    """

    def __init__(self) -> None:
        self.exponents: list[torch.Tensor] = []
        self.total: torch.Tensor = torch.zeros((), dtype=DTYPE)

    def push(self, exponent) -> torch.Tensor:
        exponent = torch.as_tensor(exponent, dtype=DTYPE)
        term = torch.exp(exponent)
        self.exponents.append(exponent)
        self.total = self.total + term
        return term / self.total

    def weights(self) -> torch.Tensor:
        """Weights of every stored event against the final denominator."""
        terms = torch.exp(torch.stack(self.exponents))
        return terms / self.total

    def detach(self) -> None:
        self.total = self.total.detach()
        self.exponents = [e.detach() for e in self.exponents]

    def __len__(self) -> int:
        return len(self.exponents)


def self_attention(
    acc: SelfAttentionAccumulator, xi_now: float, xi_prev: float, tau: torch.Tensor | float
) -> torch.Tensor:
    return acc.push(xi_now * xi_prev * torch.as_tensor(tau, dtype=DTYPE))


def neighborhood_attention(exponents: torch.Tensor) -> torch.Tensor:
    """Normalized weights for exponents ``xi_v * xi_u * xi_e * tau`` of each
    neighbor. An empty neighborhood has no weights."""
    if exponents.numel() == 0:
        return exponents
    return torch.softmax(exponents, dim=0)
