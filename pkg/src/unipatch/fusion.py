"""Mixed text/visual sequences and a toy causal decoder.

Text is tokenized at the byte level (256 byte ids plus four specials) and
embedded with the decoder's token table; projected visual tokens are
spliced in at the single image placeholder. The decoder is a small
pre-norm transformer with learned absolute positions, a strict causal mask
and an output head tied to the token table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from . import layers
from .errors import ConfigError, ShapeError
from .projector import ProjectorParams, project, project_backward

INIT_STD = 0.02


class ByteTokenizer:
    PAD = 256
    BOS = 257
    EOS = 258
    IMAGE = 259
    vocab_size = 260

    def encode(self, data, bos=False, eos=False) -> list[int]:
        if isinstance(data, str):
            data = data.encode("utf-8")
        ids = list(bytes(data))
        return ([self.BOS] if bos else []) + ids + ([self.EOS] if eos else [])

    def decode(self, ids) -> bytes:
        return bytes(i for i in ids if 0 <= i < 256)


TOKENIZER = ByteTokenizer()
TEXT, VISUAL = "text", "visual"


@dataclass
class MixedSequence:
    embeddings: np.ndarray  # (T, d_llm)
    tags: list[str]  # "text" / "visual" per position
    provenance: np.ndarray  # (T, 3): (plane, m, n) for visual, (offset, -1, -1) for text
    token_ids: np.ndarray  # (T,), -1 at visual positions

    @property
    def length(self) -> int:
        return self.embeddings.shape[0]

    def text_positions(self) -> np.ndarray:
        return np.flatnonzero(self.token_ids >= 0)

    def visual_positions(self) -> np.ndarray:
        return np.flatnonzero(self.token_ids < 0)


def assemble(text_ids, h_proj, provenance, token_embedding) -> MixedSequence:
    """Splice projected visual rows into the text at the image placeholder.

    Text offsets in the provenance are indices into ``text_ids``. A
    placeholder may be omitted only when there are no visual rows.
    """
    text_ids = [int(t) for t in text_ids]
    token_embedding = np.asarray(token_embedding, dtype=np.float64)
    d = token_embedding.shape[1]
    h_proj = np.asarray(h_proj, dtype=np.float64).reshape(-1, d) if np.size(h_proj) else np.zeros((0, d))
    provenance = np.asarray(provenance, dtype=np.int64).reshape(-1, 3)
    if h_proj.shape[0] != provenance.shape[0]:
        raise ShapeError("one provenance row per visual token required", h_proj.shape, provenance.shape)
    slots = [i for i, t in enumerate(text_ids) if t == ByteTokenizer.IMAGE]
    if len(slots) > 1:
        raise ValueError("layout holds more than one image placeholder")
    if not slots and h_proj.shape[0]:
        raise ValueError("layout has no image placeholder for the visual tokens")

    rows, tags, prov, ids = [], [], [], []
    for offset, t in enumerate(text_ids):
        if t == ByteTokenizer.IMAGE:
            rows.append(h_proj)
            tags += [VISUAL] * h_proj.shape[0]
            prov.append(provenance)
            ids += [-1] * h_proj.shape[0]
            continue
        if not 0 <= t < token_embedding.shape[0]:
            raise ValueError(f"token id {t} outside the vocabulary")
        rows.append(token_embedding[t][None])
        tags.append(TEXT)
        prov.append(np.array([[offset, -1, -1]]))
        ids.append(t)
    emb = np.concatenate(rows, axis=0) if rows else np.zeros((0, d))
    prov = np.concatenate(prov, axis=0) if prov else np.zeros((0, 3), dtype=np.int64)
    return MixedSequence(emb, tags, prov.astype(np.int64), np.array(ids, dtype=np.int64))


@dataclass(frozen=True)
class DecoderConfig:
    vocab: int = ByteTokenizer.vocab_size
    d_llm: int = 12
    layers: int = 2
    heads: int = 2
    d_mlp: int = 24
    max_len: int = 64

    def __post_init__(self):
        if min(self.vocab, self.d_llm, self.heads, self.d_mlp, self.max_len) < 1 or self.layers < 0:
            raise ConfigError(f"invalid decoder sizes: {self}")
        if self.d_llm % self.heads:
            raise ConfigError(f"d_llm={self.d_llm} not divisible by heads={self.heads}")


def init_decoder(config: DecoderConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    p = {
        "tok_emb": rng.normal(0.0, INIT_STD, (config.vocab, config.d_llm)),
        "pos_emb": rng.normal(0.0, INIT_STD, (config.max_len, config.d_llm)),
    }
    for i in range(config.layers):
        p.update(layers.init_block(rng, config.d_llm, config.d_mlp, f"dec.{i}.", INIT_STD, key_bias=False))
    p["lnf_g"] = np.ones(config.d_llm)
    p["lnf_b"] = np.zeros(config.d_llm)
    return p


def decoder_forward_embeddings(x, params: dict, config: DecoderConfig):
    """Logits for a (T, d_llm) embedding sequence; returns (logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.d_llm:
        raise ShapeError("embedding width differs from d_llm", x.shape, (config.d_llm,))
    t = x.shape[0]
    if not 1 <= t <= config.max_len:
        raise ShapeError(f"sequence length must be in 1..{config.max_len}", x.shape)
    h = x + params["pos_emb"][:t]
    caches = []
    for i in range(config.layers):
        h, c = layers.block_forward(h, params, f"dec.{i}.", config.heads, causal=True)
        caches.append(c)
    hf, lnf = layers.layer_norm_forward(h, params["lnf_g"], params["lnf_b"])
    return hf @ params["tok_emb"].T, (caches, lnf, hf, t)


def decoder_backward(d_logits, params: dict, cache):
    """Returns (d_embeddings, grads); grads include the tied-head share of tok_emb."""
    caches, lnf, hf, t = cache
    grads = {"tok_emb": d_logits.T @ hf}
    dh, grads["lnf_g"], grads["lnf_b"] = layers.layer_norm_backward(d_logits @ params["tok_emb"], lnf)
    for c in reversed(caches):
        dh, g = layers.block_backward(dh, params, c)
        grads.update(g)
    pos = np.zeros_like(params["pos_emb"])
    pos[:t] = dh
    grads["pos_emb"] = pos
    return dh, grads


def decoder_forward(seq: MixedSequence, params: dict, config: DecoderConfig) -> np.ndarray:
    """(T, vocab) logits; row t depends only on positions <= t."""
    logits, _ = decoder_forward_embeddings(seq.embeddings, params, config)
    return logits


def cross_entropy(logits, targets):
    """Mean next-token cross-entropy over positions whose target is >= 0; returns (loss, dlogits)."""
    targets = np.asarray(targets, dtype=np.int64)
    sel = np.flatnonzero(targets >= 0)
    if sel.size == 0:
        return 0.0, np.zeros_like(logits)
    z = logits[sel] - logits[sel].max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(sel.size), targets[sel]].mean()
    dz = np.exp(logp)
    dz[np.arange(sel.size), targets[sel]] -= 1.0
    d_logits = np.zeros_like(logits)
    d_logits[sel] = dz / sel.size
    return float(loss), d_logits


def scatter_text_grad(seq: MixedSequence, d_emb, vocab: int) -> np.ndarray:
    """Accumulate embedding-row gradients back onto the token table."""
    g = np.zeros((vocab, d_emb.shape[1]))
    pos = seq.text_positions()
    np.add.at(g, seq.token_ids[pos], d_emb[pos])
    return g


def fused_loss(tokens, coords, text_ids, targets, enc_params, enc_config, proj: ProjectorParams,
               dec_params, dec_config, provenance=None, with_grads=True):
    """Cross-entropy of the full encoder -> projector -> decoder composite.

    Returns ``(loss, grads)`` with gradients for every encoder, projector
    (``proj.*``) and decoder (``dec:*``) tensor plus the input ``tokens``;
    ``grads`` is None when ``with_grads`` is false.
    """
    coords = np.asarray(coords, dtype=np.int64)
    h_v, enc_cache = enc.forward_tokens(tokens, coords, enc_params, enc_config)
    h_proj = project(h_v, proj)
    if provenance is None:
        provenance = np.column_stack([np.zeros(len(coords), dtype=np.int64), coords])
    seq = assemble(text_ids, h_proj, provenance, dec_params["tok_emb"])
    logits, dec_cache = decoder_forward_embeddings(seq.embeddings, dec_params, dec_config)
    loss, d_logits = cross_entropy(logits, targets)
    if not with_grads:
        return loss, None
    d_emb, dec_grads = decoder_backward(d_logits, dec_params, dec_cache)
    dec_grads["tok_emb"] = dec_grads["tok_emb"] + scatter_text_grad(seq, d_emb, dec_config.vocab)
    d_hproj = d_emb[seq.visual_positions()]
    d_hv, proj_grads = project_backward(d_hproj, h_v, proj)
    d_tokens, enc_grads = enc.backward_tokens(d_hv, enc_params, enc_cache)
    grads = {"tokens": d_tokens}
    grads.update(enc_grads)
    grads.update({f"proj.{k}": v for k, v in proj_grads.items()})
    grads.update({f"dec:{k}": v for k, v in dec_grads.items()})
    return loss, grads


class TrainingDiverged(ArithmeticError):
    def __init__(self, step, loss):
        self.step = step
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at step {step}")


@dataclass(frozen=True)
class CopyTaskConfig:
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    d_visual: int = 8
    pattern_len: int = 3
    digits: int = 10
    examples: int = 32
    steps: int = 200
    lr: float = 0.1


def copy_task_data(config: CopyTaskConfig, seed: int):
    """Sequences ``BOS <img> d1..dL EOS`` whose visual span encodes digits d1..dL.

    Each digit has a fixed random code vector pushed through a fixed
    projector, so the decoder has to read the digit off the visual tokens
    and write its ASCII byte. Returns a list of (visual rows, text ids, targets).
    """
    rng = np.random.default_rng(seed)
    d_llm = config.decoder.d_llm
    codebook = rng.normal(0.0, 1.0, (config.digits, config.d_visual))
    proj = ProjectorParams.init(config.d_visual, 2 * d_llm, d_llm, seed=seed + 1,
                                std=1.0 / math.sqrt(config.d_visual))
    visual = project(codebook, proj)
    L = config.pattern_len
    data = []
    for pattern in rng.integers(0, config.digits, (config.examples, L)):
        text = "".join(str(int(k)) for k in pattern)
        ids = [ByteTokenizer.BOS, ByteTokenizer.IMAGE] + TOKENIZER.encode(text) + [ByteTokenizer.EOS]
        # positions: 0 BOS, 1..L visual, L+1..2L digits, 2L+1 EOS
        full = [ByteTokenizer.BOS] + [-1] * L + TOKENIZER.encode(text) + [ByteTokenizer.EOS]
        targets = np.full(len(full), -1, dtype=np.int64)
        targets[L: 2 * L + 1] = full[L + 1: 2 * L + 2]
        data.append((visual[pattern], ids, targets))
    return data


def train_copy_task(config: CopyTaskConfig | None = None, seed: int = 0) -> list[float]:
    """Full-batch gradient descent on the toy decoder; returns loss before each step and after the last."""
    config = config or CopyTaskConfig()
    dc = config.decoder
    params = init_decoder(dc, seed)
    data = copy_task_data(config, seed)
    prov_cache = {}
    curve = []
    for step in range(config.steps + 1):
        total = 0.0
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        for visual, ids, targets in data:
            prov = prov_cache.setdefault(len(visual), np.zeros((len(visual), 3), dtype=np.int64))
            seq = assemble(ids, visual, prov, params["tok_emb"])
            logits, cache = decoder_forward_embeddings(seq.embeddings, params, dc)
            loss, d_logits = cross_entropy(logits, targets)
            d_emb, g = decoder_backward(d_logits, params, cache)
            g["tok_emb"] = g["tok_emb"] + scatter_text_grad(seq, d_emb, dc.vocab)
            total += loss
            for k, v in g.items():
                grads[k] += v
        loss = total / len(data)
        if not math.isfinite(loss):
            raise TrainingDiverged(step, loss)
        curve.append(loss)
        if step == config.steps:
            break
        for k in params:
            params[k] = params[k] - config.lr * grads[k] / len(data)
    return curve
