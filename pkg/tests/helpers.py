"""Small shared fixtures for model-level tests."""

import torch

from sgtrans.data import Example, build_vocab, make_batch
from sgtrans.model import ModelConfig, SGTrans
from sgtrans.structparse import DataFlowGraph, DfgEdge, DfgNode, EdgeKind, Language, StructuredCode

# one PASS/FAIL line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def tiny_code() -> StructuredCode:
    # "get user count ( ) ; count" as 7 sub-tokens, 5 tokens, 2 statements
    subs = ("get", "user", "count", "(", ")", ";", "count")
    token_of = (0, 0, 0, 1, 2, 3, 4)
    statement_of = (0, 0, 0, 0, 0, 0, 1)
    nodes = (DfgNode(0, 3, "getUserCount", 1), DfgNode(6, 7, "count", 1))
    dfg = DataFlowGraph(nodes, (DfgEdge(0, 1, EdgeKind.COMPUTE_FROM),))
    return StructuredCode(subs, token_of, statement_of, dfg, Language.JAVA, "tiny")


def tiny_setup(dtype=torch.float64, seed=0, **overrides):
    """Model (L=2, h=4, d_model=16), vocabs and a batch with n=7 and 5 target steps."""
    code = tiny_code()
    example = Example(code, ("get", "the", "user", "count"), "tiny")
    src_vocab = build_vocab([code.sub_tokens])
    # "user" stays out of the target vocab so the target needs a copy
    tgt_vocab = build_vocab([("get", "the", "count", "of")])
    cfg = dict(
        src_vocab_size=len(src_vocab), tgt_vocab_size=len(tgt_vocab), enc_layers=2, dec_layers=2,
        heads=4, d_model=16, d_ff=32, dropout=0.0, max_src_len=16, max_tgt_len=8,
    )
    cfg.update(overrides)
    model = SGTrans(ModelConfig(**cfg))
    model.reset_parameters(seed)
    model.to(dtype)
    batch = make_batch([example], src_vocab, tgt_vocab, cfg["max_src_len"], cfg["max_tgt_len"], dtype)
    return model, batch, src_vocab, tgt_vocab
