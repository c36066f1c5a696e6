"""Train a small byte-level decoder and write it as an ffn-skip model file.

The network mirrors the Rust forward pass exactly: pre-norm RMSNorm,
interleaved-pair RoPE, SwiGLU, weights stored [in, out]. Training text is the
docstrings of the local Python standard library.

    python3 tools/train_tiny_lm.py --out crates/core/tests/data/tiny_lm.bin
"""

import argparse
import ast
import json
import math
import pathlib
import random
import struct
import sysconfig

import torch
import torch.nn.functional as F

BOS, EOS, VOCAB = 256, 257, 258
MAGIC = b"FFNSKIP\0"


def docstring_corpus():
    texts = []
    root = pathlib.Path(sysconfig.get_paths()["stdlib"])
    for path in sorted(root.rglob("*.py")):
        if "test" in path.parts or "site-packages" in path.parts:
            continue
        try:
            tree = ast.parse(path.read_text(encoding="utf-8"))
        except (SyntaxError, UnicodeDecodeError, OSError):
            continue
        for node in ast.walk(tree):
            if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
                doc = ast.get_docstring(node)
                if doc and len(doc) > 40 and doc.isascii():
                    texts.append(" ".join(doc.split()))
    return texts


class Layer(torch.nn.Module):
    def __init__(self, h, f):
        super().__init__()
        init = lambda i, o: torch.nn.Parameter(torch.randn(i, o) / math.sqrt(i))
        self.wq, self.wk, self.wv, self.wo = (init(h, h) for _ in range(4))
        self.w1, self.w3, self.w2 = init(h, f), init(h, f), init(f, h)
        self.attn_norm = torch.nn.Parameter(torch.ones(h))
        self.ffn_norm = torch.nn.Parameter(torch.ones(h))


class TinyLM(torch.nn.Module):
    def __init__(self, cfg):
        super().__init__()
        h, f = cfg["hidden_dim"], cfg["ffn_dim"]
        self.cfg = cfg
        self.embedding = torch.nn.Parameter(torch.randn(VOCAB, h) * 0.5)
        self.layers = torch.nn.ModuleList(Layer(h, f) for _ in range(cfg["num_layers"]))
        self.final_norm = torch.nn.Parameter(torch.ones(h))
        self.lm_head = torch.nn.Parameter(torch.randn(h, VOCAB) / math.sqrt(h))

    def norm(self, x, g):
        return x / torch.sqrt(x.pow(2).mean(-1, keepdim=True) + self.cfg["norm_eps"]) * g

    def rope(self, x):
        # x: [B, T, heads, hd]; rotate pairs (2i, 2i+1)
        t, hd = x.shape[1], x.shape[-1]
        inv = self.cfg["rope_theta"] ** (-torch.arange(0, hd, 2, dtype=torch.float64) / hd)
        ang = torch.arange(t, dtype=torch.float64)[:, None] * inv[None, :]
        cos, sin = ang.cos().float()[None, :, None, :], ang.sin().float()[None, :, None, :]
        a, b = x[..., 0::2], x[..., 1::2]
        return torch.stack((a * cos - b * sin, a * sin + b * cos), dim=-1).flatten(-2)

    def forward(self, ids):
        bsz, t = ids.shape
        nh = self.cfg["num_heads"]
        x = self.embedding[ids]
        for l in self.layers:
            n = self.norm(x, l.attn_norm)
            split = lambda y: y.view(bsz, t, nh, -1)
            q, k, v = self.rope(split(n @ l.wq)), self.rope(split(n @ l.wk)), split(n @ l.wv)
            att = F.scaled_dot_product_attention(
                q.transpose(1, 2), k.transpose(1, 2), v.transpose(1, 2), is_causal=True
            )
            x = x + att.transpose(1, 2).reshape(bsz, t, -1) @ l.wo
            n = self.norm(x, l.ffn_norm)
            x = x + (F.silu(n @ l.w1) * (n @ l.w3)) @ l.w2
        return self.norm(x, self.final_norm) @ self.lm_head


def write_model(model, path):
    tensors = [("embedding", model.embedding)]
    for i, l in enumerate(model.layers):
        for name, p in [("wq", l.wq), ("wk", l.wk), ("wv", l.wv), ("wo", l.wo),
                        ("ff_w1", l.w1), ("ff_w2", l.w2), ("ff_w3", l.w3),
                        ("attn_norm", l.attn_norm), ("ffn_norm", l.ffn_norm)]:
            tensors.append((f"layers.{i}.{name}", p))
    tensors += [("final_norm", model.final_norm), ("lm_head", model.lm_head)]

    entries, payload, offset = [], bytearray(), 0
    for name, p in tensors:
        data = p.detach().float().contiguous().numpy().astype("<f4").tobytes()
        entries.append({"name": name, "shape": list(p.shape), "byte_offset": offset})
        payload += data
        offset += len(data)
    header = {"format_version": 1, **model.cfg, "payload_bytes": len(payload), "tensors": entries}
    hbytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--calibration-out")
    ap.add_argument("--layers", type=int, default=8)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--ffn", type=int, default=192)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seq", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    random.seed(args.seed)
    torch.manual_seed(args.seed)
    docs = docstring_corpus()
    random.shuffle(docs)
    held_out, train = docs[:64], docs[64:]
    stream = torch.tensor(
        [b for d in train for b in [BOS, *d.encode(), EOS]], dtype=torch.long
    )
    print(f"{len(train)} docstrings, {len(stream)} training tokens")

    cfg = dict(num_layers=args.layers, hidden_dim=args.hidden, num_heads=args.heads,
               ffn_dim=args.ffn, vocab_size=VOCAB, max_seq_len=256, norm_eps=1e-5,
               rope_theta=10000.0)
    model = TinyLM(cfg)
    opt = torch.optim.AdamW(model.parameters(), lr=3e-3, weight_decay=0.01)
    sched = torch.optim.lr_scheduler.OneCycleLR(opt, max_lr=3e-3, total_steps=args.steps)
    for step in range(args.steps):
        starts = torch.randint(0, len(stream) - args.seq - 1, (args.batch,))
        chunk = torch.stack([stream[s:s + args.seq + 1] for s in starts])
        logits = model(chunk[:, :-1])
        loss = F.cross_entropy(logits.reshape(-1, VOCAB), chunk[:, 1:].reshape(-1))
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        opt.step()
        sched.step()
        if step % 200 == 0 or step == args.steps - 1:
            print(f"step {step} loss {loss.item():.3f}", flush=True)

    write_model(model, args.out)
    if args.calibration_out:
        pathlib.Path(args.calibration_out).write_text(
            "\n".join(d[:120] for d in held_out) + "\n"
        )
    # reference logits for a parity check against the Rust forward pass
    prompt = [BOS, *b"Return the"]
    with torch.no_grad():
        last = model(torch.tensor([prompt]))[0, -1]
    ref = {"prompt": prompt, "logits": [round(v, 6) for v in last.tolist()]}
    pathlib.Path(args.out).with_suffix(".reference.json").write_text(json.dumps(ref) + "\n")


if __name__ == "__main__":
    main()
