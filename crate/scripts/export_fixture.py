#!/usr/bin/env python3
"""Train, quantize and export the small MNIST fixture used by the test suites.

Writes into the output directory:
  lenet_mnist.axqm   quantized model (AXQM)
  mnist_eval.axds    2,500 held-out images in 25 batches of 100 (AXDS)
  reference.json     values computed by the pure-integer reference interpreter
                     below (per-batch correct counts, multiplication counts,
                     first-layer weight histogram)

Input: the 5,000-image MNIST sample distributed as `mnist_5k.csv.gz`
(label in the last column).
"""
import argparse
import gzip
import json
import math
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

EVAL_COUNT = 2500
BATCH = 100
CALIB_BATCHES = 10
# Activations are clipped to [0, ACT_CAP] during training so that min/max
# calibration spreads them over the whole uint8 range.
ACT_CAP = 2.0


def load(path, seed):
    data = np.loadtxt(gzip.open(path, "rt"), delimiter=",", dtype=np.int64)
    rng = np.random.RandomState(seed)
    order = rng.permutation(len(data))
    data = data[order]
    images = data[:, :-1].astype(np.uint8).reshape(-1, 1, 28, 28)
    labels = data[:, -1].astype(np.uint8)
    return images, labels


class LeNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 6, 5)
        self.conv2 = nn.Conv2d(6, 12, 5)
        self.fc = nn.Linear(192, 10)

    def forward(self, x, taps=None):
        x = torch.clamp(self.conv1(x), 0.0, ACT_CAP)
        if taps is not None:
            taps.append(x)
        x = F.max_pool2d(x, 2)
        x = torch.clamp(self.conv2(x), 0.0, ACT_CAP)
        if taps is not None:
            taps.append(x)
        x = F.max_pool2d(x, 2)
        x = x.flatten(1)
        x = self.fc(x)
        if taps is not None:
            taps.append(x)
        return x


def shift_augment(x, gen):
    dx, dy = torch.randint(-2, 3, (2,), generator=gen).tolist()
    return torch.roll(x, shifts=(dy, dx), dims=(2, 3))


def train(images, labels, seed, epochs):
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    gen = torch.Generator().manual_seed(seed)
    model = LeNet()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, epochs)
    x = torch.tensor(images, dtype=torch.float32) / 255.0
    y = torch.tensor(labels, dtype=torch.int64)
    for _ in range(epochs):
        perm = torch.randperm(len(x), generator=gen)
        for i in range(0, len(x), 50):
            idx = perm[i:i + 50]
            xb = shift_augment(x[idx], gen)
            loss = F.cross_entropy(model(xb), y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        sched.step()
    return model


def quant_params(lo, hi):
    lo = min(lo, 0.0)
    hi = max(hi, 0.0)
    scale = (hi - lo) / 255.0
    if scale == 0.0:
        scale = 1.0
    zp = int(np.clip(round(-lo / scale), 0, 255))
    return scale, zp


def requant_fixed(m):
    mant, exp = math.frexp(m)
    mult = int(round(mant * (1 << 31)))
    if mult == 1 << 31:
        mult //= 2
        exp += 1
    return mult, -exp


def round_shift(prod, n):
    half = np.int64(1) << (n - 1)
    pos = (prod + half) >> n
    neg = -((-prod + half) >> n)
    return np.where(prod >= 0, pos, neg)


def requantize(acc, layer):
    acc = acc.astype(np.int64)
    assert np.all(acc <= 2**31 - 1) and np.all(acc >= -(2**31))
    r = round_shift(acc * layer["requant"]["multiplier"], 31 + layer["requant"]["shift"])
    return np.clip(r + layer["output"]["zero_point"], 0, 255).astype(np.int64)


def truncation_table(k):
    v = np.arange(256, dtype=np.int64)
    mask = 0xFF & ~((1 << k) - 1)
    return np.outer(v & mask, v & mask)


def mac(wq, patches, table, w_zp, a_zp):
    # wq: (O, K) uint8 values, patches: (B, P, K). Returns (B, O, P) int64.
    out = np.zeros((patches.shape[0], wq.shape[0], patches.shape[1]), dtype=np.int64)
    k = wq.shape[1]
    sum_a = patches.sum(axis=2)
    for o in range(wq.shape[0]):
        prods = table[wq[o][None, None, :], patches]
        out[:, o, :] = prods.sum(axis=2) - a_zp * wq[o].sum() - w_zp * sum_a + k * w_zp * a_zp
    return out


def reference_infer(manifest, blobs, images, tables):
    """Pure-integer interpreter. `tables[i]` is the 256x256 product table for
    multiplier-bearing layer i."""
    x = images.astype(np.int64)
    layer_idx = 0
    for layer in manifest["layers"]:
        kind = layer["kind"]
        if kind == "conv2d":
            w = blobs[layer["weight"]["offset"]:layer["weight"]["offset"] + layer["weight"]["len"]]
            w = np.frombuffer(w, dtype=np.uint8).astype(np.int64)
            oc, ic, kh, kw = layer["weight"]["shape"]
            b = np.frombuffer(blobs[layer["bias"]["offset"]:layer["bias"]["offset"] + 4 * oc], dtype="<i4").astype(np.int64)
            n, c, h, wd = x.shape
            assert layer["padding"] == 0
            s = layer["stride"]
            oh, ow = (h - kh) // s + 1, (wd - kw) // s + 1
            patches = np.zeros((n, oh * ow, ic * kh * kw), dtype=np.int64)
            for yy in range(oh):
                for xx in range(ow):
                    patches[:, yy * ow + xx, :] = x[:, :, yy * s:yy * s + kh, xx * s:xx * s + kw].reshape(n, -1)
            acc = mac(w.reshape(oc, -1), patches, tables[layer_idx], layer["weight"]["zero_point"], layer["input_zero_point"])
            acc = acc + b[None, :, None]
            x = requantize(acc, layer).reshape(n, oc, oh, ow)
            layer_idx += 1
        elif kind == "dense":
            w = np.frombuffer(blobs[layer["weight"]["offset"]:layer["weight"]["offset"] + layer["weight"]["len"]], dtype=np.uint8).astype(np.int64)
            of, inf = layer["weight"]["shape"]
            b = np.frombuffer(blobs[layer["bias"]["offset"]:layer["bias"]["offset"] + 4 * of], dtype="<i4").astype(np.int64)
            patches = x.reshape(x.shape[0], 1, -1)
            acc = mac(w.reshape(of, inf), patches, tables[layer_idx], layer["weight"]["zero_point"], layer["input_zero_point"])[:, :, 0]
            x = requantize(acc + b[None, :], layer)
            layer_idx += 1
        elif kind == "relu":
            x = np.maximum(x, layer["zero_point"])
        elif kind == "maxpool2d":
            k, s = layer["kernel"], layer["stride"]
            n, c, h, wd = x.shape
            oh, ow = (h - k) // s + 1, (wd - k) // s + 1
            out = np.zeros((n, c, oh, ow), dtype=np.int64)
            for yy in range(oh):
                for xx in range(ow):
                    out[:, :, yy, xx] = x[:, :, yy * s:yy * s + k, xx * s:xx * s + k].max(axis=(2, 3))
            x = out
        elif kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        else:
            raise ValueError(kind)
    return np.argmax(x, axis=1)


def export(model, calib, out_dir):
    taps = []
    with torch.no_grad():
        model(torch.tensor(calib, dtype=torch.float32) / 255.0, taps)
    in_scale, in_zp = 1.0 / 255.0, 0
    layers = []
    blobs = bytearray()
    modules = [model.conv1, model.conv2, model.fc]
    cur_scale, cur_zp = in_scale, in_zp
    for i, (mod, tap) in enumerate(zip(modules, taps)):
        w = mod.weight.detach().numpy().astype(np.float64)
        b = mod.bias.detach().numpy().astype(np.float64)
        w_scale, w_zp = quant_params(float(w.min()), float(w.max()))
        wq = np.clip(np.round(w / w_scale) + w_zp, 0, 255).astype(np.uint8)
        bq = np.round(b / (cur_scale * w_scale)).astype("<i4")
        o_scale, o_zp = quant_params(float(tap.min()), float(tap.max()))
        mult, shift = requant_fixed(cur_scale * w_scale / o_scale)
        w_off = len(blobs)
        blobs += wq.tobytes()
        b_off = len(blobs)
        blobs += bq.tobytes()
        entry = {
            "weight": {"shape": list(wq.shape), "scale": w_scale, "zero_point": w_zp, "offset": w_off, "len": int(wq.size)},
            "bias": {"offset": b_off, "len": int(bq.size)},
            "input_zero_point": cur_zp,
            "output": {"scale": o_scale, "zero_point": o_zp},
            "requant": {"multiplier": mult, "shift": shift},
            "approximate": True,
        }
        if i < 2:
            entry.update({"kind": "conv2d", "stride": 1, "padding": 0})
            layers.append(entry)
            layers.append({"kind": "relu", "zero_point": o_zp})
            layers.append({"kind": "maxpool2d", "kernel": 2, "stride": 2})
            if i == 1:
                layers.append({"kind": "flatten"})
        else:
            entry.update({"kind": "dense"})
            layers.append(entry)
        cur_scale, cur_zp = o_scale, o_zp
    manifest = {
        "name": "lenet-mnist",
        "input_shape": [1, 28, 28],
        "input_scale": in_scale,
        "input_zero_point": in_zp,
        "class_count": 10,
        "layers": layers,
    }
    text = json.dumps(manifest, indent=1).encode("utf-8")
    with open(f"{out_dir}/lenet_mnist.axqm", "wb") as f:
        f.write(b"AXQM" + struct.pack("<II", 1, len(text)) + text + bytes(blobs))
    return manifest, bytes(blobs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--csv", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()

    images, labels = load(args.csv, args.seed)
    tr_x, tr_y = images[:-EVAL_COUNT], labels[:-EVAL_COUNT]
    ev_x, ev_y = images[-EVAL_COUNT:], labels[-EVAL_COUNT:]
    model = train(tr_x, tr_y, args.seed, args.epochs)
    with torch.no_grad():
        pred = model(torch.tensor(ev_x, dtype=torch.float32) / 255.0).argmax(1).numpy()
    float_acc = float((pred == ev_y).mean())

    manifest, blobs = export(model, tr_x[:CALIB_BATCHES * BATCH], args.out)

    with open(f"{args.out}/mnist_eval.axds", "wb") as f:
        f.write(b"AXDS" + struct.pack("<III", EVAL_COUNT, 28 * 28, 10))
        f.write(ev_x.tobytes())
        f.write(ev_y.tobytes())

    runs = {"exact": 0, "trunc2": 2, "trunc4": 4}
    correct = {}
    for name, k in runs.items():
        table = truncation_table(k)
        counts = []
        for bi in range(EVAL_COUNT // BATCH):
            sl = slice(bi * BATCH, (bi + 1) * BATCH)
            p = reference_infer(manifest, blobs, ev_x[sl], [table] * 3)
            counts.append(int((p == ev_y[sl]).sum()))
        correct[name] = counts
    exact_acc = sum(correct["exact"]) / EVAL_COUNT
    if exact_acc < 0.95:
        raise SystemExit(f"exact-quantized accuracy {exact_acc:.4f} below 0.95 floor")

    conv1 = manifest["layers"][0]
    w = np.frombuffer(blobs[conv1["weight"]["offset"]:conv1["weight"]["offset"] + conv1["weight"]["len"]], dtype=np.uint8)
    hist = np.bincount(w, minlength=256) * (24 * 24)
    reference = {
        "float_accuracy": float_acc,
        "exact_accuracy": exact_acc,
        "batch_size": BATCH,
        "correct_per_batch": correct,
        "multiplications_per_layer": [1 * 6 * 25 * 24 * 24, 6 * 12 * 25 * 8 * 8, 192 * 10],
        "first_layer_histogram": [int(v) for v in hist],
    }
    with open(f"{args.out}/reference.json", "w") as f:
        json.dump(reference, f, indent=1)
    print(json.dumps({k: reference[k] for k in ("float_accuracy", "exact_accuracy")}))
    print({k: sum(v) for k, v in correct.items()})


if __name__ == "__main__":
    main()
