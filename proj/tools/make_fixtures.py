#!/usr/bin/env python3
"""Train the reference models on the 8x8 digits set and write them as fixtures.

Writes into fixtures/ (or the directory given on the command line):

  mlp/model.json        64 -> 32 -> 16 -> 10 dense network with ReLUs
  cnn/model.json        two 3x3 convolutions and a dense classifier
  digits_calib.json     128 calibration samples from the training split
  digits_train.json     training split
  digits_test.json      held-out split

Pixel values are scaled to [0, 1].
"""

import argparse
import json
import os

import numpy as np
import torch
from sklearn.datasets import load_digits


def write_f32(path, array):
    np.asarray(array, dtype="<f4").tofile(path)


def save_dataset(out_dir, stem, inputs, labels):
    write_f32(os.path.join(out_dir, stem + ".inputs.f32"), inputs)
    write_f32(os.path.join(out_dir, stem + ".labels.f32"), labels.astype(np.float32))
    doc = {
        "format": "logposit-dataset/1",
        "inputs": {"file": stem + ".inputs.f32", "shape": list(inputs.shape)},
        "labels": {"file": stem + ".labels.f32"},
    }
    with open(os.path.join(out_dir, stem + ".json"), "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def save_model(out_dir, name, input_shape, layers):
    os.makedirs(out_dir, exist_ok=True)
    doc = {"format": "logposit-model/1", "name": name, "input_shape": list(input_shape), "layers": []}
    for spec, module in layers:
        entry = dict(spec)
        if module is not None:
            wf = entry["name"] + ".weight.f32"
            bf = entry["name"] + ".bias.f32"
            write_f32(os.path.join(out_dir, wf), module.weight.detach().numpy())
            write_f32(os.path.join(out_dir, bf), module.bias.detach().numpy())
            entry["weight"] = wf
            entry["bias"] = bf
        doc["layers"].append(entry)
    with open(os.path.join(out_dir, "model.json"), "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def train(model, x, y, epochs, lr):
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(0)
    for _ in range(epochs):
        perm = torch.randperm(len(x), generator=gen)
        for i in range(0, len(x), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            loss.backward()
            opt.step()


def accuracy(model, x, y):
    with torch.no_grad():
        return (model(x).argmax(dim=1) == y).float().mean().item()


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", nargs="?", default=os.path.join(os.path.dirname(__file__), "..", "fixtures"))
    ap.add_argument("--epochs", type=int, default=60)
    args = ap.parse_args()
    out = os.path.abspath(args.out)
    os.makedirs(out, exist_ok=True)

    torch.manual_seed(0)
    np.random.seed(0)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)

    digits = load_digits()
    x = (digits.data / 16.0).astype(np.float32)
    y = digits.target.astype(np.int64)
    perm = np.random.RandomState(0).permutation(len(x))
    x, y = x[perm], y[perm]
    n_test = 360
    x_test, y_test = x[:n_test], y[:n_test]
    x_train, y_train = x[n_test:], y[n_test:]

    save_dataset(out, "digits_train", x_train, y_train)
    save_dataset(out, "digits_test", x_test, y_test)
    save_dataset(out, "digits_calib", x_train[:128], y_train[:128])
    save_dataset(out, "digits_calib_img", x_train[:128].reshape(-1, 1, 8, 8), y_train[:128])
    save_dataset(out, "digits_test_img", x_test.reshape(-1, 1, 8, 8), y_test)

    xt, yt = torch.from_numpy(x_train), torch.from_numpy(y_train)
    xv, yv = torch.from_numpy(x_test), torch.from_numpy(y_test)

    fc1, fc2, fc3 = torch.nn.Linear(64, 32), torch.nn.Linear(32, 16), torch.nn.Linear(16, 10)
    mlp = torch.nn.Sequential(fc1, torch.nn.ReLU(), fc2, torch.nn.ReLU(), fc3)
    train(mlp, xt, yt, args.epochs, 3e-3)
    save_model(os.path.join(out, "mlp"), "digits-mlp", [64], [
        ({"kind": "dense", "name": "fc1", "in": 64, "out": 32}, fc1),
        ({"kind": "relu", "name": "relu1"}, None),
        ({"kind": "dense", "name": "fc2", "in": 32, "out": 16}, fc2),
        ({"kind": "relu", "name": "relu2"}, None),
        ({"kind": "dense", "name": "fc3", "in": 16, "out": 10}, fc3),
    ])
    print(f"mlp test accuracy {accuracy(mlp, xv, yv):.4f}")

    c1 = torch.nn.Conv2d(1, 4, 3, padding=1)
    c2 = torch.nn.Conv2d(4, 8, 3, stride=2, padding=1)
    fc = torch.nn.Linear(128, 10)
    cnn = torch.nn.Sequential(c1, torch.nn.ReLU(), c2, torch.nn.ReLU(), torch.nn.Flatten(), fc)
    xi, xvi = xt.reshape(-1, 1, 8, 8), xv.reshape(-1, 1, 8, 8)
    train(cnn, xi, yt, args.epochs // 2, 3e-3)
    save_model(os.path.join(out, "cnn"), "digits-cnn", [1, 8, 8], [
        ({"kind": "conv2d", "name": "conv1", "in_channels": 1, "out_channels": 4, "kernel": 3,
          "stride": 1, "padding": 1}, c1),
        ({"kind": "relu", "name": "relu1"}, None),
        ({"kind": "conv2d", "name": "conv2", "in_channels": 4, "out_channels": 8, "kernel": 3,
          "stride": 2, "padding": 1}, c2),
        ({"kind": "relu", "name": "relu2"}, None),
        ({"kind": "flatten", "name": "flatten"}, None),
        ({"kind": "dense", "name": "fc", "in": 128, "out": 10}, fc),
    ])
    print(f"cnn test accuracy {accuracy(cnn, xvi, yv):.4f}")


if __name__ == "__main__":
    main()
