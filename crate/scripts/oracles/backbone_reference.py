"""Freezes torchvision MobileNet-V2 encoder outputs for the Rust backbone test.

Every `features.*` tensor is filled from a closed-form pattern keyed by its name, so
the Rust side can reproduce the weights without a weight file. Run from the repo root:

    python3 scripts/oracles/backbone_reference.py
"""

import json
import math

import torch
import torchvision

LEVEL_ENDS = [1, 3, 6, 13, 17]
INPUT = 64
PROBES = [0, 7, 101, 997, 4099]
OUT = "crates/core/tests/fixtures"


def pattern(name, shape):
    seed = sum(name.encode())
    n = math.prod(shape)
    base = torch.sin(0.7 * torch.arange(n, dtype=torch.float64) + 0.013 * seed).reshape(shape)
    leaf = name.rsplit(".", 1)[1]
    if leaf == "running_var":
        return 1.0 + 0.5 * base.abs()
    if leaf == "running_mean":
        return 0.1 * base
    if len(shape) == 1 and leaf == "weight":
        return 1.0 + 0.1 * base
    if leaf == "bias":
        return 0.1 * base
    fan_in = n // shape[0]
    return base * math.sqrt(2.0 / fan_in)


def main():
    model = torchvision.models.mobilenet_v2(weights=None).double().eval()
    state = model.state_dict()
    names = []
    with torch.no_grad():
        for name, t in state.items():
            if not name.startswith("features.") or name.endswith("num_batches_tracked"):
                continue
            if int(name.split(".")[1]) > 17:
                continue
            t.copy_(pattern(name, list(t.shape)))
            names.append({"name": name, "shape": list(t.shape)})
        x = torch.sin(0.05 * torch.arange(3 * INPUT * INPUT, dtype=torch.float64)).reshape(1, 3, INPUT, INPUT)
        levels = []
        h = x
        for i in range(18):
            h = model.features[i](h)
            if i in LEVEL_ENDS:
                flat = h.flatten()
                levels.append(
                    {
                        "shape": list(h.shape),
                        "sum": flat.sum().item(),
                        "sum_sq": (flat * flat).sum().item(),
                        "probes": [[p % flat.numel(), flat[p % flat.numel()].item()] for p in PROBES],
                    }
                )
    with open(f"{OUT}/mobilenet_v2_features.json", "w") as f:
        json.dump(names, f, indent=1)
    with open(f"{OUT}/backbone_levels.json", "w") as f:
        json.dump({"input": INPUT, "levels": levels}, f, indent=1)


if __name__ == "__main__":
    main()
