"""Export ImageNet-pretrained MobileNet-V2 encoder weights to safetensors.

Keeps the `features.*` tensors the encoder uses (including BatchNorm running statistics)
under their torchvision names. Requires torch, torchvision and safetensors; the
weights are downloaded by torchvision on first use.

    python scripts/export_mobilenet_v2.py weights/mobilenet_v2.safetensors
"""

import argparse

import torch
import torchvision
from safetensors.torch import save_file

# Blocks 0..17; block 18 is the 320->1280 head the encoder does not use.
ENCODER_BLOCKS = 18


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", help="output .safetensors path")
    args = parser.parse_args()

    weights = torchvision.models.MobileNet_V2_Weights.IMAGENET1K_V1
    model = torchvision.models.mobilenet_v2(weights=weights).eval()
    state = {}
    for name, tensor in model.state_dict().items():
        parts = name.split(".")
        if parts[0] != "features" or int(parts[1]) >= ENCODER_BLOCKS:
            continue
        if name.endswith("num_batches_tracked"):
            continue
        state[name] = tensor.detach().to(torch.float32).contiguous()
    save_file(state, args.out)
    print(f"wrote {len(state)} tensors to {args.out}")


if __name__ == "__main__":
    main()
