#!/usr/bin/env python3
"""Export torchvision ImageNet weights as <arch>.pt files for `tealeaf`.

The C++ side reads a plain {name: tensor} dict written by torch.save and
copies the backbone tensors by name; classifier tensors are ignored.

    python3 tools/export_pretrained_weights.py --out weights/
    TEALEAF_WEIGHTS_DIR=weights/ tealeaf train --config configs/densenet201.ini

--random writes randomly initialized weights instead (no download); the
test suite uses it to check that the C++ architectures match torchvision
tensor for tensor.
"""

import argparse
import os
import sys

ARCHS = {
    "densenet201": ("densenet201", "DenseNet201_Weights"),
    "mobilenet_v2": ("mobilenet_v2", "MobileNet_V2_Weights"),
    "inception_v3": ("inception_v3", "Inception_V3_Weights"),
}


def build(arch, random_init, seed):
    import torch
    import torchvision.models as tvm

    factory_name, weights_name = ARCHS[arch]
    factory = getattr(tvm, factory_name)
    kwargs = {"aux_logits": False, "init_weights": True} if arch == "inception_v3" else {}
    if random_init:
        torch.manual_seed(seed)
        model = factory(weights=None, **kwargs)
        # Randomize BN statistics too so the parity check covers buffers.
        with torch.no_grad():
            for name, buf in model.named_buffers():
                if name.endswith("running_mean"):
                    buf.normal_(0.0, 0.1)
                elif name.endswith("running_var"):
                    buf.uniform_(0.5, 1.5)
    else:
        weights = getattr(tvm, weights_name).IMAGENET1K_V1
        if arch == "inception_v3":
            kwargs = {"aux_logits": True}
        model = factory(weights=weights, **kwargs)
    model.eval()
    return model


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--arch", choices=sorted(ARCHS), action="append",
                   help="architecture to export (repeatable; default all)")
    p.add_argument("--random", action="store_true", help="random init, no download")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference-input", type=int, metavar="SIZE",
                   help="also save a fixed 1x3xSIZExSIZE input and the model's "
                        "pre-pool features for it (<arch>_reference.pt)")
    args = p.parse_args(argv)

    import torch

    os.makedirs(args.out, exist_ok=True)
    for arch in args.arch or sorted(ARCHS):
        model = build(arch, args.random, args.seed)
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        path = os.path.join(args.out, arch + ".pt")
        torch.save(state, path)
        print(f"wrote {path} ({len(state)} tensors)")
        if args.reference_input:
            torch.manual_seed(args.seed + 1)
            x = torch.rand(1, 3, args.reference_input, args.reference_input)
            with torch.no_grad():
                feats = features(model, arch, x)
            ref = os.path.join(args.out, arch + "_reference.pt")
            torch.save({"input": x, "features": feats}, ref)
            print(f"wrote {ref}")
    return 0


def features(model, arch, x):
    """Backbone output right before global pooling, as the C++ side defines it."""
    import torch.nn.functional as F

    if arch == "densenet201":
        return F.relu(model.features(x))
    if arch == "mobilenet_v2":
        return model.features(x)
    m = model
    x = m.Conv2d_1a_3x3(x)
    x = m.Conv2d_2a_3x3(x)
    x = m.Conv2d_2b_3x3(x)
    x = m.maxpool1(x)
    x = m.Conv2d_3b_1x1(x)
    x = m.Conv2d_4a_3x3(x)
    x = m.maxpool2(x)
    for name in ("Mixed_5b", "Mixed_5c", "Mixed_5d", "Mixed_6a", "Mixed_6b", "Mixed_6c",
                 "Mixed_6d", "Mixed_6e", "Mixed_7a", "Mixed_7b", "Mixed_7c"):
        x = getattr(m, name)(x)
    return x


if __name__ == "__main__":
    sys.exit(main())
