#!/usr/bin/env python3
"""Write profiles/resnet18.json from ResNet18 (32x32x3 input) layer shapes.

Cut layer k means the vehicle runs the first k stages of the block split:
  stage 1      stem conv3x3(3->64) + BN
  stages 2-3   residual blocks at 64 channels, 32x32
  stages 4-5   residual blocks at 128 channels, 16x16 (stage 4 downsamples)
  stages 6-7   residual blocks at 256 channels, 8x8   (stage 6 downsamples)
  stages 8-9   residual blocks at 512 channels, 4x4   (stage 8 downsamples);
               stage 9 also carries global pooling and the 10-way classifier.

Forward FLOPs per cut are taken as given; this script only
derives activation and parameter sizes.
Every element is stored as a 32-bit float.
"""

import json
import pathlib
import sys

BITS_PER_ELEMENT = 32
NUM_CLASSES = 10

FWD_VEHICLE_GFLOPS = [0.00, 0.99, 2.89, 4.79, 6.27, 8.16, 9.64, 11.53, 13.00, 14.89]
FWD_SERVER_GFLOPS = [14.89, 13.90, 12.00, 10.10, 8.62, 6.72, 5.25, 3.36, 1.89, 0.00]


def conv_params(cin, cout, k):
    return cin * cout * k * k


def bn_params(c):
    return 2 * c


def basic_block_params(cin, cout):
    p = conv_params(cin, cout, 3) + bn_params(cout)
    p += conv_params(cout, cout, 3) + bn_params(cout)
    if cin != cout:
        p += conv_params(cin, cout, 1) + bn_params(cout)
    return p


def stages():
    """(parameter count, output shape) for stages 1..9."""
    out = [(conv_params(3, 64, 3) + bn_params(64), (64, 32, 32))]
    plan = [(64, 64, 32), (64, 64, 32),
            (64, 128, 16), (128, 128, 16),
            (128, 256, 8), (256, 256, 8),
            (256, 512, 4), (512, 512, 4)]
    for i, (cin, cout, hw) in enumerate(plan):
        params = basic_block_params(cin, cout)
        shape = (cout, hw, hw)
        if i == len(plan) - 1:
            params += 512 * NUM_CLASSES + NUM_CLASSES
            shape = (NUM_CLASSES,)
        out.append((params, shape))
    return out


def elements(shape):
    n = 1
    for s in shape:
        n *= s
    return n


def build():
    smashed = [elements((3, 32, 32)) * BITS_PER_ELEMENT]
    model = [0]
    cumulative = 0
    for params, shape in stages():
        cumulative += params
        smashed.append(elements(shape) * BITS_PER_ELEMENT)
        model.append(cumulative * BITS_PER_ELEMENT)
    assert cumulative == 11173962, cumulative
    return {
        "name": "resnet18-cifar-blocksplit",
        "units": {
            "fwd_vehicle_flops": "FLOPs per sample (forward pass, vehicle side)",
            "fwd_server_flops": "FLOPs per sample (forward pass, EC side)",
            "smashed_bits": "bits per sample",
            "smashed_grad_bits": "bits per sample",
            "vehicle_model_bits": "bits",
            "flops_per_cycle": "FLOPs per CPU cycle",
            "bwd_factor": "backward workload / forward workload",
            "sample_bits": "bits per raw input sample",
            "full_model_bits": "bits",
        },
        "cut_layers": list(range(10)),
        "fwd_vehicle_flops": [round(g * 1e9) for g in FWD_VEHICLE_GFLOPS],
        "fwd_server_flops": [round(g * 1e9) for g in FWD_SERVER_GFLOPS],
        "bwd_factor": 2.0,
        "smashed_bits": smashed,
        "smashed_grad_bits": list(smashed),
        "vehicle_model_bits": model,
        "flops_per_cycle": 16.0,
        "sample_bits": 32 * 32 * 3 * 8,
        "full_model_bits": model[-1],
    }


def main():
    root = pathlib.Path(__file__).resolve().parent.parent
    target = root / "profiles" / "resnet18.json"
    if len(sys.argv) > 1:
        target = pathlib.Path(sys.argv[1])
    target.write_text(json.dumps(build(), indent=2) + "\n")
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
