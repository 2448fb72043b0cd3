#!/usr/bin/env python3
"""Emit the built-in architecture manifests under data/arch/.

Each manifest lists layers in topological order plus explicit producer ->
consumer edges. Run from the repository root:

    python3 tools/gen_arch_manifests.py data/arch
"""

import json
import os
import sys

SCHEMA = "sketchprune-manifest-v1"


class Builder:
    def __init__(self, name, input_spatial, input_channels, num_classes):
        self.name = name
        self.input_spatial = input_spatial
        self.input_channels = input_channels
        self.num_classes = num_classes
        self.layers = []
        self.edges = []
        self.channels = {}

    def _add(self, layer, inputs):
        self.layers.append(layer)
        for src in inputs:
            self.edges.append([src, layer["name"]])
        self.channels[layer["name"]] = layer["out_channels"]
        return layer["name"]

    def _in_channels(self, inputs):
        if not inputs:
            return self.input_channels
        return self.channels[inputs[0]]

    def conv(self, name, src, out_ch, k, stride=1, pad=None, bias=False,
             prunable=True, group=""):
        inputs = [src] if src else []
        kh, kw = (k, k) if isinstance(k, int) else k
        if pad is None:
            pad = kh // 2
        return self._add({
            "name": name, "kind": "conv",
            "in_channels": self._in_channels(inputs), "out_channels": out_ch,
            "kernel_h": kh, "kernel_w": kw, "stride": stride, "padding": pad,
            "bias": bias, "prunable": prunable, "prune_group": group,
        }, inputs)

    def bn(self, name, src):
        c = self.channels[src]
        return self._add({
            "name": name, "kind": "bn", "in_channels": c, "out_channels": c,
            "kernel_h": 1, "kernel_w": 1, "stride": 1, "padding": 0,
            "prunable": False, "prune_group": "",
        }, [src])

    def pool(self, name, src, k=1, stride=1, pad=0, global_pool=False,
             out_ch=None, group=""):
        # out_ch > in_channels zero-pads the channel axis (identity shortcut
        # across a width change).
        c = self.channels[src]
        return self._add({
            "name": name, "kind": "pool", "in_channels": c,
            "out_channels": out_ch or c, "kernel_h": k, "kernel_w": k,
            "stride": stride, "padding": pad, "global": global_pool,
            "prunable": False, "prune_group": group,
        }, [src])

    def add(self, name, srcs):
        c = self.channels[srcs[0]]
        return self._add({
            "name": name, "kind": "add", "in_channels": c, "out_channels": c,
            "kernel_h": 1, "kernel_w": 1, "stride": 1, "padding": 0,
            "prunable": False, "prune_group": "",
        }, srcs)

    def concat(self, name, srcs):
        c = sum(self.channels[s] for s in srcs)
        return self._add({
            "name": name, "kind": "concat", "in_channels": c,
            "out_channels": c, "kernel_h": 1, "kernel_w": 1, "stride": 1,
            "padding": 0, "prunable": False, "prune_group": "",
        }, srcs)

    def fc(self, name, src, out):
        return self._add({
            "name": name, "kind": "fc", "in_channels": self.channels[src],
            "out_channels": out, "kernel_h": 1, "kernel_w": 1, "stride": 1,
            "padding": 0, "bias": True, "prunable": False, "prune_group": "",
        }, [src])

    def manifest(self):
        return {
            "schema": SCHEMA,
            "name": self.name,
            "input_spatial": list(self.input_spatial),
            "input_channels": self.input_channels,
            "num_classes": self.num_classes,
            "layers": self.layers,
            "edges": self.edges,
        }


def cifar_resnet(depth):
    # Basic-block ResNet for 32x32 inputs. Downsampling shortcuts subsample
    # spatially and zero-pad channels (no weights); every block output in a
    # stage shares one prune group.
    n = (depth - 2) // 6
    b = Builder(f"resnet{depth}", (32, 32), 3, 10)
    x = b.conv("conv1", None, 16, 3, prunable=False, group="stage1")
    x = b.bn("bn1", x)
    in_planes = 16
    for stage, planes in enumerate((16, 32, 64), start=1):
        group = f"stage{stage}"
        for blk in range(n):
            stride = 2 if (stage > 1 and blk == 0) else 1
            p = f"layer{stage}.{blk}"
            y = b.conv(f"{p}.conv1", x, planes, 3, stride=stride)
            y = b.bn(f"{p}.bn1", y)
            y = b.conv(f"{p}.conv2", y, planes, 3, prunable=False, group=group)
            y = b.bn(f"{p}.bn2", y)
            if stride != 1 or in_planes != planes:
                s = b.pool(f"{p}.shortcut", x, k=1, stride=stride,
                           out_ch=planes, group=group)
            else:
                s = x
            x = b.add(f"{p}.add", [y, s])
            in_planes = planes
    x = b.pool("avgpool", x, global_pool=True)
    b.fc("fc", x, 10)
    return b.manifest()


def resnet50():
    b = Builder("resnet50", (224, 224), 3, 1000)
    x = b.conv("conv1", None, 64, 7, stride=2, pad=3, prunable=False)
    x = b.bn("bn1", x)
    x = b.pool("maxpool", x, k=3, stride=2, pad=1)
    for stage, (planes, blocks) in enumerate(
            ((64, 3), (128, 4), (256, 6), (512, 3)), start=1):
        group = f"stage{stage}"
        for blk in range(blocks):
            stride = 2 if (stage > 1 and blk == 0) else 1
            p = f"layer{stage}.{blk}"
            y = b.conv(f"{p}.conv1", x, planes, 1, pad=0)
            y = b.bn(f"{p}.bn1", y)
            y = b.conv(f"{p}.conv2", y, planes, 3, stride=stride)
            y = b.bn(f"{p}.bn2", y)
            y = b.conv(f"{p}.conv3", y, planes * 4, 1, pad=0, prunable=False,
                       group=group)
            y = b.bn(f"{p}.bn3", y)
            if blk == 0:
                s = b.conv(f"{p}.downsample", x, planes * 4, 1, stride=stride,
                           pad=0, prunable=False, group=group)
                s = b.bn(f"{p}.downsample_bn", s)
            else:
                s = x
            x = b.add(f"{p}.add", [y, s])
    x = b.pool("avgpool", x, global_pool=True)
    b.fc("fc", x, 1000)
    return b.manifest()


def googlenet():
    # CIFAR GoogLeNet: 3x3 stem with 192 channels, the 5x5 branch realised
    # as two stacked 3x3 convolutions, biased convolutions followed by BN.
    b = Builder("googlenet", (32, 32), 3, 10)

    def cbr(name, src, out, k, prunable=True):
        y = b.conv(name, src, out, k, bias=True, prunable=prunable)
        return b.bn(name + "_bn", y)

    x = cbr("pre_layers", None, 192, 3, prunable=False)
    cfg = [
        ("a3", 64, 96, 128, 16, 32, 32),
        ("b3", 128, 128, 192, 32, 96, 64),
        "pool",
        ("a4", 192, 96, 208, 16, 48, 64),
        ("b4", 160, 112, 224, 24, 64, 64),
        ("c4", 128, 128, 256, 24, 64, 64),
        ("d4", 112, 144, 288, 32, 64, 64),
        ("e4", 256, 160, 320, 32, 128, 128),
        "pool",
        ("a5", 256, 160, 320, 32, 128, 128),
        ("b5", 384, 192, 384, 48, 128, 128),
    ]
    npool = 0
    for entry in cfg:
        if entry == "pool":
            npool += 1
            x = b.pool(f"maxpool{npool}", x, k=3, stride=2, pad=1)
            continue
        name, n1, n3r, n3, n5r, n5, pp = entry
        # Branch outputs feeding the concat are non-prunable so the concat
        # width (and the next block's input) stays fixed by default.
        b1 = cbr(f"{name}.b1", x, n1, 1, prunable=False)
        b2 = cbr(f"{name}.b2_reduce", x, n3r, 1)
        b2 = cbr(f"{name}.b2", b2, n3, 3, prunable=False)
        b3 = cbr(f"{name}.b3_reduce", x, n5r, 1)
        b3 = cbr(f"{name}.b3_mid", b3, n5, 3)
        b3 = cbr(f"{name}.b3", b3, n5, 3, prunable=False)
        b4 = b.pool(f"{name}.b4_pool", x, k=3, stride=1, pad=1)
        b4 = cbr(f"{name}.b4", b4, pp, 1, prunable=False)
        x = b.concat(f"{name}.concat", [b1, b2, b3, b4])
    x = b.pool("avgpool", x, global_pool=True)
    b.fc("fc", x, 10)
    return b.manifest()


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/arch"
    os.makedirs(out, exist_ok=True)
    for m in (cifar_resnet(56), cifar_resnet(110), resnet50(), googlenet()):
        with open(os.path.join(out, m["name"] + ".json"), "w") as f:
            json.dump(m, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
