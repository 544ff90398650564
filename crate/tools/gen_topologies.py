#!/usr/bin/env python3
"""Regenerates the bundled topology files under crates/core/assets/."""
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "assets")


class Net:
    def __init__(self, name, input_shape):
        self.name = name
        self.input_shape = input_shape
        self.layers = []

    def add(self, name, kind, inputs, **kw):
        layer = {"name": name, "kind": kind, "inputs": list(inputs)}
        layer.update(kw)
        self.layers.append(layer)
        return name

    def conv(self, name, src, out, kernel, stride=1, pad=0, groups=1, relu=True):
        self.add(name, "Convolution", [src], out_channels=out, kernel=kernel,
                 stride=stride, pad=pad, **({"groups": groups} if groups != 1 else {}))
        if relu:
            return self.add(name + "_relu", "ReLU", [name])
        return name

    def dump(self):
        path = os.path.join(OUT, self.name + ".json")
        rows = ",\n".join("    " + json.dumps(l) for l in self.layers)
        with open(path, "w") as f:
            f.write('{\n  "name": %s,\n  "input_shape": %s,\n  "layers": [\n%s\n  ]\n}\n'
                    % (json.dumps(self.name), json.dumps(self.input_shape), rows))


def alexnet():
    n = Net("alexnet", [1, 3, 227, 227])
    x = n.conv("conv1", "data", 96, 11, stride=4)
    x = n.add("norm1", "LRN", [x], lrn_size=5, alpha=1e-4, beta=0.75)
    x = n.add("pool1", "MaxPool", [x], kernel=3, stride=2)
    x = n.conv("conv2", x, 256, 5, pad=2, groups=2)
    x = n.add("norm2", "LRN", [x], lrn_size=5, alpha=1e-4, beta=0.75)
    x = n.add("pool2", "MaxPool", [x], kernel=3, stride=2)
    x = n.conv("conv3", x, 384, 3, pad=1)
    x = n.conv("conv4", x, 384, 3, pad=1, groups=2)
    x = n.conv("conv5", x, 256, 3, pad=1, groups=2)
    x = n.add("pool5", "MaxPool", [x], kernel=3, stride=2)
    for i, src_out in ((6, 4096), (7, 4096)):
        n.add("fc%d" % i, "FullyConnected", [x], out_channels=src_out)
        n.add("relu%d" % i, "ReLU", ["fc%d" % i])
        x = n.add("drop%d" % i, "Dropout", ["relu%d" % i], ratio=0.5)
    x = n.add("fc8", "FullyConnected", [x], out_channels=1000)
    n.add("prob", "Softmax", [x])
    n.dump()


def vgg16():
    n = Net("vgg16", [1, 3, 224, 224])
    x = "data"
    cfg = [(1, 2, 64), (2, 2, 128), (3, 3, 256), (4, 3, 512), (5, 3, 512)]
    for stage, reps, ch in cfg:
        for r in range(1, reps + 1):
            x = n.conv("conv%d_%d" % (stage, r), x, ch, 3, pad=1)
        x = n.add("pool%d" % stage, "MaxPool", [x], kernel=2, stride=2)
    for i in (6, 7):
        n.add("fc%d" % i, "FullyConnected", [x], out_channels=4096)
        n.add("relu%d" % i, "ReLU", ["fc%d" % i])
        x = n.add("drop%d" % i, "Dropout", ["relu%d" % i], ratio=0.5)
    x = n.add("fc8", "FullyConnected", [x], out_channels=1000)
    n.add("prob", "Softmax", [x])
    n.dump()


def googlenet():
    n = Net("googlenet", [1, 3, 224, 224])
    x = n.conv("conv1", "data", 64, 7, stride=2, pad=3)
    x = n.add("pool1", "MaxPool", [x], kernel=3, stride=2, ceil_mode=True)
    x = n.add("norm1", "LRN", [x], lrn_size=5, alpha=1e-4, beta=0.75)
    x = n.conv("conv2_reduce", x, 64, 1)
    x = n.conv("conv2", x, 192, 3, pad=1)
    x = n.add("norm2", "LRN", [x], lrn_size=5, alpha=1e-4, beta=0.75)
    x = n.add("pool2", "MaxPool", [x], kernel=3, stride=2, ceil_mode=True)

    def inception(name, src, c1, c3r, c3, c5r, c5, pp):
        p = "inception_" + name
        b1 = n.conv(p + "_1x1", src, c1, 1)
        b2 = n.conv(p + "_3x3_reduce", src, c3r, 1)
        b2 = n.conv(p + "_3x3", b2, c3, 3, pad=1)
        b3 = n.conv(p + "_5x5_reduce", src, c5r, 1)
        b3 = n.conv(p + "_5x5", b3, c5, 5, pad=2)
        b4 = n.add(p + "_pool", "MaxPool", [src], kernel=3, stride=1, pad=1)
        b4 = n.conv(p + "_pool_proj", b4, pp, 1)
        return n.add(p + "_output", "Concat", [b1, b2, b3, b4])

    x = inception("3a", x, 64, 96, 128, 16, 32, 32)
    x = inception("3b", x, 128, 128, 192, 32, 96, 64)
    x = n.add("pool3", "MaxPool", [x], kernel=3, stride=2, ceil_mode=True)
    x = inception("4a", x, 192, 96, 208, 16, 48, 64)
    x = inception("4b", x, 160, 112, 224, 24, 64, 64)
    x = inception("4c", x, 128, 128, 256, 24, 64, 64)
    x = inception("4d", x, 112, 144, 288, 32, 64, 64)
    x = inception("4e", x, 256, 160, 320, 32, 128, 128)
    x = n.add("pool4", "MaxPool", [x], kernel=3, stride=2, ceil_mode=True)
    x = inception("5a", x, 256, 160, 320, 32, 128, 128)
    x = inception("5b", x, 384, 192, 384, 48, 128, 128)
    x = n.add("pool5", "AvgPool", [x], kernel=7, stride=1)
    x = n.add("drop5", "Dropout", [x], ratio=0.4)
    x = n.add("loss3_classifier", "FullyConnected", [x], out_channels=1000)
    n.add("prob", "Softmax", [x])
    n.dump()


def resnet18():
    # Batch-norm folded into each convolution's weights and bias.
    n = Net("resnet18", [1, 3, 224, 224])
    x = n.conv("conv1", "data", 64, 7, stride=2, pad=3)
    x = n.add("pool1", "MaxPool", [x], kernel=3, stride=2, pad=1)
    ch_in = 64
    for stage, ch in ((2, 64), (3, 128), (4, 256), (5, 512)):
        for blk in ("a", "b"):
            p = "res%d%s" % (stage, blk)
            stride = 2 if (blk == "a" and stage > 2) else 1
            y = n.conv(p + "_branch2a", x, ch, 3, stride=stride, pad=1)
            y = n.conv(p + "_branch2b", y, ch, 3, pad=1, relu=False)
            if ch_in != ch:
                sc = n.conv(p + "_branch1", x, ch, 1, stride=stride, relu=False)
            else:
                sc = x
            n.add(p, "EltwiseAdd", [sc, y])
            x = n.add(p + "_relu", "ReLU", [p])
            ch_in = ch
    x = n.add("pool5", "AvgPool", [x], kernel=7, stride=1)
    x = n.add("fc1000", "FullyConnected", [x], out_channels=1000)
    n.add("prob", "Softmax", [x])
    n.dump()


if __name__ == "__main__":
    alexnet()
    vgg16()
    googlenet()
    resnet18()
