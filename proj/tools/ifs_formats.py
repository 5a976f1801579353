"""Writers for the feature-extractor side of the interchange formats.

A detector front end uses these to hand conv5 maps, region proposals and a
dataset manifest to the C++ engine. Running the module directly writes a small
random dataset:

    python3 ifs_formats.py demo OUT_DIR [--images N] [--channels C] [--seed S]
"""

import argparse
import json
import os
import struct
import sys

import numpy as np

FEATURE_MAGIC = b"IFSM"
FEATURE_VERSION = 1
DTYPE_F32 = 0
HAS_CLASS_SCORES = 1 << 0
HAS_OBJECTNESS = 1 << 1


def encode_feature_map(image_id, data, stride):
    """data: array of shape (C, H, W), stored channel-major as f32."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 3 or 0 in arr.shape:
        raise ValueError("feature map must be a non-empty (C, H, W) array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature map holds non-finite values")
    if stride <= 0:
        raise ValueError("stride must be positive")
    c, h, w = arr.shape
    ident = image_id.encode("utf-8")
    header = FEATURE_MAGIC + struct.pack("<HHIIIII", FEATURE_VERSION, DTYPE_F32, c, h, w, stride, len(ident))
    return header + ident + arr.tobytes()


def encode_proposals(proposals, num_classes=0):
    """proposals: iterable of dicts with 'box' and optional 'objectness', 'class_scores'."""
    proposals = list(proposals)
    out = [struct.pack("<I", len(proposals))]
    for i, p in enumerate(proposals):
        x0, y0, x1, y1 = (float(v) for v in p["box"])
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"proposal {i}: degenerate box {p['box']}")
        flags = 0
        scores = p.get("class_scores")
        if scores is not None:
            if num_classes == 0 or len(scores) != num_classes:
                raise ValueError(f"proposal {i}: {len(scores)} class scores but K = {num_classes}")
            flags |= HAS_CLASS_SCORES
        objectness = p.get("objectness")
        if objectness is not None:
            flags |= HAS_OBJECTNESS
        out.append(struct.pack("<5fH", x0, y0, x1, y1, objectness or 0.0, flags))
        if scores is not None:
            out.append(np.asarray(scores, dtype="<f4").tobytes())
    return b"".join(out)


def write_bytes(path, payload):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as f:
        f.write(payload)


def write_manifest(path, dataset_name, feature_dim, stride, images, queries=(), class_names=None):
    """images: dicts with id, features, proposals and optional external/width/height.

    Paths are written as given and resolved against the manifest's directory.
    """
    doc = {
        "dataset_name": dataset_name,
        "feature_dim": int(feature_dim),
        "stride": int(stride),
        "images": list(images),
        "queries": [dict(q, box=[float(v) for v in q["box"]]) for q in queries],
    }
    if class_names is not None:
        doc["class_names"] = list(class_names)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def write_ground_truth(directory, query_id, good=(), ok=(), junk=()):
    os.makedirs(directory, exist_ok=True)
    for label, ids in (("good", good), ("ok", ok), ("junk", junk)):
        with open(os.path.join(directory, f"{query_id}_{label}.txt"), "w", encoding="utf-8") as f:
            for ident in sorted(ids):
                f.write(ident + "\n")


def demo(out_dir, num_images, channels, seed, stride=16, grid=(12, 16)):
    rng = np.random.default_rng(seed)
    h, w = grid
    classes = ["object"]
    images = []
    for i in range(num_images):
        ident = f"img{i:03d}"
        fmap = rng.random((channels, h, w), dtype=np.float32)
        write_bytes(os.path.join(out_dir, "features", ident + ".ifsm"), encode_feature_map(ident, fmap, stride))
        props = [
            {"box": [16.0, 16.0, 96.0, 112.0], "objectness": 0.9, "class_scores": [0.8]},
            {"box": [64.0, 32.0, 200.0, 150.0], "objectness": 0.4},
            {"box": [0.0, 0.0, w * stride, h * stride], "class_scores": [0.1]},
        ]
        write_bytes(os.path.join(out_dir, "proposals", ident + ".ifsp"), encode_proposals(props, len(classes)))
        images.append({
            "id": ident,
            "features": f"features/{ident}.ifsm",
            "proposals": f"proposals/{ident}.ifsp",
            "width": w * stride,
            "height": h * stride,
        })
    query = {"query_id": "q0", "image_id": "img000", "box": [16, 16, 96, 112], "class_index": 0}
    write_manifest(os.path.join(out_dir, "manifest.json"), "demo", channels, stride, images, [query], classes)
    others = [im["id"] for im in images[1:]]
    write_ground_truth(os.path.join(out_dir, "gt"), "q0", good=others[:1], ok=others[1:2], junk=["img000"])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    d = sub.add_parser("demo", help="write a small random dataset")
    d.add_argument("out_dir")
    d.add_argument("--images", type=int, default=3)
    d.add_argument("--channels", type=int, default=32)
    d.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if args.images < 3:
        parser.error("--images must be at least 3")
    demo(args.out_dir, args.images, args.channels, args.seed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
