"""Writes a COCO-val-2017-shaped metadata fixture: 5,000 images, 36,781 boxes,
the 80 COCO category names, and a per-category instance distribution close to
the real validation split. Boxes are synthetic; only counts and labels matter.

    python3 tools/fixtures/make_coco_meta_fixture.py tests/fixtures/coco_val_meta.json
"""
import json
import random
import sys

# Approximate val2017 instance counts per category.
COUNTS = [
    ("person", 11004), ("bicycle", 316), ("car", 1932), ("motorcycle", 371), ("airplane", 143),
    ("bus", 285), ("train", 190), ("truck", 415), ("boat", 430), ("traffic light", 634),
    ("fire hydrant", 101), ("stop sign", 75), ("parking meter", 60), ("bench", 413), ("bird", 440),
    ("cat", 202), ("dog", 218), ("horse", 273), ("sheep", 361), ("cow", 380),
    ("elephant", 255), ("bear", 71), ("zebra", 268), ("giraffe", 232), ("backpack", 371),
    ("umbrella", 407), ("handbag", 540), ("tie", 252), ("suitcase", 299), ("frisbee", 115),
    ("skis", 241), ("snowboard", 69), ("sports ball", 263), ("kite", 336), ("baseball bat", 146),
    ("baseball glove", 148), ("skateboard", 179), ("surfboard", 267), ("tennis racket", 225),
    ("bottle", 1025), ("wine glass", 343), ("cup", 899), ("fork", 215), ("knife", 326),
    ("spoon", 253), ("bowl", 626), ("banana", 379), ("apple", 239), ("sandwich", 177),
    ("orange", 287), ("broccoli", 316), ("carrot", 371), ("hot dog", 127), ("pizza", 285),
    ("donut", 338), ("cake", 316), ("chair", 1791), ("couch", 261), ("potted plant", 343),
    ("bed", 163), ("dining table", 697), ("toilet", 179), ("tv", 288), ("laptop", 231),
    ("mouse", 106), ("remote", 283), ("keyboard", 153), ("cell phone", 262), ("microwave", 55),
    ("oven", 143), ("toaster", 9), ("sink", 225), ("refrigerator", 126), ("book", 1161),
    ("clock", 267), ("vase", 277), ("scissors", 36), ("teddy bear", 191), ("hair drier", 11),
    ("toothbrush", 57),
]
TOTAL_BOXES = 36781
TOTAL_IMAGES = 5000
EMPTY_IMAGES = 48


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/coco_val_meta.json"
    rng = random.Random(2017)
    counts = [c for _, c in COUNTS]
    counts[0] += TOTAL_BOXES - sum(counts)  # absorb the rounding into "person"
    images = [{"id": i + 1, "width": 640, "height": 480} for i in range(TOTAL_IMAGES)]
    categories = [{"id": i + 1, "name": name} for i, (name, _) in enumerate(COUNTS)]
    annotated = TOTAL_IMAGES - EMPTY_IMAGES
    labels = [k + 1 for k, c in enumerate(counts) for _ in range(c)]
    rng.shuffle(labels)
    annotations = []
    for n, cat in enumerate(labels):
        img = n % annotated + 1 if n < annotated else rng.randint(1, annotated)
        w, h = rng.randint(8, 300), rng.randint(8, 300)
        annotations.append({"id": n + 1, "image_id": img, "category_id": cat,
                            "bbox": [rng.randint(0, 640 - w), rng.randint(0, 480 - h), w, h]})
    with open(out, "w") as f:
        json.dump({"images": images, "categories": categories, "annotations": annotations}, f,
                  separators=(",", ":"))


if __name__ == "__main__":
    main()
