"""Writes the medium evaluation fixture (100 images, 10 categories, ~2,000
predictions) and its golden values from pycocotools.

    python3 tools/fixtures/make_medium_fixture.py tests/fixtures

Run once; the outputs are committed. Requires numpy and pycocotools.
"""
import json
import os
import random
import sys


def build(seed=20240613):
    rng = random.Random(seed)
    W, H = 640, 480
    categories = [{"id": i + 1, "name": f"category {i + 1}"} for i in range(10)]
    images, annotations, predictions = [], [], []
    ann_id = 1
    for img_id in range(1, 101):
        images.append({"id": img_id, "width": W, "height": H})
        for _ in range(rng.randint(3, 10)):
            w = round(rng.uniform(20, 200), 2)
            h = round(rng.uniform(20, 200), 2)
            x = round(rng.uniform(0, W - w), 2)
            y = round(rng.uniform(0, H - h), 2)
            cat = rng.randint(1, 10)
            annotations.append({"id": ann_id, "image_id": img_id, "category_id": cat,
                                "bbox": [x, y, w, h], "area": round(w * h, 4), "iscrowd": 0})
            ann_id += 1
            # Localized hits with varying quality, some with the wrong label.
            for _ in range(rng.choice([0, 1, 1, 1, 2, 2, 3])):
                spread = rng.choice([0.02, 0.05, 0.1, 0.2])
                px = x + rng.gauss(0, spread * w)
                py = y + rng.gauss(0, spread * h)
                pw = max(1.0, w * (1 + rng.gauss(0, spread)))
                ph = max(1.0, h * (1 + rng.gauss(0, spread)))
                label = cat if rng.random() < 0.75 else rng.randint(1, 10)
                predictions.append({"image_id": img_id, "category_id": label,
                                    "bbox": [round(px, 2), round(py, 2), round(pw, 2), round(ph, 2)],
                                    "score": round(rng.random(), 6)})
        # Background false positives.
        for _ in range(rng.randint(5, 15)):
            w = rng.uniform(10, 150)
            h = rng.uniform(10, 150)
            predictions.append({"image_id": img_id, "category_id": rng.randint(1, 10),
                                "bbox": [round(rng.uniform(0, W - w), 2), round(rng.uniform(0, H - h), 2),
                                         round(w, 2), round(h, 2)],
                                "score": round(rng.random() * 0.8, 6)})
    gt = {"images": images, "annotations": annotations, "categories": categories}
    return gt, predictions


def golden(gt_path, pred_path):
    from pycocotools.coco import COCO
    from pycocotools.cocoeval import COCOeval
    import numpy as np

    coco = COCO(gt_path)
    dets = coco.loadRes(pred_path)
    ev = COCOeval(coco, dets, "bbox")
    ev.evaluate()
    ev.accumulate()
    ev.summarize()
    prec = ev.eval["precision"]  # [T, R, K, A, M]
    out = {"mAP": float(ev.stats[0]), "per_category": {}}
    for k, cat in enumerate(ev.params.catIds):
        per_t = []
        for t in range(prec.shape[0]):
            p = prec[t, :, k, 0, -1]
            per_t.append(float(np.mean(p[p > -1])) if (p > -1).any() else None)
        valid = [v for v in per_t if v is not None]
        out["per_category"][str(cat)] = {
            "ap": float(np.mean(valid)) if valid else None,
            "per_threshold": per_t,
        }
    return out


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures"
    gt, preds = build()
    gt_path = os.path.join(out_dir, "medium_gt.json")
    pred_path = os.path.join(out_dir, "medium_pred.json")
    with open(gt_path, "w") as f:
        json.dump(gt, f)
    with open(pred_path, "w") as f:
        json.dump(preds, f)
    with open(os.path.join(out_dir, "medium_golden.json"), "w") as f:
        json.dump(golden(gt_path, pred_path), f, indent=1)
    print(f"{len(gt['images'])} images, {len(gt['annotations'])} boxes, {len(preds)} predictions")


if __name__ == "__main__":
    main()
