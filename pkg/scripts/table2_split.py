"""Build a synthetic corpus with the published per-colour counts, then split it 8:1:1.

    python scripts/table2_split.py --seed 0 --out /tmp/vc24
"""
import argparse
import json
from pathlib import Path

from colordet import dataset as ds


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--images", type=int, default=ds.TABLE2_IMAGES)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = ds.synthetic_table2(args.images, seed=args.seed)
    ds.write_annotations(images, out / "all.jsonl")
    stats = ds.class_stats(images)
    print(f"{stats.total} objects in {len(images)} images, imbalance {stats.imbalance:.1f}")

    splits = ds.stratified_split(images, seed=args.seed)
    for name, part in zip(ds.SPLIT_NAMES, splits):
        ds.write_annotations(part, out / f"{name}.jsonl")
    report = ds.split_report(splits)
    (out / "split_report.json").write_text(json.dumps(report, indent=2))
    print(f"images per split {report['images']}, worst class deviation "
          f"{report['max_abs_deviation']:.2f} objects")
    for c in report["classes"][-5:]:
        print(f"  {c['color']:<13}{c['counts']}")


if __name__ == "__main__":
    main()
