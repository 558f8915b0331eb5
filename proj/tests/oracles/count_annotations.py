#!/usr/bin/env python3
"""Counts positive answers per question in an annotation export.

usage: count_annotations.py export.json > manifest.json
"""
import json
import sys


def main():
    tasks = json.load(open(sys.argv[1]))
    positives = {q: 0 for q in ["q1", "q2", "q3", "q4"]}
    for t in tasks:
        for r in t["annotations"][0]["result"]:
            if r["value"]["choices"][0].lower() == "yes":
                positives[r["from_name"]] += 1
    json.dump({"tasks": len(tasks), "positives": positives}, sys.stdout, indent=2)
    print()


if __name__ == "__main__":
    main()
