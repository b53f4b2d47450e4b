#!/usr/bin/env python3
"""Reference scoring service for `semanom evaluate --backend remote`.

POST {"pairs": [[hypothesis, reference], ...]} -> {"scores": [f1, ...]}

Scores are BERTScore F1 with the given model, no baseline rescaling and no
IDF weighting. Requires `pip install bert-score flask`.
"""

import argparse

from bert_score import BERTScorer
from flask import Flask, jsonify, request


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="distilbert-base-uncased")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--batch-size", type=int, default=64)
    args = ap.parse_args()

    scorer = BERTScorer(model_type=args.model, rescale_with_baseline=False, idf=False,
                        batch_size=args.batch_size)
    app = Flask(__name__)

    @app.post("/score")
    def score():
        body = request.get_json(silent=True)
        if not isinstance(body, dict) or not isinstance(body.get("pairs"), list):
            return jsonify(error="expected {\"pairs\": [[hyp, ref], ...]}"), 400
        pairs = body["pairs"]
        if not pairs:
            return jsonify(scores=[])
        hyps = [str(p[0]) for p in pairs]
        refs = [str(p[1]) for p in pairs]
        _, _, f1 = scorer.score(hyps, refs)
        return jsonify(scores=[float(x) for x in f1])

    app.run(host=args.host, port=args.port)


if __name__ == "__main__":
    main()
