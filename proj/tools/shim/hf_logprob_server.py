#!/usr/bin/env python3
"""Scoring endpoint over a local Hugging Face causal language model.

Serves POST /v1/score {"context", "continuation"} with the summed natural-log
probability of the continuation tokens given the context:

    python3 hf_logprob_server.py --model microsoft/phi-2 --port 8700

Context and continuation are tokenized separately and concatenated, so the
continuation's token count does not depend on the context. An empty context
conditions on the tokenizer's BOS (or EOS) token.
"""

import argparse
import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def load(model_name, device):
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tok = AutoTokenizer.from_pretrained(model_name)
    model = AutoModelForCausalLM.from_pretrained(model_name, torch_dtype=torch.float32)
    model.to(device).eval()
    return torch, tok, model


class Scorer:
    def __init__(self, model_name, device):
        self.torch, self.tok, self.model = load(model_name, device)
        self.device = device
        self.model_id = "hf:" + model_name
        start = self.tok.bos_token_id if self.tok.bos_token_id is not None else self.tok.eos_token_id
        self.start_id = start
        self.lock = threading.Lock()

    def score(self, context, continuation):
        cont_ids = self.tok(continuation, add_special_tokens=False)["input_ids"] if continuation else []
        if not cont_ids:
            return 0.0, 0
        ctx_ids = self.tok(context, add_special_tokens=False)["input_ids"] if context else []
        ids = [self.start_id] + ctx_ids + cont_ids
        torch = self.torch
        with self.lock, torch.no_grad():
            x = torch.tensor([ids], device=self.device)
            logits = self.model(x).logits[0].float()
            logp = torch.log_softmax(logits, dim=-1)
            first = 1 + len(ctx_ids)
            total = 0.0
            for pos in range(first, len(ids)):
                total += logp[pos - 1, ids[pos]].item()
        return min(total, 0.0), len(cont_ids)


def make_handler(scorer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def _reply(self, status, payload):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path != "/v1/score":
                self._reply(404, {"error": "unknown path " + self.path})
                return
            length = int(self.headers.get("Content-Length", "0"))
            try:
                req = json.loads(self.rfile.read(length).decode("utf-8"))
                ctx, cont = req["context"], req["continuation"]
            except (ValueError, KeyError) as exc:
                self._reply(400, {"error": "bad request: %s" % exc})
                return
            try:
                logprob, n = scorer.score(ctx, cont)
            except Exception as exc:  # surfaced to the client as a protocol error
                self._reply(500, {"error": str(exc)})
                return
            self._reply(200, {"logprob": logprob, "token_count": n, "model_id": scorer.model_id})

    return Handler


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="microsoft/phi-2")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8700)
    args = ap.parse_args()

    scorer = Scorer(args.model, args.device)
    server = ThreadingHTTPServer((args.host, args.port), make_handler(scorer))
    print("PORT %d" % server.server_address[1], flush=True)
    server.serve_forever()
    return 0


if __name__ == "__main__":
    sys.exit(main())
