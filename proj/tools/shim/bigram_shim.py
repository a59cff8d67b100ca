#!/usr/bin/env python3
"""Reference scoring endpoint backed by a byte-bigram model.

Independent re-implementation of the mock scorer behind the /v1/score wire
protocol. Used by the conformance test to cross-check the C++ client and
in-process mock, and handy for exercising the CLI end to end without a
language model:

    python3 bigram_shim.py --corpus corpus.txt --port 8700

Prints "PORT <n>" once listening (use --port 0 for an ephemeral port).
POST /shutdown stops the server.
"""

import argparse
import hashlib
import json
import math
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

BEGIN = 256
ALPHABET = 257


class BigramModel:
    def __init__(self, training: bytes):
        self.pairs = {}
        self.rows = {}
        for prev, cur in zip(training, training[1:]):
            self.pairs[(prev, cur)] = self.pairs.get((prev, cur), 0) + 1
            self.rows[prev] = self.rows.get(prev, 0) + 1
        self.model_id = "mock-bigram:" + hashlib.sha256(training).hexdigest()

    def score(self, context: bytes, continuation: bytes):
        prev = context[-1] if context else BEGIN
        total = 0.0
        for b in continuation:
            num = self.pairs.get((prev, b), 0) + 1
            den = self.rows.get(prev, 0) + ALPHABET
            total += math.log(num / den)
            prev = b
        return total, len(continuation)


def make_handler(model, server_ref):
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
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            if self.path == "/shutdown":
                self._reply(200, {"ok": True})
                threading.Thread(target=server_ref[0].shutdown, daemon=True).start()
                return
            if self.path != "/v1/score":
                self._reply(404, {"error": "unknown path " + self.path})
                return
            try:
                req = json.loads(raw.decode("utf-8"))
                ctx = req["context"].encode("utf-8")
                cont = req["continuation"].encode("utf-8")
            except (ValueError, KeyError, AttributeError) as exc:
                self._reply(400, {"error": "bad request: %s" % exc})
                return
            logprob, tokens = model.score(ctx, cont)
            self._reply(200, {"logprob": logprob, "token_count": tokens, "model_id": model.model_id})

    return Handler


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", help="training text file (default: untrained)")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8700)
    args = ap.parse_args()

    training = b""
    if args.corpus:
        with open(args.corpus, "rb") as fh:
            training = fh.read()
    model = BigramModel(training)
    server_ref = [None]
    server = ThreadingHTTPServer((args.host, args.port), make_handler(model, server_ref))
    server_ref[0] = server
    print("PORT %d" % server.server_address[1], flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
