// Request loop: hello handshake first, then one response line per request
// line, ids echoed, order preserved. Single-threaded by design; the
// simulator serializes requests per provider instance.

import * as readline from "node:readline";
import type { Readable, Writable } from "node:stream";
import type { Backend } from "./backends.js";
import { encodeLine, parseRequest, ProtocolError } from "./protocol.js";

export async function serve(
  backend: Backend,
  input: Readable,
  output: Writable
): Promise<void> {
  output.write(
    encodeLine({
      op: "hello",
      dim: backend.dim,
      deterministic: backend.deterministic,
      backend: backend.name,
    })
  );
  const rl = readline.createInterface({ input, terminal: false });
  for await (const line of rl) {
    if (!line.trim()) continue;
    let id = -1;
    try {
      const req = parseRequest(line);
      id = req.id;
      const payload = Buffer.from(req.image, "base64");
      const embedding = await backend.embed(payload);
      output.write(encodeLine({ id, embedding, dim: embedding.length }));
    } catch (err) {
      const reqId = err instanceof ProtocolError ? err.requestId : id;
      output.write(encodeLine({ id: reqId, error: (err as Error).message }));
    }
  }
}
