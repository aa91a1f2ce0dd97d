// Wire format: UTF-8, one JSON object per \n-terminated line.

export interface HelloMessage {
  op: "hello";
  dim: number;
  deterministic: boolean;
  backend: string;
}

export interface EmbedRequest {
  id: number;
  op: "embed";
  image: string; // base64: PNG byte stream, or 50176 raw gray bytes
}

export interface EmbedResponse {
  id: number;
  embedding: number[];
  dim: number;
}

export interface ErrorResponse {
  id: number; // -1 when the request id could not be parsed
  error: string;
}

export type Response = EmbedResponse | ErrorResponse;

export function encodeLine(msg: object): string {
  return JSON.stringify(msg) + "\n";
}

export function parseRequest(line: string): EmbedRequest {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch (err) {
    throw new ProtocolError(-1, `unparsable line: ${(err as Error).message}`);
  }
  const req = parsed as Partial<EmbedRequest>;
  const id = typeof req.id === "number" ? req.id : -1;
  if (req.op !== "embed") {
    throw new ProtocolError(id, `unsupported op ${String(req.op)}`);
  }
  if (typeof req.image !== "string") {
    throw new ProtocolError(id, "missing image payload");
  }
  return { id, op: "embed", image: req.image };
}

export class ProtocolError extends Error {
  constructor(public requestId: number, message: string) {
    super(message);
  }
}
