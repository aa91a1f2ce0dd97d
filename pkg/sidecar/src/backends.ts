// Embedding backends. `test` is fully deterministic and dependency-free;
// `clip` wraps a pretrained image encoder loaded through
// @huggingface/transformers (install separately, see README).

import { GRAY_SIZE, decodePng, decodeToGray224, RAW_BYTES } from "./image.js";

export interface Backend {
  readonly name: string;
  readonly dim: number;
  readonly deterministic: boolean;
  embed(payload: Buffer): Promise<number[]>;
}

function l2normalize(vec: Float64Array): number[] {
  let norm = 0;
  for (const v of vec) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm === 0) throw new Error("zero-norm embedding");
  return Array.from(vec, (v) => v / norm);
}

/**
 * Deterministic image signature: 64-bin intensity histogram plus 8-bin
 * gradient-orientation histogram (central differences, magnitude
 * weighted), L2-normalized. 72 dimensions.
 */
export class TestBackend implements Backend {
  readonly name = "test";
  readonly dim = 72;
  readonly deterministic = true;

  async embed(payload: Buffer): Promise<number[]> {
    const gray = decodeToGray224(payload);
    const n = GRAY_SIZE;
    const vec = new Float64Array(72);
    for (let i = 0; i < gray.length; i++) {
      const v = Math.min(Math.max(gray[i], 0), 255);
      vec[Math.floor(v / 4)] += 1 / gray.length;
    }
    let mass = 0;
    for (let y = 1; y < n - 1; y++) {
      for (let x = 1; x < n - 1; x++) {
        const gx = (gray[y * n + x + 1] - gray[y * n + x - 1]) * 0.5;
        const gy = (gray[(y + 1) * n + x] - gray[(y - 1) * n + x]) * 0.5;
        const mag = Math.hypot(gx, gy);
        const angle = Math.atan2(gy, gx); // [-pi, pi]
        const bin = Math.min(Math.floor(((angle + Math.PI) / (2 * Math.PI)) * 8), 7);
        vec[64 + bin] += mag;
        mass += mag;
      }
    }
    // constant images carry no gradient mass: spread a uniform epsilon
    const eps = 1e-12;
    let orientTotal = mass + 8 * eps;
    for (let b = 0; b < 8; b++) {
      vec[64 + b] = (vec[64 + b] + eps) / orientTotal;
    }
    return l2normalize(vec);
  }
}

/** CLIP-style backend: checkpoint name or local path is required. */
export class ClipBackend implements Backend {
  readonly name = "clip";
  readonly deterministic = true;
  dim = 0;
  private extractor: ((img: unknown, opts: object) => Promise<{ data: Float32Array }>) | null = null;
  private rawImage: { new (data: Uint8ClampedArray, w: number, h: number, c: number): unknown } | null = null;

  constructor(private model: string) {}

  async init(): Promise<void> {
    let mod: {
      pipeline: (task: string, model: string) => Promise<unknown>;
      RawImage: { new (data: Uint8ClampedArray, w: number, h: number, c: number): unknown };
    };
    try {
      mod = (await import("@huggingface/transformers" as string)) as typeof mod;
    } catch {
      throw new Error(
        "clip backend needs @huggingface/transformers; npm install it " +
          "and provide a local checkpoint via --model"
      );
    }
    this.extractor = (await mod.pipeline(
      "image-feature-extraction",
      this.model
    )) as typeof this.extractor;
    this.rawImage = mod.RawImage;
    const probeRaw = Buffer.alloc(RAW_BYTES, 128);
    const probe = await this.embedUnnormalized(probeRaw);
    this.dim = probe.length;
  }

  private async embedUnnormalized(payload: Buffer): Promise<Float64Array> {
    if (!this.extractor || !this.rawImage) {
      throw new Error("clip backend not initialized");
    }
    let width: number;
    let height: number;
    let gray: Float64Array;
    if (payload.length === RAW_BYTES) {
      width = height = GRAY_SIZE;
      gray = Float64Array.from(payload);
    } else {
      const img = decodePng(payload);
      width = img.width;
      height = img.height;
      gray = img.pixels;
    }
    const rgba = new Uint8ClampedArray(width * height * 4);
    for (let i = 0; i < width * height; i++) {
      const v = Math.round(Math.min(Math.max(gray[i], 0), 255));
      rgba[i * 4] = v;
      rgba[i * 4 + 1] = v;
      rgba[i * 4 + 2] = v;
      rgba[i * 4 + 3] = 255;
    }
    const image = new this.rawImage(rgba, width, height, 4);
    const output = await this.extractor(image, { pooling: "mean", normalize: false });
    return Float64Array.from(output.data);
  }

  async embed(payload: Buffer): Promise<number[]> {
    return l2normalize(await this.embedUnnormalized(payload));
  }
}

export async function makeBackend(name: string, model: string): Promise<Backend> {
  if (name === "test") return new TestBackend();
  if (name === "clip") {
    const backend = new ClipBackend(model);
    await backend.init();
    return backend;
  }
  throw new Error(`unknown backend ${name} (expected test|clip)`);
}
