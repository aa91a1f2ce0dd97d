// Input decoding: requests carry either a PNG byte stream or exactly
// 224*224 raw grayscale bytes. PNG support covers 8-bit depth, color
// types 0/2/3/4/6, no interlacing — the subset the simulator emits.

import { inflateSync } from "node:zlib";

const PNG_SIGNATURE = Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]);
const CHANNELS: Record<number, number> = { 0: 1, 2: 3, 3: 1, 4: 2, 6: 4 };

export const GRAY_SIZE = 224;
export const RAW_BYTES = GRAY_SIZE * GRAY_SIZE;

export class ImageError extends Error {}

export interface GrayImage {
  width: number;
  height: number;
  pixels: Float64Array; // row-major luma, 0..255
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

export function decodePng(data: Buffer): GrayImage {
  if (data.length < 33 || !data.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new ImageError("bad PNG signature");
  }
  let width = 0;
  let height = 0;
  let colorType = 0;
  let palette: Buffer | null = null;
  const idat: Buffer[] = [];
  let pos = 8;
  while (pos + 8 <= data.length) {
    const length = data.readUInt32BE(pos);
    const kind = data.toString("latin1", pos + 4, pos + 8);
    if (pos + 12 + length > data.length) {
      throw new ImageError(`truncated ${kind} chunk`);
    }
    const payload = data.subarray(pos + 8, pos + 8 + length);
    if (kind === "IHDR") {
      width = payload.readUInt32BE(0);
      height = payload.readUInt32BE(4);
      const depth = payload[8];
      colorType = payload[9];
      const interlace = payload[12];
      if (depth !== 8) throw new ImageError(`unsupported bit depth ${depth}`);
      if (!(colorType in CHANNELS)) {
        throw new ImageError(`unsupported color type ${colorType}`);
      }
      if (interlace !== 0) throw new ImageError("interlaced PNG rejected");
    } else if (kind === "PLTE") {
      palette = Buffer.from(payload);
    } else if (kind === "IDAT") {
      idat.push(payload);
    } else if (kind === "IEND") {
      break;
    }
    pos += 12 + length;
  }
  if (width === 0 || height === 0) throw new ImageError("missing IHDR");
  const channels = CHANNELS[colorType];
  const stride = width * channels;
  const raw = inflateSync(Buffer.concat(idat));
  if (raw.length < height * (stride + 1)) {
    throw new ImageError("incomplete image data");
  }
  const rows = Buffer.alloc(height * stride);
  let prev = Buffer.alloc(stride);
  for (let y = 0; y < height; y++) {
    const offset = y * (stride + 1);
    const filter = raw[offset];
    const line = Buffer.from(raw.subarray(offset + 1, offset + 1 + stride));
    switch (filter) {
      case 0:
        break;
      case 1:
        for (let i = channels; i < stride; i++) {
          line[i] = (line[i] + line[i - channels]) & 0xff;
        }
        break;
      case 2:
        for (let i = 0; i < stride; i++) line[i] = (line[i] + prev[i]) & 0xff;
        break;
      case 3:
        for (let i = 0; i < stride; i++) {
          const left = i >= channels ? line[i - channels] : 0;
          line[i] = (line[i] + ((left + prev[i]) >> 1)) & 0xff;
        }
        break;
      case 4:
        for (let i = 0; i < stride; i++) {
          const left = i >= channels ? line[i - channels] : 0;
          const upLeft = i >= channels ? prev[i - channels] : 0;
          line[i] = (line[i] + paeth(left, prev[i], upLeft)) & 0xff;
        }
        break;
      default:
        throw new ImageError(`bad filter type ${filter}`);
    }
    line.copy(rows, y * stride);
    prev = line;
  }
  const pixels = new Float64Array(width * height);
  for (let i = 0; i < width * height; i++) {
    let r: number;
    let g: number;
    let b: number;
    if (colorType === 0) {
      pixels[i] = rows[i];
      continue;
    }
    if (colorType === 4) {
      pixels[i] = rows[i * 2];
      continue;
    }
    if (colorType === 3) {
      const idx = rows[i] * 3;
      r = palette && idx + 2 < palette.length ? palette[idx] : 0;
      g = palette && idx + 2 < palette.length ? palette[idx + 1] : 0;
      b = palette && idx + 2 < palette.length ? palette[idx + 2] : 0;
    } else {
      const base = i * channels;
      r = rows[base];
      g = rows[base + 1];
      b = rows[base + 2];
    }
    pixels[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return { width, height, pixels };
}

// separable bilinear with half-pixel centers; identity when sizes match
export function resizeGray(img: GrayImage, size: number): Float64Array {
  if (img.width === size && img.height === size) {
    return Float64Array.from(img.pixels);
  }
  const out = new Float64Array(size * size);
  const coords = (n: number) => {
    const lo = new Int32Array(size);
    const hi = new Int32Array(size);
    const frac = new Float64Array(size);
    for (let i = 0; i < size; i++) {
      const src = (i + 0.5) * (n / size) - 0.5;
      const f = Math.floor(src);
      lo[i] = Math.min(Math.max(f, 0), n - 1);
      hi[i] = Math.min(lo[i] + 1, n - 1);
      frac[i] = Math.min(Math.max(src - f, 0), 1);
    }
    return { lo, hi, frac };
  };
  const ys = coords(img.height);
  const xs = coords(img.width);
  for (let y = 0; y < size; y++) {
    const top = ys.lo[y] * img.width;
    const bot = ys.hi[y] * img.width;
    const fy = ys.frac[y];
    for (let x = 0; x < size; x++) {
      const a =
        img.pixels[top + xs.lo[x]] * (1 - xs.frac[x]) +
        img.pixels[top + xs.hi[x]] * xs.frac[x];
      const b =
        img.pixels[bot + xs.lo[x]] * (1 - xs.frac[x]) +
        img.pixels[bot + xs.hi[x]] * xs.frac[x];
      out[y * size + x] = a * (1 - fy) + b * fy;
    }
  }
  return out;
}

/** Decode a request payload into a 224x224 grayscale matrix. */
export function decodeToGray224(payload: Buffer): Float64Array {
  if (payload.length === RAW_BYTES) {
    return Float64Array.from(payload);
  }
  return resizeGray(decodePng(payload), GRAY_SIZE);
}
