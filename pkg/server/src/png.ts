/**
 * Minimal PNG codec matching the primary package's: reads non-interlaced
 * 8/16-bit grayscale and RGB with filters 0-4; writes filter 0 with a fixed
 * zlib level so identical pixels always produce identical bytes.
 */

import * as zlib from "zlib";

const SIG = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface RawImage {
  width: number;
  height: number;
  channels: number; // 1 or 3
  bits: number; // 8 or 16
  /** Row-major, channel-interleaved integer samples in [0, 2^bits - 1]. */
  samples: number[];
}

function crc32(buf: Buffer): number {
  let crc = ~0;
  for (let i = 0; i < buf.length; i++) {
    crc ^= buf[i];
    for (let k = 0; k < 8; k++) {
      crc = (crc >>> 1) ^ (0xedb88320 & -(crc & 1));
    }
  }
  return ~crc >>> 0;
}

function chunk(tag: string, payload: Buffer): Buffer {
  const head = Buffer.alloc(4);
  head.writeUInt32BE(payload.length);
  const body = Buffer.concat([Buffer.from(tag, "latin1"), payload]);
  const tail = Buffer.alloc(4);
  tail.writeUInt32BE(crc32(body));
  return Buffer.concat([head, body, tail]);
}

/** Encode integer samples (already quantized to the bit depth). */
export function encode(img: RawImage, level = 6): Buffer {
  const { width, height, channels, bits, samples } = img;
  if (bits !== 8 && bits !== 16) throw new Error("bit depth must be 8 or 16");
  if (channels !== 1 && channels !== 3) {
    throw new Error("channels must be 1 or 3");
  }
  const bytesPer = bits / 8;
  const stride = width * channels * bytesPer;
  const scan = Buffer.alloc(height * (stride + 1));
  let s = 0;
  for (let r = 0; r < height; r++) {
    let pos = r * (stride + 1);
    scan[pos++] = 0; // filter type 0
    for (let i = 0; i < width * channels; i++) {
      const v = samples[s++];
      if (bits === 8) {
        scan[pos++] = v & 0xff;
      } else {
        scan[pos++] = (v >> 8) & 0xff;
        scan[pos++] = v & 0xff;
      }
    }
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = bits;
  ihdr[9] = channels === 1 ? 0 : 2;
  const idat = zlib.deflateSync(scan, { level });
  return Buffer.concat([
    SIG,
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export function decode(data: Buffer): RawImage {
  if (!data.subarray(0, 8).equals(SIG)) throw new Error("not a PNG file");
  let pos = 8;
  let ihdr: Buffer | null = null;
  const idat: Buffer[] = [];
  while (pos < data.length) {
    const length = data.readUInt32BE(pos);
    const tag = data.subarray(pos + 4, pos + 8).toString("latin1");
    const payload = data.subarray(pos + 8, pos + 8 + length);
    pos += 12 + length;
    if (tag === "IHDR") ihdr = Buffer.from(payload);
    else if (tag === "IDAT") idat.push(payload);
    else if (tag === "IEND") break;
  }
  if (!ihdr) throw new Error("missing IHDR");
  const width = ihdr.readUInt32BE(0);
  const height = ihdr.readUInt32BE(4);
  const bits = ihdr[8];
  const colorType = ihdr[9];
  if (ihdr[12] !== 0) throw new Error("interlaced PNG not supported");
  if ((bits !== 8 && bits !== 16) || (colorType !== 0 && colorType !== 2)) {
    throw new Error(`unsupported PNG format: ${bits}-bit type ${colorType}`);
  }
  const channels = colorType === 0 ? 1 : 3;
  const bpp = channels * (bits / 8);
  const stride = width * bpp;
  const scan = zlib.inflateSync(Buffer.concat(idat));
  if (scan.length !== height * (stride + 1)) {
    throw new Error("bad PNG data length");
  }
  const rows = Buffer.alloc(height * stride);
  let prevOff = -1;
  for (let r = 0; r < height; r++) {
    const ft = scan[r * (stride + 1)];
    const src = r * (stride + 1) + 1;
    const dst = r * stride;
    for (let i = 0; i < stride; i++) {
      const x = scan[src + i];
      const a = i >= bpp ? rows[dst + i - bpp] : 0;
      const b = prevOff >= 0 ? rows[prevOff + i] : 0;
      const c = prevOff >= 0 && i >= bpp ? rows[prevOff + i - bpp] : 0;
      let v: number;
      if (ft === 0) v = x;
      else if (ft === 1) v = x + a;
      else if (ft === 2) v = x + b;
      else if (ft === 3) v = x + ((a + b) >> 1);
      else if (ft === 4) v = x + paeth(a, b, c);
      else throw new Error(`unknown PNG filter type ${ft}`);
      rows[dst + i] = v & 0xff;
    }
    prevOff = dst;
  }
  const samples = new Array<number>(width * height * channels);
  if (bits === 8) {
    for (let i = 0; i < samples.length; i++) samples[i] = rows[i];
  } else {
    for (let i = 0; i < samples.length; i++) {
      samples[i] = rows.readUInt16BE(2 * i);
    }
  }
  return { width, height, channels, bits, samples };
}
