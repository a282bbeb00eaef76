/**
 * Deterministic model stubs, bit-for-bit equivalent to the in-process stubs
 * shipped with the Python package. Shared semantics are pinned by
 * ../tests/vectors/stub_vectors.json; every computation here sticks to
 * operations whose IEEE-754 results are identical across both runtimes
 * (exact integer sums below 2^53, sha256-derived 53-bit fractions, single
 * float divisions, sqrt).
 */

import * as crypto from "crypto";
import { decode, encode, RawImage } from "./png";

export const HASH_EMBED_DIM = 64;
export const PLANTED_DIM = 8;
export const PLANTED_PROMPTS = [
  "abdominal CT",
  "brain MRI",
  "cardiac ultrasound",
  "chest X-ray",
  "knee X-ray",
];

export const PROMPT_SCAFFOLD = "Findings: {} Impression: {}";

export interface RequestDict {
  task: string;
  model_id: string;
  image_b64?: string;
  text?: string;
  labels?: string[];
  params?: Record<string, unknown>;
}

export type Payload = Record<string, unknown>;
export type Handler = (req: RequestDict) => Payload;

/** Raised by handlers for protocol-level failures. */
export class BackendError extends Error {
  code: string;
  constructor(code: string, message: string) {
    super(`[${code}] ${message}`);
    this.code = code;
  }
}

function pixels(req: RequestDict): { samples: number[]; peak: number } {
  const img = decode(Buffer.from(req.image_b64 as string, "base64"));
  return { samples: img.samples.slice(), peak: (1 << img.bits) - 1 };
}

function intMean(samples: number[], peak: number): number {
  // exact integer sum, then two float divisions: reproducible everywhere
  let sum = 0;
  for (const v of samples) sum += v;
  return sum / samples.length / peak;
}

export function identityRestorer(req: RequestDict): Payload {
  return { image_b64: req.image_b64 };
}

export function hashEmbedder(req: RequestDict): Payload {
  const content =
    req.task === "embed-text"
      ? Buffer.from(req.text as string, "utf-8")
      : Buffer.from(req.image_b64 as string, "base64");
  const digest = crypto.createHash("sha256").update(content).digest();
  const vec: number[] = [];
  for (let i = 0; i < HASH_EMBED_DIM; i++) {
    const idx = Buffer.alloc(4);
    idx.writeUInt32BE(i);
    const block = crypto
      .createHash("sha256")
      .update(Buffer.concat([digest, idx]))
      .digest();
    const u = block.readBigUInt64BE(0);
    vec.push((Number(u >> 11n) / 2 ** 53) * 2.0 - 1.0);
  }
  return { vector: vec };
}

/** Probability k = mean intensity of the k-th quantile band of pixels. */
export function echoClassifier(req: RequestDict): Payload {
  const labels = req.labels;
  if (!labels || labels.length === 0) {
    throw new BackendError("bad_request", "classify requires labels");
  }
  const { samples, peak } = pixels(req);
  samples.sort((a, b) => a - b);
  const n = samples.length;
  const k = labels.length;
  const probs: Record<string, number> = {};
  for (let i = 0; i < k; i++) {
    const lo = Math.floor((i * n) / k);
    const hi = Math.floor(((i + 1) * n) / k);
    const band =
      hi > lo
        ? samples.slice(lo, hi)
        : samples.slice(Math.min(lo, n - 1)).slice(0, 1);
    probs[labels[i]] = intMean(band, peak);
  }
  return { probabilities: probs };
}

/**
 * Routing test fixture: image class k (from mean intensity, k =
 * floor(10 * mean + 0.5)) embeds at cosine exactly 0.9 with prompt k and
 * 0 with every other prompt.
 */
export function plantedEmbedder(req: RequestDict): Payload {
  if (req.task === "embed-text") {
    const text = req.text as string;
    const k = PLANTED_PROMPTS.indexOf(text);
    if (k < 0) {
      throw new BackendError(
        "bad_request",
        `unknown planted prompt: '${text}'`
      );
    }
    const vec = new Array<number>(PLANTED_DIM).fill(0.0);
    vec[k] = 1.0;
    return { vector: vec };
  }
  const { samples, peak } = pixels(req);
  const mean = intMean(samples, peak);
  let k = Math.floor(10.0 * mean + 0.5);
  k = Math.min(Math.max(k, 0), PLANTED_PROMPTS.length - 1);
  const vec = new Array<number>(PLANTED_DIM).fill(0.0);
  vec[k] = 0.9;
  vec[PLANTED_PROMPTS.length + (k % (PLANTED_DIM - PLANTED_PROMPTS.length))] =
    Math.sqrt(0.19);
  return { vector: vec };
}

/**
 * Emits a fixed well-formed report embedding the prompt's statement block
 * verbatim. Statements are the lines above the instruction line (the line
 * containing the report scaffold).
 */
export function templateVlm(req: RequestDict): Payload {
  const lines = (req.text as string).split("\n");
  const statements: string[] = [];
  for (const line of lines) {
    if (line.includes(PROMPT_SCAFFOLD)) break;
    if (line.trim()) statements.push(line);
  }
  let findings: string;
  let impression: string;
  if (statements.length) {
    findings = statements.join(" ");
    impression =
      `Automated impression derived from ${statements.length} ` +
      `finding statement(s).`;
  } else {
    findings = "No diagnostic priors were provided for this study.";
    impression = "No automated impression available.";
  }
  return { text: `Findings: ${findings} Impression: ${impression}` };
}

function toGrayscale(img: RawImage): number[] {
  const n = img.width * img.height;
  const peak = (1 << img.bits) - 1;
  const gray = new Array<number>(n);
  if (img.channels === 1) {
    for (let i = 0; i < n; i++) gray[i] = img.samples[i] / peak;
  } else {
    for (let i = 0; i < n; i++) {
      const r = img.samples[3 * i] / peak;
      const g = img.samples[3 * i + 1] / peak;
      const b = img.samples[3 * i + 2] / peak;
      const lum = 0.299 * r + 0.587 * g + 0.114 * b;
      gray[i] = Math.min(Math.max(lum, 0.0), 1.0);
    }
  }
  return gray;
}

/**
 * Otsu threshold over a 256-bin histogram on [0, 1]. Bin edges i/256 are
 * exact doubles, so bin assignment and the between-class variance argmax
 * reproduce the primary implementation bit-for-bit.
 */
export function otsuThreshold(gray: number[]): number {
  const hist = new Array<number>(256).fill(0);
  for (const v of gray) {
    if (v < 0.0 || v > 1.0) continue;
    let b = Math.floor(v * 256);
    if (b > 255) b = 255;
    if (v < b / 256) b -= 1;
    else if (b < 255 && v >= (b + 1) / 256) b += 1;
    hist[b] += 1;
  }
  const total = gray.length;
  const cmean = new Array<number>(256);
  let acc = 0.0;
  for (let i = 0; i < 256; i++) {
    acc += hist[i] * ((i / 256 + (i + 1) / 256) / 2.0);
    cmean[i] = acc;
  }
  const cmeanTotal = cmean[255];
  let bestK = 0;
  let best = -Infinity;
  let w0 = 0;
  for (let i = 0; i < 255; i++) {
    w0 += hist[i];
    const w1 = total - w0;
    let between = -1.0;
    if (w0 > 0 && w1 > 0) {
      const mu0 = cmean[i] / w0;
      const mu1 = (cmeanTotal - cmean[i]) / w1;
      const d = mu0 - mu1;
      between = w0 * w1 * (d * d);
    }
    if (between > best) {
      best = between;
      bestK = i;
    }
  }
  return (bestK + 1) / 256;
}

/** Cheap backend-path segmenter: emits the builtin Otsu mask as PNG. */
export function varianceSegmenter(req: RequestDict): Payload {
  const img = decode(Buffer.from(req.image_b64 as string, "base64"));
  const gray = toGrayscale(img);
  const thr = otsuThreshold(gray);
  const mask: RawImage = {
    width: img.width,
    height: img.height,
    channels: 1,
    bits: 8,
    samples: gray.map((v) => (v > thr ? 255 : 0)),
  };
  return { mask_b64: encode(mask).toString("base64") };
}

export const STUB_MODELS: Record<string, Handler> = {
  "stub-identity-restorer": identityRestorer,
  "stub-hash-embedder": hashEmbedder,
  "stub-echo-classifier": echoClassifier,
  "stub-planted-embedder": plantedEmbedder,
  "stub-template-vlm": templateVlm,
  "stub-screen-segmenter": varianceSegmenter,
};
