/**
 * Wire contract: request validation and canonical JSON encoding,
 * behaviorally identical to the Python client's codec (v1 schemas:
 * known fields only, per-task required fields, strict base64).
 */

import { BackendError, RequestDict } from "./stubs";

export const TASKS = [
  "segment",
  "detect",
  "restore",
  "embed-image",
  "embed-text",
  "classify",
  "generate",
];

const REQUIRED: Record<string, string[]> = {
  segment: ["image_b64"],
  detect: ["image_b64"],
  restore: ["image_b64"],
  "embed-image": ["image_b64"],
  "embed-text": ["text"],
  classify: ["image_b64"],
  generate: ["image_b64", "text"],
};

const KNOWN_FIELDS = new Set([
  "task",
  "model_id",
  "image_b64",
  "text",
  "labels",
  "params",
]);

// strict base64: alphabet only, 4-byte groups, at most two trailing '='
const B64_RE = /^(?:[A-Za-z0-9+/]{4})*(?:[A-Za-z0-9+/]{2}==|[A-Za-z0-9+/]{3}=)?$/;

export function validateRequest(d: unknown): RequestDict {
  if (typeof d !== "object" || d === null || Array.isArray(d)) {
    throw new BackendError("bad_request", "request body must be an object");
  }
  const obj = d as Record<string, unknown>;
  const task = obj.task;
  if (typeof task !== "string" || !TASKS.includes(task)) {
    throw new BackendError("bad_request", `unknown task '${task}'`);
  }
  if (typeof obj.model_id !== "string" || obj.model_id.length === 0) {
    throw new BackendError(
      "bad_request",
      "model_id: must be a non-empty string"
    );
  }
  for (const key of Object.keys(obj)) {
    if (!KNOWN_FIELDS.has(key)) {
      throw new BackendError("bad_request", `unknown field '${key}'`);
    }
  }
  for (const f of REQUIRED[task]) {
    if (typeof obj[f] !== "string") {
      throw new BackendError("bad_request", `${f}: required for task ${task}`);
    }
  }
  if ("image_b64" in obj) {
    if (typeof obj.image_b64 !== "string" || !B64_RE.test(obj.image_b64)) {
      throw new BackendError("bad_request", "image_b64: invalid base64");
    }
  }
  if ("text" in obj && typeof obj.text !== "string") {
    throw new BackendError("bad_request", "text: must be a string");
  }
  if ("labels" in obj) {
    if (
      !Array.isArray(obj.labels) ||
      !obj.labels.every((x) => typeof x === "string")
    ) {
      throw new BackendError("bad_request", "labels: must be a list of strings");
    }
  }
  if ("params" in obj) {
    const p = obj.params;
    if (typeof p !== "object" || p === null || Array.isArray(p)) {
      throw new BackendError("bad_request", "params: must be an object");
    }
    const pd = p as Record<string, unknown>;
    if ("temperature" in pd && typeof pd.temperature !== "number") {
      throw new BackendError("bad_request", "params/temperature: number");
    }
    for (const f of ["max_tokens", "input_size"]) {
      if (f in pd && !Number.isInteger(pd[f])) {
        throw new BackendError("bad_request", `params/${f}: integer`);
      }
    }
  }
  return obj as unknown as RequestDict;
}

/** JSON with lexicographically sorted keys and no whitespace. */
export function canonical(obj: unknown): string {
  return JSON.stringify(obj, (_key, value) => {
    if (
      typeof value === "object" &&
      value !== null &&
      !Array.isArray(value)
    ) {
      const sorted: Record<string, unknown> = {};
      for (const k of Object.keys(value).sort()) {
        sorted[k] = (value as Record<string, unknown>)[k];
      }
      return sorted;
    }
    return value;
  });
}

export function errorBody(code: string, message: string): string {
  return canonical({ error: { code, message } });
}

export function statusFor(code: string): number {
  switch (code) {
    case "bad_request":
      return 400;
    case "model_not_found":
      return 404;
    case "timeout":
      return 504;
    default:
      return 500;
  }
}
