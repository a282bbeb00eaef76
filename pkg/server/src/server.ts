/**
 * Reference inference-backend server.
 *
 * Routes:
 *   POST /v1/infer   canonical-JSON request -> canonical-JSON response
 *   GET  /v1/health  {"status": "ok", "models": [...]}
 *
 * Responses to `generate` requests are cached by Idempotency-Key so retried
 * calls replay the original result. A "flaky" wrapper mount fails with 503 a
 * configurable number of times per idempotency key before succeeding, which
 * lets clients exercise their retry policy end to end.
 */

import * as http from "http";
import { canonical, errorBody, statusFor, validateRequest } from "./protocol";
import { BackendError, Handler, RequestDict, STUB_MODELS } from "./stubs";

export interface FlakySpec {
  model_id: string;
  wraps: string;
  failures_before_success: number;
}

export interface MountConfig {
  mounts?: { model_id: string }[];
  flaky?: FlakySpec[];
}

export interface ServerOptions {
  mounts?: MountConfig;
}

export function buildHandlers(config?: MountConfig): Record<string, Handler> {
  const handlers: Record<string, Handler> = {};
  const wanted = config?.mounts?.map((m) => m.model_id) ?? Object.keys(
    STUB_MODELS
  );
  for (const id of wanted) {
    const h = STUB_MODELS[id];
    if (!h) throw new Error(`unknown stub mount: ${id}`);
    handlers[id] = h;
  }
  return handlers;
}

export function createServer(options: ServerOptions = {}): http.Server {
  const handlers = buildHandlers(options.mounts);
  const flakySpecs = options.mounts?.flaky ?? [];
  // idempotency key -> remaining failures, per flaky mount
  const flakyState = new Map<string, number>();
  // idempotency key -> response body, for generate requests
  const generateCache = new Map<string, string>();

  const fail = (res: http.ServerResponse, code: string, message: string) => {
    const body = errorBody(code, message);
    res.writeHead(statusFor(code), {
      "Content-Type": "application/json",
      "Content-Length": Buffer.byteLength(body),
    });
    res.end(body);
  };

  return http.createServer((req, res) => {
    if (req.method === "GET" && req.url === "/v1/health") {
      const models = Object.keys(handlers).concat(
        flakySpecs.map((f) => f.model_id)
      );
      const body = canonical({ models: models.sort(), status: "ok" });
      res.writeHead(200, { "Content-Type": "application/json" });
      res.end(body);
      return;
    }
    if (req.method !== "POST" || req.url !== "/v1/infer") {
      fail(res, "bad_request", `no route for ${req.method} ${req.url}`);
      return;
    }
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", () => {
      const raw = Buffer.concat(chunks).toString("utf-8");
      let parsed: unknown;
      try {
        parsed = JSON.parse(raw);
      } catch (e) {
        fail(res, "bad_request", `invalid JSON: ${(e as Error).message}`);
        return;
      }
      let request: RequestDict;
      try {
        request = validateRequest(parsed);
      } catch (e) {
        if (e instanceof BackendError) {
          fail(res, e.code, e.message);
          return;
        }
        throw e;
      }
      const key = req.headers["idempotency-key"];
      const idemKey = typeof key === "string" ? key : null;

      const flaky = flakySpecs.find((f) => f.model_id === request.model_id);
      let handler = handlers[request.model_id];
      if (flaky) {
        const stateKey = `${flaky.model_id}:${idemKey ?? "-"}`;
        const left =
          flakyState.get(stateKey) ?? flaky.failures_before_success;
        if (left > 0) {
          flakyState.set(stateKey, left - 1);
          const body = errorBody("timeout", "transient backend overload");
          res.writeHead(503, {
            "Content-Type": "application/json",
            "Content-Length": Buffer.byteLength(body),
          });
          res.end(body);
          return;
        }
        handler = handlers[flaky.wraps] ?? STUB_MODELS[flaky.wraps];
      }
      if (!handler) {
        fail(res, "model_not_found", request.model_id);
        return;
      }

      if (request.task === "generate" && idemKey) {
        const cached = generateCache.get(idemKey);
        if (cached !== undefined) {
          res.writeHead(200, { "Content-Type": "application/json" });
          res.end(cached);
          return;
        }
      }

      const started = process.hrtime.bigint();
      let payload: Record<string, unknown>;
      try {
        payload = handler(request);
      } catch (e) {
        if (e instanceof BackendError) {
          fail(res, e.code, e.message);
        } else {
          fail(res, "inference_failed", (e as Error).message);
        }
        return;
      }
      const latencyMs =
        Number(process.hrtime.bigint() - started) / 1e6;
      const body = canonical({
        model_id: request.model_id,
        latency_ms: latencyMs,
        ...payload,
      });
      if (request.task === "generate" && idemKey) {
        generateCache.set(idemKey, body);
      }
      res.writeHead(200, {
        "Content-Type": "application/json",
        "Content-Length": Buffer.byteLength(body),
      });
      res.end(body);
    });
  });
}
