#!/usr/bin/env node
/** `node dist/cli.js serve [--port N] [--mounts FILE]` */

import * as fs from "fs";
import { createServer, MountConfig } from "./server";

function main(argv: string[]): void {
  const [command, ...rest] = argv;
  if (command !== "serve") {
    process.stderr.write("usage: cli.js serve [--port N] [--mounts FILE]\n");
    process.exit(2);
  }
  let port = 8787;
  let mounts: MountConfig | undefined;
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "--port") {
      port = parseInt(rest[++i], 10);
      if (!Number.isInteger(port) || port < 0) {
        process.stderr.write("invalid --port\n");
        process.exit(2);
      }
    } else if (rest[i] === "--mounts") {
      mounts = JSON.parse(fs.readFileSync(rest[++i], "utf-8"));
    } else {
      process.stderr.write(`unknown argument: ${rest[i]}\n`);
      process.exit(2);
    }
  }
  const server = createServer({ mounts });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address();
    const bound = typeof addr === "object" && addr ? addr.port : port;
    // readiness line consumed by callers that pass --port 0
    process.stdout.write(`listening on http://127.0.0.1:${bound}\n`);
  });
  for (const sig of ["SIGINT", "SIGTERM"] as const) {
    process.on(sig, () => {
      server.close(() => process.exit(0));
    });
  }
}

main(process.argv.slice(2));
