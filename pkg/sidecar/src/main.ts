import { parseArgs } from "node:util";
import { makeBackend } from "./backends.js";
import { serve } from "./server.js";

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      backend: { type: "string", default: "test" },
      model: { type: "string", default: "Xenova/clip-vit-base-patch32" },
    },
  });
  const backend = await makeBackend(values.backend as string, values.model as string);
  await serve(backend, process.stdin, process.stdout);
}

main().catch((err) => {
  process.stderr.write(`fatal: ${(err as Error).message}\n`);
  process.exit(1);
});
