import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** A failure reported by the CLI, carrying its machine-parsable error kind. */
export class CliError extends Error {
  constructor(
    readonly kind: string,
    message: string,
    readonly exitCode: number,
  ) {
    super(message);
    this.name = "CliError";
  }
}

export interface RunnerOptions {
  /** Command used to launch the CLI, e.g. ["python3", "-m", "actionsets"]. */
  command?: string[];
}

let cachedCommand: string[] | undefined;

function candidateCommands(): string[][] {
  const fromEnv = process.env.ACTIONSETS_CLI;
  if (fromEnv) return [fromEnv.split(" ").filter((s) => s.length > 0)];
  return [["actionsets"], ["python3", "-m", "actionsets"]];
}

/** Locate a working CLI entry point once and reuse it. */
export function resolveCommand(options?: RunnerOptions): string[] {
  if (options?.command) return options.command;
  if (cachedCommand) return cachedCommand;
  for (const candidate of candidateCommands()) {
    const probe = spawnSync(candidate[0], [...candidate.slice(1), "--version"], {
      encoding: "utf8",
    });
    if (probe.status === 0) {
      cachedCommand = candidate;
      return candidate;
    }
  }
  throw new Error(
    "cannot find the actionsets CLI; install the package or set ACTIONSETS_CLI",
  );
}

const ERROR_LINE = /^error\[([a-z]+)\]: (.*)$/m;

/** Run one CLI invocation and return stdout; CLI failures become CliError. */
export function runCli(args: string[], options?: RunnerOptions): string {
  const command = resolveCommand(options);
  const proc = spawnSync(command[0], [...command.slice(1), ...args], {
    encoding: "utf8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.error) throw proc.error;
  if (proc.status !== 0) {
    const match = ERROR_LINE.exec(proc.stderr ?? "");
    const kind = match ? match[1] : "unknown";
    const message = match ? match[2] : (proc.stderr ?? "").trim();
    throw new CliError(kind, message, proc.status ?? -1);
  }
  return proc.stdout;
}

/** Write payload files into a temp dir, run the CLI, and always clean up. */
export function withTempFiles<T>(
  files: Record<string, string>,
  body: (paths: Record<string, string>) => T,
): T {
  const dir = mkdtempSync(join(tmpdir(), "actionsets-"));
  try {
    const paths: Record<string, string> = {};
    for (const [name, content] of Object.entries(files)) {
      const path = join(dir, name);
      writeFileSync(path, content, "utf8");
      paths[name] = path;
    }
    return body(paths);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
