/** Round trip against the Python consumer: the exported archive must pass
 * its validating reader and every analyze method end to end. */

import assert from "node:assert/strict";
import { spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";

import { exportCheckpoint } from "../src/export.js";
import { initCheckpoint, sampleInputFor } from "../src/model.js";

function pythonAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import ssmctl"], { encoding: "utf-8" });
  return probe.status === 0;
}

function exportTinyArchive(dir: string): string {
  const checkpoint = initCheckpoint({
    seed: 3,
    height: 4,
    width: 4,
    stateDim: 4,
    channels: 2,
    inputChannels: 3,
    numLayers: 2,
  });
  const input = sampleInputFor(checkpoint, 42);
  const { bytes, manifest } = exportCheckpoint(checkpoint, input);
  assert.deepEqual(manifest.stabilityViolations, []);
  const path = join(dir, "exported.ssmz");
  writeFileSync(path, bytes);
  return path;
}

test("exported archive passes the consumer's validating reader", (t) => {
  if (!pythonAvailable()) return t.skip("python3 with ssmctl not available");
  const dir = mkdtempSync(join(tmpdir(), "ssmz-export-"));
  const archive = exportTinyArchive(dir);
  const check = spawnSync(
    "python3",
    [
      "-c",
      "import sys; from ssmctl import load_archive; a = load_archive(sys.argv[1]); " +
        "print(a.num_layers, a.state_dim, a.channels)",
      archive,
    ],
    { encoding: "utf-8" },
  );
  assert.equal(check.status, 0, check.stderr);
  assert.equal(check.stdout.trim(), "2 4 2");
});

test("every analyze method runs on the exported archive", (t) => {
  if (!pythonAvailable()) return t.skip("python3 with ssmctl not available");
  const dir = mkdtempSync(join(tmpdir(), "ssmz-export-"));
  const archive = exportTinyArchive(dir);
  for (const method of ["naive", "jacobian", "jacobian-exact", "gramian"]) {
    const run = spawnSync(
      "python3",
      [
        "-m",
        "ssmctl",
        "analyze",
        archive,
        "--method",
        method,
        "--output-dir",
        join(dir, `out-${method}`),
      ],
      { encoding: "utf-8" },
    );
    assert.equal(run.status, 0, `${method}: ${run.stderr}`);
  }
});
