import { defineConfig } from "vitest/config";

// The e2e suites build a labeling store through the CLI and boot the review
// service as a child process, which dominates the timing budget.
export default defineConfig({
  test: {
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});
