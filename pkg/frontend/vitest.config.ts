import { defineConfig } from "vitest/config";

// the workflow test talks to a live preview service, so the budgets are
// generous compared to the pure unit tests
export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 30000,
    hookTimeout: 90000,
  },
});
