import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globals: true,
    testTimeout: 30_000,
    hookTimeout: 60_000,
    fileParallelism: false, // each server test file spawns its own service
  },
});
