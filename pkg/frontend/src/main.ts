// Browser entry point: wire the app to the real fetch and 2s polling.
import { initApp } from './app.js'

void initApp(document, {
  fetchFn: (url, init) => window.fetch(url, init),
  pollMs: 2000,
})
