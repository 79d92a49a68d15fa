// Browser entry point: resolve the API base URL, mount the app, load the
// screening dashboard in the background.

import { ApiClient } from './api.js'
import { App } from './app.js'
import type { AppElements } from './app.js'

function apiBase(): string {
  const params = new URLSearchParams(window.location.search)
  const override = params.get('api')
  if (override) return override.replace(/\/$/, '')
  return `${window.location.protocol}//${window.location.hostname}:8080`
}

function mount(): void {
  const elements: AppElements = {
    messages: document.getElementById('messages') as HTMLElement,
    panel: document.getElementById('citation-panel') as HTMLElement,
    input: document.getElementById('query-input') as HTMLInputElement,
    send: document.getElementById('send-button') as HTMLButtonElement,
    dashboard: document.getElementById('dashboard') as HTMLElement,
  }
  const client = new ApiClient(apiBase())
  const app = new App(document, elements, client)
  app.render()
  void client
    .health()
    .then((health) => {
      const status = document.getElementById('status')
      if (status) {
        status.textContent = `store v${health.store_version ?? '-'} | provider ${health.provider_mode}`
      }
    })
    .catch(() => {
      const status = document.getElementById('status')
      if (status) status.textContent = 'server unreachable'
    })
  void app.loadDashboard().catch(() => {
    const dashboard = document.getElementById('dashboard')
    if (dashboard) dashboard.textContent = 'no screening results yet'
  })
}

mount()
