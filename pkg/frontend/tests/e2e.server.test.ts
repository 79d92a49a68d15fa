// Scripted browser test against the real mock-backed server: build the
// knowledge-graph store, start the HTTP service, drive the UI modules in a
// DOM, and verify sections, diagram/export agreement and citation click-through.

import { execFileSync, spawn, type ChildProcess } from 'node:child_process'
import { mkdtempSync, rmSync } from 'node:fs'
import { request } from 'node:http'
import { tmpdir } from 'node:os'
import { join, resolve } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { ApiClient } from '../src/api.js'
import { App } from '../src/app.js'
import { appDom } from './helpers.js'

const REPO_ROOT = resolve(__dirname, '..', '..')
const PORT = 8765 + (process.pid % 300)
const BASE = `http://127.0.0.1:${PORT}`

let server: ChildProcess | null = null
let workdir = ''

function probeHealth(): Promise<boolean> {
  // Raw node:http probe: pre-startup connection refusals stay silent, unlike
  // the DOM fetch polyfill which logs them.
  return new Promise((resolveProbe) => {
    const req = request(`${BASE}/healthz`, { timeout: 1000 }, (res) => {
      res.resume()
      resolveProbe(res.statusCode === 200)
    })
    req.on('error', () => resolveProbe(false))
    req.on('timeout', () => {
      req.destroy()
      resolveProbe(false)
    })
    req.end()
  })
}

async function waitForHealth(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    if (await probeHealth()) return
    await new Promise((r) => setTimeout(r, 250))
  }
  throw new Error(`server did not come up on ${BASE}`)
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), 'evigraph-ui-'))
  const store = join(workdir, 'store.evg')
  execFileSync('python3', ['-m', 'evigraph.cli', 'build-graph', '--store', store], {
    cwd: REPO_ROOT,
    stdio: 'pipe',
  })
  server = spawn(
    'python3',
    ['-m', 'evigraph.cli', 'serve', '--bind', `127.0.0.1:${PORT}`, '--store', store],
    { cwd: REPO_ROOT, stdio: 'pipe' },
  )
  await waitForHealth()
}, 60000)

afterAll(() => {
  server?.kill()
  if (workdir) rmSync(workdir, { recursive: true, force: true })
})

describe('end to end against the mock-backed server', () => {
  it('submits a fixture query and renders a grounded response', async () => {
    const dom = appDom(document)
    const client = new ApiClient(BASE)
    const app = new App(document, dom, client)

    const ok = await app.submit('how does aerobic exercise improve memory in dementia?')
    expect(ok).toBe(true)
    const message = app.state.messages[0]
    expect(message.error).toBeNull()
    const response = message.response!

    // All five sections render, in order.
    const sections = [...dom.messages.querySelectorAll('[data-section]')].map((s) =>
      s.getAttribute('data-section'),
    )
    expect(sections).toEqual([
      'executive_summary',
      'picos_analysis',
      'causal_graph',
      'research_context',
      'limitations',
    ])
    for (const sectionEl of dom.messages.querySelectorAll('.section-body')) {
      expect((sectionEl.textContent ?? '').length).toBeGreaterThan(0)
    }

    // The rendered diagram matches the structured export exactly.
    const svg = dom.messages.querySelector('svg.causal-diagram')
    expect(svg).not.toBeNull()
    const renderedEdges = svg!.querySelectorAll('g.edge')
    const renderedNodes = svg!.querySelectorAll('g.node')
    expect(renderedEdges.length).toBe(response.graph.edges.length)
    expect(renderedNodes.length).toBe(response.graph.nodes.length)
    expect(response.graph.edges.length).toBeGreaterThan(0)

    // Every rendered edge offers an evidence popover naming a cited document.
    for (const edge of renderedEdges) {
      const evidence = edge.getAttribute('data-evidence') ?? ''
      expect(evidence).toMatch(/D\d{3}: \S/)
    }

    // A citation click opens the matching abstract in the side panel.
    expect(response.citations.length).toBeGreaterThan(0)
    const firstKey = response.citations[0]
    const link = dom.messages.querySelector(
      `button.citation-link[data-citation="${firstKey}"]`,
    ) as HTMLButtonElement
    expect(link).not.toBeNull()
    link.click()
    expect(dom.panel.classList.contains('open')).toBe(true)
    const title = dom.panel.querySelector('.citation-title')?.textContent ?? ''
    expect(title).toBe(response.cited_documents[firstKey].title)
    const abstract = dom.panel.querySelector('.citation-abstract')?.textContent ?? ''
    expect(abstract).toBe(response.cited_documents[firstKey].abstract)
  })

  it('mirrors server-side session history order', async () => {
    const dom = appDom(document)
    const client = new ApiClient(BASE)
    const app = new App(document, dom, client)
    await app.submit('tai chi and memory in alzheimer patients')
    await app.submit('what does tug measure?')
    const session = await client.session(app.state.sessionId!)
    expect(app.state.orderMismatch(session.messages)).toBeNull()
  })

  it('answers honestly for an off-corpus query', async () => {
    const dom = appDom(document)
    const client = new ApiClient(BASE)
    const app = new App(document, dom, client)
    await app.submit('what links quasar jets and sourdough fermentation?')
    const response = app.state.messages[0].response!
    expect(response.citations).toEqual([])
    expect(response.graph.edges).toEqual([])
    expect(dom.messages.querySelector('.no-citations')).not.toBeNull()
    expect(dom.messages.querySelector('.empty-graph')).not.toBeNull()
  })

  it('loads the screening dashboard after a screening run', async () => {
    const run = await fetch(`${BASE}/screen/run`, { method: 'POST' })
    expect(run.ok).toBe(true)
    // Screening runs as a background job; poll until results settle.
    const deadline = Date.now() + 20000
    let count = 0
    while (Date.now() < deadline) {
      const results = await fetch(`${BASE}/screen/results`).then((r) => r.json())
      count = results.count
      if (count === 20) break
      await new Promise((r) => setTimeout(r, 250))
    }
    expect(count).toBe(20)

    const dom = appDom(document)
    const app = new App(document, dom, new ApiClient(BASE))
    await app.loadDashboard()
    expect(dom.dashboard.querySelectorAll('tr[data-key]')).toHaveLength(20)
    const verdict = dom.dashboard.querySelector('select.filter-verdict') as HTMLSelectElement
    verdict.value = 'UNCERTAIN'
    verdict.dispatchEvent(new Event('change'))
    const keys = [...dom.dashboard.querySelectorAll('tr[data-key]')].map((tr) =>
      tr.getAttribute('data-key'),
    )
    expect(keys.sort()).toEqual(['D006', 'D007'])
  })
})
