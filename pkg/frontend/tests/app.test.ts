import { describe, expect, it, vi } from 'vitest'

import { ApiClient, ApiError, SECTION_ORDER } from '../src/api.js'
import { App } from '../src/app.js'
import { filterRows } from '../src/dashboard.js'
import { appDom, sampleResult } from './helpers.js'

function appWith(client: Partial<ApiClient>): { app: App; dom: ReturnType<typeof appDom> } {
  const dom = appDom(document)
  const app = new App(document, dom, client as ApiClient)
  return { app, dom }
}

describe('App submit flow', () => {
  it('renders the optimistic bubble, then all five sections in order', async () => {
    let resolveAsk: (value: ReturnType<typeof sampleResult>) => void = () => {}
    const askPromise = new Promise<ReturnType<typeof sampleResult>>((resolve) => {
      resolveAsk = resolve
    })
    const { app, dom } = appWith({ ask: vi.fn().mockReturnValue(askPromise) })

    const submitted = app.submit('how does exercise help memory?')
    expect(dom.messages.querySelectorAll('.query-bubble')).toHaveLength(1)
    expect(dom.messages.querySelector('.pending-bubble')).not.toBeNull()
    expect(dom.send.disabled).toBe(true)

    resolveAsk(sampleResult())
    await submitted

    const sections = [...dom.messages.querySelectorAll('[data-section]')].map((s) =>
      s.getAttribute('data-section'),
    )
    expect(sections).toEqual(SECTION_ORDER)
    expect(dom.messages.querySelector('svg.causal-diagram')).not.toBeNull()
    expect(dom.messages.querySelectorAll('.citation-link')).toHaveLength(1)
    expect(dom.send.disabled).toBe(false)
  })

  it('rejects a second submit while one is pending', async () => {
    let resolveAsk: (value: ReturnType<typeof sampleResult>) => void = () => {}
    const askPromise = new Promise<ReturnType<typeof sampleResult>>((resolve) => {
      resolveAsk = resolve
    })
    const ask = vi.fn().mockReturnValue(askPromise)
    const { app } = appWith({ ask })

    const first = app.submit('first')
    const second = await app.submit('second')
    expect(second).toBe(false)
    expect(ask).toHaveBeenCalledTimes(1)
    resolveAsk(sampleResult())
    await first
    expect(app.state.messages.map((m) => m.query)).toEqual(['first'])
  })

  it('ignores empty queries', async () => {
    const ask = vi.fn()
    const { app } = appWith({ ask })
    expect(await app.submit('   ')).toBe(false)
    expect(ask).not.toHaveBeenCalled()
  })

  it('surfaces server error codes verbatim with a retry affordance', async () => {
    const ask = vi
      .fn()
      .mockRejectedValueOnce(new ApiError('STORE_NOT_LOADED', 'no graph store loaded'))
      .mockResolvedValueOnce(sampleResult())
    const { app, dom } = appWith({ ask })

    await app.submit('any question')
    const banner = dom.messages.querySelector('.error-banner')
    expect(banner?.textContent).toContain('STORE_NOT_LOADED')

    const retry = dom.messages.querySelector('button.retry') as HTMLButtonElement
    retry.click()
    await vi.waitFor(() => {
      expect(app.state.messages[0]?.response).not.toBeNull()
    })
    expect(ask).toHaveBeenCalledTimes(2)
    expect(ask.mock.calls[1][1]).toBe('any question')
    expect(dom.messages.querySelector('.error-banner')).toBeNull()
  })

  it('keeps local order equal to server history across submits', async () => {
    const ask = vi
      .fn()
      .mockResolvedValueOnce(sampleResult('session-1'))
      .mockResolvedValueOnce(sampleResult('session-1'))
    const { app } = appWith({ ask })
    await app.submit('q1')
    await app.submit('q2')
    const payload = sampleResult().response
    const server = [
      { query: 'q1', response: payload },
      { query: 'q2', response: payload },
    ]
    expect(app.state.orderMismatch(server)).toBeNull()
  })
})

describe('citation panel', () => {
  it('opens the abstract for a cited key and restores focus on close', async () => {
    const ask = vi.fn().mockResolvedValue(sampleResult())
    const { app, dom } = appWith({ ask })
    await app.submit('question about exercise')

    const link = dom.messages.querySelector('button.citation-link') as HTMLButtonElement
    link.click()
    expect(dom.panel.classList.contains('open')).toBe(true)
    expect(dom.panel.querySelector('.citation-title')?.textContent).toBe(
      'aerobic exercise and memory in dementia',
    )
    expect(dom.panel.querySelector('.citation-abstract')?.textContent).toContain(
      'aerobic exercise increased bdnf',
    )

    const close = dom.panel.querySelector('button.panel-close') as HTMLButtonElement
    close.click()
    expect(dom.panel.classList.contains('open')).toBe(false)
    expect(document.activeElement).toBe(dom.input)
  })

  it('shows a not-found state for an unresolvable key', async () => {
    const result = sampleResult()
    result.response.citations = ['GHOST']
    const ask = vi.fn().mockResolvedValue(result)
    const { app, dom } = appWith({ ask })
    await app.submit('question')
    ;(dom.messages.querySelector('button.citation-link') as HTMLButtonElement).click()
    expect(dom.panel.querySelector('.citation-missing')?.textContent).toContain('GHOST')
  })
})

describe('screening dashboard', () => {
  const rows = [
    { key: 'D1', picos_verdict: 'INCLUDE', picos_rationale: 'rct', measurement_category: 'objective_only', instruments: ['mmse'], processed_at: 't' },
    { key: 'D2', picos_verdict: 'EXCLUDE', picos_rationale: 'scope', measurement_category: 'survey_only', instruments: [], processed_at: 't' },
    { key: 'D3', picos_verdict: 'INCLUDE', picos_rationale: 'rct', measurement_category: 'mixed_methods', instruments: ['gds', 'moca'], processed_at: 't' },
  ]

  it('filters by verdict and category', () => {
    expect(filterRows(rows, { verdict: 'ALL', category: 'ALL' })).toHaveLength(3)
    expect(filterRows(rows, { verdict: 'INCLUDE', category: 'ALL' })).toHaveLength(2)
    expect(filterRows(rows, { verdict: 'INCLUDE', category: 'mixed_methods' })).toHaveLength(1)
    expect(filterRows(rows, { verdict: 'UNCERTAIN', category: 'ALL' })).toHaveLength(0)
  })

  it('renders a read-only table and re-filters on selection', async () => {
    const screeningResults = vi.fn().mockResolvedValue({
      count: rows.length,
      records: rows,
      partitions: { INCLUDE: ['D1', 'D3'], EXCLUDE: ['D2'], UNCERTAIN: [] },
    })
    const { app, dom } = appWith({ screeningResults })
    await app.loadDashboard()
    expect(dom.dashboard.querySelectorAll('tr[data-key]')).toHaveLength(3)

    const verdict = dom.dashboard.querySelector('select.filter-verdict') as HTMLSelectElement
    verdict.value = 'EXCLUDE'
    verdict.dispatchEvent(new Event('change'))
    expect(dom.dashboard.querySelectorAll('tr[data-key]')).toHaveLength(1)
    expect(dom.dashboard.querySelector('tr[data-key]')?.getAttribute('data-key')).toBe('D2')
  })
})
