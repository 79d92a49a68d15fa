import type { AskResponsePayload, AskResult } from '../src/api.js'

export function samplePayload(overrides: Partial<AskResponsePayload> = {}): AskResponsePayload {
  return {
    sections: {
      executive_summary: 'evidence from 2 corpus documents addresses: sample query [D001]',
      picos_analysis: 'population: dementia patients [D001]',
      causal_graph: 'graph LR',
      research_context: '[D001] supporting excerpt text',
      limitations: 'none identified',
    },
    diagram_text: 'graph LR\nbdnf[Bdnf]\nexercise[Exercise]\nexercise --> bdnf',
    graph: {
      nodes: [
        { id: 'bdnf', label: 'Bdnf', role: 'mediator' },
        { id: 'exercise', label: 'Exercise', role: 'intervention' },
      ],
      edges: [
        {
          from: 'exercise',
          to: 'bdnf',
          kind: 'causal',
          evidence: [{ doc_key: 'D001', chunk_id: 'D001:0' }],
        },
      ],
    },
    citations: ['D001'],
    cited_documents: {
      D001: {
        title: 'aerobic exercise and memory in dementia',
        abstract: 'aerobic exercise increased bdnf in dementia patients.',
        year: 2022,
        issn: '2210-8335',
      },
    },
    trace_id: 'trace-0001',
    trace: [],
    word_count: 42,
    ...overrides,
  }
}

export function sampleResult(sessionId = 'session-0001'): AskResult {
  return { session_id: sessionId, response: samplePayload() }
}

export function appDom(doc: Document) {
  const messages = doc.createElement('div')
  const panel = doc.createElement('aside')
  const input = doc.createElement('input') as HTMLInputElement
  const send = doc.createElement('button') as HTMLButtonElement
  const dashboard = doc.createElement('div')
  for (const node of [messages, panel, input, send, dashboard]) {
    doc.body.appendChild(node)
  }
  return { messages, panel, input, send, dashboard }
}
