// Typed client for the evigraph HTTP API. Errors carry the server's stable
// machine-readable code verbatim so the UI can surface it unchanged.

export type SectionName =
  | 'executive_summary'
  | 'picos_analysis'
  | 'causal_graph'
  | 'research_context'
  | 'limitations'

export const SECTION_ORDER: SectionName[] = [
  'executive_summary',
  'picos_analysis',
  'causal_graph',
  'research_context',
  'limitations',
]

export const SECTION_TITLES: Record<SectionName, string> = {
  executive_summary: 'Executive Summary',
  picos_analysis: 'PICOS Evidence Analysis',
  causal_graph: 'Causal Graph',
  research_context: 'Research Context',
  limitations: 'Limitations',
}

export interface GraphNode {
  id: string
  label: string
  role: string
}

export interface EdgeEvidence {
  doc_key: string
  chunk_id: string
}

export interface GraphEdge {
  from: string
  to: string
  kind: string
  evidence: EdgeEvidence[]
}

export interface GraphExport {
  nodes: GraphNode[]
  edges: GraphEdge[]
}

export interface CitedDocument {
  title: string
  abstract: string
  year: number
  issn: string
}

export interface TraceEvent {
  seq: number
  timestamp: string
  kind: string
  name: string
  detail: Record<string, unknown>
}

export interface AskResponsePayload {
  sections: Record<SectionName, string>
  diagram_text: string
  graph: GraphExport
  citations: string[]
  cited_documents: Record<string, CitedDocument>
  trace_id: string
  trace: TraceEvent[]
  word_count: number
}

export interface AskResult {
  session_id: string
  response: AskResponsePayload
}

export interface SessionMessage {
  query: string
  response: AskResponsePayload
}

export interface ScreeningRow {
  key: string
  picos_verdict: string
  picos_rationale: string
  measurement_category: string
  instruments: string[]
  processed_at: string
}

export interface ScreeningResults {
  count: number
  records: ScreeningRow[]
  partitions: Record<string, string[]>
}

export interface HealthInfo {
  status: string
  store_version: number | null
  provider_mode: string
}

export class ApiError extends Error {
  readonly code: string

  constructor(code: string, message: string) {
    super(message)
    this.code = code
  }
}

type FetchLike = typeof fetch

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init)
    } catch (err) {
      throw new ApiError('NETWORK_ERROR', err instanceof Error ? err.message : String(err))
    }
    const text = await response.text()
    let body: unknown = null
    if (text) {
      try {
        body = JSON.parse(text)
      } catch {
        throw new ApiError('BAD_RESPONSE', `unparseable response (HTTP ${response.status})`)
      }
    }
    if (!response.ok) {
      const error = (body as { error?: { code?: string; message?: string } })?.error
      throw new ApiError(
        error?.code ?? `HTTP_${response.status}`,
        error?.message ?? `request failed with HTTP ${response.status}`,
      )
    }
    return body as T
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>('/healthz')
  }

  ask(sessionId: string | null, query: string): Promise<AskResult> {
    return this.request<AskResult>('/ask', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ session_id: sessionId, query }),
    })
  }

  session(sessionId: string): Promise<{ session_id: string; messages: SessionMessage[] }> {
    return this.request(`/session/${encodeURIComponent(sessionId)}`)
  }

  screeningResults(): Promise<ScreeningResults> {
    return this.request<ScreeningResults>('/screen/results')
  }
}
