// Application controller: wires the API client, view state and renderers to
// a host document. Kept DOM-creation-free above the container level so the
// same controller drives both the live page and scripted tests.

import { ApiClient, ApiError } from './api.js'
import type { ScreeningResults } from './api.js'
import { renderDashboard } from './dashboard.js'
import type { DashboardFilter } from './dashboard.js'
import { renderCitationPanel, renderMessages } from './render.js'
import { ChatViewState, PendingRequestError } from './state.js'

export interface AppElements {
  messages: HTMLElement
  panel: HTMLElement
  input: HTMLInputElement
  send: HTMLButtonElement
  dashboard: HTMLElement
}

export class App {
  readonly state = new ChatViewState()
  private dashboardData: ScreeningResults | null = null
  private dashboardFilter: DashboardFilter = { verdict: 'ALL', category: 'ALL' }

  constructor(
    private readonly doc: Document,
    private readonly elements: AppElements,
    private readonly client: ApiClient,
  ) {
    elements.send.addEventListener('click', () => {
      void this.submit(elements.input.value)
    })
    elements.input.addEventListener('keydown', (event) => {
      if ((event as KeyboardEvent).key === 'Enter') {
        void this.submit(elements.input.value)
      }
    })
  }

  private handlers = {
    onCitationClick: (messageIndex: number, key: string) => this.openCitation(messageIndex, key),
    onRetry: (messageIndex: number) => {
      const query = this.state.removeMessage(messageIndex)
      void this.submit(query)
    },
    onClosePanel: () => {
      this.state.closeCitation()
      this.render()
      this.elements.input.focus() // closing the panel hands focus back to chat
    },
  }

  render(): void {
    renderMessages(this.doc, this.elements.messages, this.state, this.handlers)
    renderCitationPanel(this.doc, this.elements.panel, this.state, this.handlers)
    this.elements.send.disabled = this.state.pending
    if (this.dashboardData) {
      renderDashboard(
        this.doc,
        this.elements.dashboard,
        this.dashboardData,
        this.dashboardFilter,
        (filter) => {
          this.dashboardFilter = filter
          this.render()
        },
      )
    }
  }

  /** Submit a query; returns false when rejected (empty or already pending). */
  async submit(query: string): Promise<boolean> {
    const trimmed = query.trim()
    if (!trimmed) return false
    let index: number
    try {
      index = this.state.beginSubmit(trimmed)
    } catch (err) {
      if (err instanceof PendingRequestError) return false
      throw err
    }
    this.elements.input.value = ''
    this.render() // optimistic query bubble
    try {
      const result = await this.client.ask(this.state.sessionId, trimmed)
      this.state.completeSubmit(index, result.session_id, result.response)
    } catch (err) {
      const apiErr = err instanceof ApiError ? err : new ApiError('UNEXPECTED', String(err))
      this.state.failSubmit(index, apiErr.code, apiErr.message)
    }
    this.render()
    return true
  }

  openCitation(messageIndex: number, key: string): void {
    const response = this.state.messages[messageIndex]?.response
    if (!response) return
    this.state.openCitation(key, response)
    this.render()
  }

  async loadDashboard(): Promise<void> {
    this.dashboardData = await this.client.screeningResults()
    this.render()
  }
}
