// Chat view state: message list, the single-pending invariant and the
// citation panel. The server owns history; this mirror must match its order.

import type { AskResponsePayload, CitedDocument, SessionMessage } from './api.js'

export interface ChatMessage {
  query: string
  response: AskResponsePayload | null
  error: { code: string; message: string } | null
}

export interface CitationView {
  key: string
  found: boolean
  title: string
  abstract: string
}

export class PendingRequestError extends Error {
  constructor() {
    super('a request is already in flight for this session')
  }
}

export class ChatViewState {
  sessionId: string | null = null
  messages: ChatMessage[] = []
  pending = false
  selectedCitation: CitationView | null = null

  /** Start a submission; rejects while another request is in flight. */
  beginSubmit(query: string): number {
    if (this.pending) {
      throw new PendingRequestError()
    }
    this.pending = true
    this.messages.push({ query, response: null, error: null })
    return this.messages.length - 1
  }

  completeSubmit(index: number, sessionId: string, response: AskResponsePayload): void {
    this.sessionId = sessionId
    this.messages[index].response = response
    this.messages[index].error = null
    this.pending = false
  }

  failSubmit(index: number, code: string, message: string): void {
    this.messages[index].error = { code, message }
    this.pending = false
  }

  /** Drop a failed message so a retry can resubmit the same query. */
  removeMessage(index: number): string {
    const [removed] = this.messages.splice(index, 1)
    return removed.query
  }

  openCitation(key: string, response: AskResponsePayload): CitationView {
    const doc: CitedDocument | undefined = response.cited_documents[key]
    this.selectedCitation = doc
      ? { key, found: true, title: doc.title, abstract: doc.abstract }
      : { key, found: false, title: '', abstract: '' }
    return this.selectedCitation
  }

  closeCitation(): void {
    this.selectedCitation = null
  }

  /**
   * Check this mirror against the server's session history: same length,
   * same queries in the same order. Returns the first mismatch or null.
   */
  orderMismatch(serverMessages: SessionMessage[]): string | null {
    const settled = this.messages.filter((m) => m.response !== null)
    if (settled.length !== serverMessages.length) {
      return `local ${settled.length} settled messages vs server ${serverMessages.length}`
    }
    for (let i = 0; i < settled.length; i += 1) {
      if (settled[i].query !== serverMessages[i].query) {
        return `message ${i}: local ${JSON.stringify(settled[i].query)} vs server ${JSON.stringify(serverMessages[i].query)}`
      }
    }
    return null
  }
}
