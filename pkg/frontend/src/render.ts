// DOM rendering for the chat log, response sections, citation side panel and
// error banners. Pure functions of (container, state, handlers): every call
// re-renders from state, so the screen always mirrors it.

import { SECTION_ORDER, SECTION_TITLES } from './api.js'
import type { AskResponsePayload } from './api.js'
import { renderDiagram } from './diagram.js'
import type { ChatMessage, ChatViewState } from './state.js'

export interface Handlers {
  onCitationClick: (messageIndex: number, key: string) => void
  onRetry: (messageIndex: number) => void
  onClosePanel: () => void
}

function el(doc: Document, tag: string, className: string, text?: string): HTMLElement {
  const node = doc.createElement(tag)
  node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

function renderResponse(
  doc: Document,
  message: ChatMessage,
  messageIndex: number,
  handlers: Handlers,
): HTMLElement {
  const response = message.response as AskResponsePayload
  const block = el(doc, 'div', 'response')
  for (const section of SECTION_ORDER) {
    const wrap = el(doc, 'section', `section section-${section}`)
    wrap.setAttribute('data-section', section)
    wrap.appendChild(el(doc, 'h3', 'section-title', SECTION_TITLES[section]))
    if (section === 'causal_graph') {
      const body = el(doc, 'div', 'section-body diagram-holder')
      if (response.graph.nodes.length === 0) {
        body.appendChild(el(doc, 'p', 'empty-graph', 'no grounded causal structure'))
      } else {
        const rendered = renderDiagram(
          doc,
          response.diagram_text,
          response.graph,
          response.cited_documents,
        )
        body.appendChild(rendered.svg)
      }
      wrap.appendChild(body)
    } else {
      wrap.appendChild(el(doc, 'div', 'section-body', response.sections[section]))
    }
    block.appendChild(wrap)
  }

  const citations = el(doc, 'div', 'citations')
  citations.appendChild(el(doc, 'span', 'citations-label', 'Citations:'))
  if (response.citations.length === 0) {
    citations.appendChild(el(doc, 'span', 'no-citations', 'none (no corpus evidence)'))
  }
  for (const key of response.citations) {
    const button = el(doc, 'button', 'citation-link', key) as HTMLButtonElement
    button.setAttribute('data-citation', key)
    button.addEventListener('click', () => handlers.onCitationClick(messageIndex, key))
    citations.appendChild(button)
  }
  block.appendChild(citations)
  return block
}

export function renderMessages(
  doc: Document,
  container: HTMLElement,
  state: ChatViewState,
  handlers: Handlers,
): void {
  container.replaceChildren()
  state.messages.forEach((message, index) => {
    const item = el(doc, 'div', 'message')
    item.setAttribute('data-index', String(index))
    item.appendChild(el(doc, 'div', 'query-bubble', message.query))
    if (message.error) {
      const banner = el(doc, 'div', 'error-banner')
      banner.appendChild(
        el(doc, 'span', 'error-text', `${message.error.code}: ${message.error.message}`),
      )
      const retry = el(doc, 'button', 'retry', 'Retry') as HTMLButtonElement
      retry.addEventListener('click', () => handlers.onRetry(index))
      banner.appendChild(retry)
      item.appendChild(banner)
    } else if (message.response) {
      item.appendChild(renderResponse(doc, message, index, handlers))
    } else {
      item.appendChild(el(doc, 'div', 'pending-bubble', 'retrieving evidence...'))
    }
    container.appendChild(item)
  })
}

export function renderCitationPanel(
  doc: Document,
  panel: HTMLElement,
  state: ChatViewState,
  handlers: Handlers,
): void {
  panel.replaceChildren()
  const citation = state.selectedCitation
  if (!citation) {
    panel.classList.remove('open')
    return
  }
  panel.classList.add('open')
  const close = el(doc, 'button', 'panel-close', 'Close') as HTMLButtonElement
  close.addEventListener('click', () => handlers.onClosePanel())
  panel.appendChild(close)
  if (!citation.found) {
    // A citation that does not resolve would be a grounding bug upstream.
    panel.appendChild(el(doc, 'div', 'citation-missing', `document ${citation.key} not found`))
    return
  }
  panel.appendChild(el(doc, 'h3', 'citation-key', citation.key))
  panel.appendChild(el(doc, 'h2', 'citation-title', citation.title))
  panel.appendChild(el(doc, 'p', 'citation-abstract', citation.abstract))
}
