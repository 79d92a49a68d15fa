// Renders the engine's Mermaid-subset diagram text as an SVG.
//
// The UI never re-derives graph structure: it parses the exact text the
// engine emitted, cross-checks node/edge counts against the structured graph
// export, and attaches per-edge evidence popovers from the export. Any
// divergence between text and export is a bug and raised loudly.

import type { CitedDocument, GraphEdge, GraphExport } from './api.js'

export interface ParsedDiagram {
  nodes: Map<string, string> // id -> label
  edges: { from: string; to: string; kind: string }[]
}

export class DiagramError extends Error {}

const CONFOUNDS_RE = /^(\S+) -\. confounds \.-> (\S+)$/
const MODERATES_RE = /^(\S+) -\.-> (\S+)$/
const CAUSAL_RE = /^(\S+) --> (\S+)$/
const NODE_RE = /^(\S+)\[(.*)\]$/

export function parseDiagram(text: string): ParsedDiagram {
  const lines = text.split('\n').filter((line) => line.trim().length > 0)
  if (lines.length === 0 || lines[0].trim() !== 'graph LR') {
    throw new DiagramError("diagram text must start with 'graph LR'")
  }
  const nodes = new Map<string, string>()
  const edges: ParsedDiagram['edges'] = []
  for (const raw of lines.slice(1)) {
    const line = raw.trim()
    let match = CONFOUNDS_RE.exec(line)
    if (match) {
      edges.push({ from: match[1], to: match[2], kind: 'confounds' })
      continue
    }
    match = MODERATES_RE.exec(line)
    if (match) {
      edges.push({ from: match[1], to: match[2], kind: 'moderates' })
      continue
    }
    match = CAUSAL_RE.exec(line)
    if (match) {
      edges.push({ from: match[1], to: match[2], kind: 'causal' })
      continue
    }
    match = NODE_RE.exec(line)
    if (match) {
      nodes.set(match[1], match[2])
      continue
    }
    throw new DiagramError(`unrecognized diagram line: ${line}`)
  }
  return { nodes, edges }
}

/** Left-to-right layers: longest causal path from any root. */
export function layoutLayers(parsed: ParsedDiagram): Map<string, number> {
  const layer = new Map<string, number>()
  const ids = [...parsed.nodes.keys()].sort()
  for (const id of ids) layer.set(id, 0)
  const causal = parsed.edges.filter((e) => e.kind === 'causal')
  // Relax longest-path; the engine guarantees the causal subgraph is acyclic,
  // so |nodes| passes suffice.
  for (let pass = 0; pass < ids.length + 1; pass += 1) {
    let changed = false
    for (const edge of causal) {
      const candidate = (layer.get(edge.from) ?? 0) + 1
      if (candidate > (layer.get(edge.to) ?? 0)) {
        layer.set(edge.to, candidate)
        changed = true
      }
    }
    if (!changed) break
  }
  return layer
}

export interface RenderedDiagram {
  svg: SVGSVGElement
  nodeCount: number
  edgeCount: number
}

export interface EvidencePopover {
  from: string
  to: string
  kind: string
  entries: { docKey: string; title: string }[]
}

export function edgePopover(
  edge: GraphEdge,
  citedDocuments: Record<string, CitedDocument>,
): EvidencePopover {
  const seen = new Set<string>()
  const entries: EvidencePopover['entries'] = []
  for (const ev of edge.evidence) {
    if (seen.has(ev.doc_key)) continue
    seen.add(ev.doc_key)
    entries.push({
      docKey: ev.doc_key,
      title: citedDocuments[ev.doc_key]?.title ?? '(document not in citation set)',
    })
  }
  return { from: edge.from, to: edge.to, kind: edge.kind, entries }
}

const NODE_W = 150
const NODE_H = 40
const X_GAP = 210
const Y_GAP = 66
const SVG_NS = 'http://www.w3.org/2000/svg'

export function renderDiagram(
  doc: Document,
  diagramText: string,
  graph: GraphExport,
  citedDocuments: Record<string, CitedDocument>,
): RenderedDiagram {
  const parsed = parseDiagram(diagramText)
  if (parsed.nodes.size !== graph.nodes.length) {
    throw new DiagramError(
      `diagram has ${parsed.nodes.size} nodes but the export has ${graph.nodes.length}`,
    )
  }
  if (parsed.edges.length !== graph.edges.length) {
    throw new DiagramError(
      `diagram has ${parsed.edges.length} edges but the export has ${graph.edges.length}`,
    )
  }

  const layers = layoutLayers(parsed)
  const perLayer = new Map<number, string[]>()
  for (const id of [...parsed.nodes.keys()].sort()) {
    const l = layers.get(id) ?? 0
    if (!perLayer.has(l)) perLayer.set(l, [])
    perLayer.get(l)!.push(id)
  }
  const positions = new Map<string, { x: number; y: number }>()
  let maxRow = 0
  for (const [l, members] of perLayer) {
    members.forEach((id, row) => {
      positions.set(id, { x: 20 + l * X_GAP, y: 20 + row * Y_GAP })
      maxRow = Math.max(maxRow, row)
    })
  }
  const width = 60 + (Math.max(...[...perLayer.keys()], 0) + 1) * X_GAP
  const height = 60 + (maxRow + 1) * Y_GAP

  const svg = doc.createElementNS(SVG_NS, 'svg') as SVGSVGElement
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`)
  svg.setAttribute('width', String(width))
  svg.setAttribute('height', String(height))
  svg.setAttribute('class', 'causal-diagram')
  svg.setAttribute('role', 'img')

  const defs = doc.createElementNS(SVG_NS, 'defs')
  const marker = doc.createElementNS(SVG_NS, 'marker')
  marker.setAttribute('id', 'arrow')
  marker.setAttribute('markerWidth', '8')
  marker.setAttribute('markerHeight', '8')
  marker.setAttribute('refX', '7')
  marker.setAttribute('refY', '3')
  marker.setAttribute('orient', 'auto')
  const arrow = doc.createElementNS(SVG_NS, 'path')
  arrow.setAttribute('d', 'M0,0 L7,3 L0,6 Z')
  marker.appendChild(arrow)
  defs.appendChild(marker)
  svg.appendChild(defs)

  const exportByTriple = new Map<string, GraphEdge>()
  for (const edge of graph.edges) {
    exportByTriple.set(`${edge.from}|${edge.to}|${edge.kind}`, edge)
  }

  for (const edge of parsed.edges) {
    const from = positions.get(edge.from)
    const to = positions.get(edge.to)
    if (!from || !to) {
      throw new DiagramError(`edge references unknown node: ${edge.from} -> ${edge.to}`)
    }
    const group = doc.createElementNS(SVG_NS, 'g')
    group.setAttribute('class', `edge edge-${edge.kind}`)
    group.setAttribute('data-from', edge.from)
    group.setAttribute('data-to', edge.to)
    group.setAttribute('data-kind', edge.kind)

    const line = doc.createElementNS(SVG_NS, 'line')
    line.setAttribute('x1', String(from.x + NODE_W))
    line.setAttribute('y1', String(from.y + NODE_H / 2))
    line.setAttribute('x2', String(to.x))
    line.setAttribute('y2', String(to.y + NODE_H / 2))
    line.setAttribute('marker-end', 'url(#arrow)')
    if (edge.kind !== 'causal') {
      line.setAttribute('stroke-dasharray', '6 4')
    }
    group.appendChild(line)

    const exported = exportByTriple.get(`${edge.from}|${edge.to}|${edge.kind}`)
    if (exported) {
      const popover = edgePopover(exported, citedDocuments)
      group.setAttribute(
        'data-evidence',
        popover.entries.map((e) => `${e.docKey}: ${e.title}`).join('\n'),
      )
      const tooltip = doc.createElementNS(SVG_NS, 'title')
      tooltip.textContent = popover.entries
        .map((e) => `${e.docKey}: ${e.title}`)
        .join('\n')
      group.appendChild(tooltip)
    }
    if (edge.kind === 'confounds') {
      const label = doc.createElementNS(SVG_NS, 'text')
      label.setAttribute('x', String((from.x + NODE_W + to.x) / 2))
      label.setAttribute('y', String((from.y + to.y + NODE_H) / 2 - 6))
      label.setAttribute('class', 'edge-label')
      label.textContent = 'confounds'
      group.appendChild(label)
    }
    svg.appendChild(group)
  }

  for (const [id, label] of parsed.nodes) {
    const pos = positions.get(id)!
    const group = doc.createElementNS(SVG_NS, 'g')
    group.setAttribute('class', 'node')
    group.setAttribute('data-node-id', id)
    const rect = doc.createElementNS(SVG_NS, 'rect')
    rect.setAttribute('x', String(pos.x))
    rect.setAttribute('y', String(pos.y))
    rect.setAttribute('width', String(NODE_W))
    rect.setAttribute('height', String(NODE_H))
    rect.setAttribute('rx', '8')
    group.appendChild(rect)
    const text = doc.createElementNS(SVG_NS, 'text')
    text.setAttribute('x', String(pos.x + NODE_W / 2))
    text.setAttribute('y', String(pos.y + NODE_H / 2 + 4))
    text.setAttribute('text-anchor', 'middle')
    text.textContent = label
    group.appendChild(text)
    svg.appendChild(group)
  }

  return { svg, nodeCount: parsed.nodes.size, edgeCount: parsed.edges.length }
}
