// Read-only screening dashboard: a filterable table of screening records.

import type { ScreeningResults, ScreeningRow } from './api.js'

export interface DashboardFilter {
  verdict: string // 'ALL' or INCLUDE/EXCLUDE/UNCERTAIN
  category: string // 'ALL' or a measurement category
}

export function filterRows(rows: ScreeningRow[], filter: DashboardFilter): ScreeningRow[] {
  return rows.filter(
    (row) =>
      (filter.verdict === 'ALL' || row.picos_verdict === filter.verdict) &&
      (filter.category === 'ALL' || row.measurement_category === filter.category),
  )
}

export function renderDashboard(
  doc: Document,
  container: HTMLElement,
  results: ScreeningResults,
  filter: DashboardFilter,
  onFilterChange: (filter: DashboardFilter) => void,
): void {
  container.replaceChildren()

  const controls = doc.createElement('div')
  controls.className = 'dashboard-controls'

  const verdictSelect = doc.createElement('select')
  verdictSelect.className = 'filter-verdict'
  for (const option of ['ALL', 'INCLUDE', 'EXCLUDE', 'UNCERTAIN']) {
    const opt = doc.createElement('option')
    opt.value = option
    opt.textContent = option
    if (option === filter.verdict) opt.selected = true
    verdictSelect.appendChild(opt)
  }
  verdictSelect.addEventListener('change', () =>
    onFilterChange({ ...filter, verdict: verdictSelect.value }),
  )
  controls.appendChild(verdictSelect)

  const categories = ['ALL', ...new Set(results.records.map((r) => r.measurement_category))]
  const categorySelect = doc.createElement('select')
  categorySelect.className = 'filter-category'
  for (const option of categories) {
    const opt = doc.createElement('option')
    opt.value = option
    opt.textContent = option
    if (option === filter.category) opt.selected = true
    categorySelect.appendChild(opt)
  }
  categorySelect.addEventListener('change', () =>
    onFilterChange({ ...filter, category: categorySelect.value }),
  )
  controls.appendChild(categorySelect)
  container.appendChild(controls)

  const table = doc.createElement('table')
  table.className = 'screening-table'
  const head = doc.createElement('tr')
  for (const column of ['Key', 'PICOS', 'Rationale', 'Measurement', 'Instruments']) {
    const th = doc.createElement('th')
    th.textContent = column
    head.appendChild(th)
  }
  table.appendChild(head)

  for (const row of filterRows(results.records, filter)) {
    const tr = doc.createElement('tr')
    tr.setAttribute('data-key', row.key)
    for (const value of [
      row.key,
      row.picos_verdict,
      row.picos_rationale,
      row.measurement_category,
      row.instruments.join(', '),
    ]) {
      const td = doc.createElement('td')
      td.textContent = value
      tr.appendChild(td)
    }
    table.appendChild(tr)
  }
  container.appendChild(table)
}
