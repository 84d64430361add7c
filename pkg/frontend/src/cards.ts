import type { Card } from './api.js'
import { fmt } from './format.js'

// The seven card fields, in display order. The query id lives in the
// header; the other six go in the body.
const BODY_FIELDS: Array<[label: string, key: keyof Card, digits: number]> = [
  ['Query type', 'query_type', 0],
  ['Noisy response', 'noisy_response', 6],
  ['Standard deviation (σ)', 'sigma', 6],
  ['Blockchain price', 'blockchain_price', 6],
  ['Privacy cost (ε)', 'privacy_cost_epsilon', 6],
  ['Remaining budget (ε)', 'remaining_budget_epsilon', 6],
]

export function renderCard(doc: Document, card: Card): HTMLElement {
  const el = doc.createElement('article')
  el.className = 'card'
  el.dataset.queryId = card.query_id

  const header = doc.createElement('header')
  header.className = 'card-header'
  header.textContent = card.query_id
  const chip = doc.createElement('span')
  chip.className = `chip chip-${card.reuse_kind}`
  chip.textContent = card.reuse_kind.replace('_', ' ')
  header.appendChild(chip)
  el.appendChild(header)

  const list = doc.createElement('dl')
  list.className = 'card-body'
  for (const [label, key, digits] of BODY_FIELDS) {
    const dt = doc.createElement('dt')
    dt.textContent = label
    const dd = doc.createElement('dd')
    dd.dataset.field = key
    const value = card[key]
    if (typeof value === 'number') {
      dd.textContent = fmt(value, digits || 6)
      dd.title = String(value)
    } else {
      dd.textContent = String(value)
    }
    list.appendChild(dt)
    list.appendChild(dd)
  }
  el.appendChild(list)
  return el
}

// Cards are append-only for the session: new results never replace or
// mutate earlier ones, they pop up in front.
export function addCard(container: HTMLElement, card: HTMLElement): void {
  container.prepend(card)
}
