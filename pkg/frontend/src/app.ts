// Wires the console together: account bar, parameter form, query buttons,
// output cards, and the polled budget/history/verify views.
//
// Everything is injected (document + fetch) so tests can drive the real
// DOM logic against a scripted server.

import { ApiClient, ApiError, type FetchLike, type Meta } from './api.js'
import { showBanner } from './banners.js'
import { addCard, renderCard } from './cards.js'
import { fmt, shortAddress } from './format.js'

export interface AppOptions {
  fetchFn: FetchLike
  base?: string
  pollMs?: number
}

export interface AppHandle {
  refresh: () => Promise<void>
  dispose: () => void
}

function byId<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id)
  if (!el) throw new Error(`missing element #${id}`)
  return el as T
}

export async function initApp(doc: Document, opts: AppOptions): Promise<AppHandle> {
  const client = new ApiClient(opts.fetchFn, opts.base ?? '')
  const pollMs = opts.pollMs ?? 2000

  const accountSelect = byId<HTMLSelectElement>(doc, 'account-select')
  const accountError = byId<HTMLElement>(doc, 'account-error')
  const accountBar = byId<HTMLElement>(doc, 'account-bar')
  const addressEl = byId<HTMLElement>(doc, 'account-address')
  const balanceEl = byId<HTMLElement>(doc, 'account-balance')
  const kindButtons = byId<HTMLElement>(doc, 'query-buttons')
  const columnRow = byId<HTMLElement>(doc, 'column-row')
  const columnSelect = byId<HTMLSelectElement>(doc, 'column-select')
  const predicateToggle = byId<HTMLInputElement>(doc, 'predicate-enabled')
  const predicateFields = byId<HTMLElement>(doc, 'predicate-fields')
  const predicateColumn = byId<HTMLSelectElement>(doc, 'predicate-column')
  const predicateComparator = byId<HTMLSelectElement>(doc, 'predicate-comparator')
  const predicateConstant = byId<HTMLInputElement>(doc, 'predicate-constant')
  const epsilonInput = byId<HTMLInputElement>(doc, 'epsilon-input')
  const deltaInput = byId<HTMLInputElement>(doc, 'delta-input')
  const paramError = byId<HTMLElement>(doc, 'param-error')
  const submitBtn = byId<HTMLButtonElement>(doc, 'submit-btn')
  const banners = byId<HTMLElement>(doc, 'banners')
  const cards = byId<HTMLElement>(doc, 'cards')
  const meterFill = byId<HTMLElement>(doc, 'budget-meter-fill')
  const budgetText = byId<HTMLElement>(doc, 'budget-text')
  const savingsText = byId<HTMLElement>(doc, 'savings-text')
  const historyBody = byId<HTMLElement>(doc, 'history-body')
  const verifyBadge = byId<HTMLElement>(doc, 'verify-badge')

  let selectedKind = ''
  let connectedAccount = ''

  const meta: Meta = await client.meta()

  // Query buttons come from the server's advertised kinds; adding a kind
  // server-side needs no UI change.
  for (const kind of meta.query_kinds) {
    const btn = doc.createElement('button')
    btn.type = 'button'
    btn.className = 'kind-btn'
    btn.dataset.kind = kind
    btn.textContent = kind
    btn.addEventListener('click', () => selectKind(kind))
    kindButtons.appendChild(btn)
  }
  for (const col of meta.schema) {
    for (const select of [columnSelect, predicateColumn]) {
      const opt = doc.createElement('option')
      opt.value = col.name
      opt.textContent = `${col.name} [${col.lo}, ${col.hi}]`
      select.appendChild(opt)
    }
  }
  for (const cmp of meta.comparators) {
    const opt = doc.createElement('option')
    opt.value = cmp
    opt.textContent = cmp
    predicateComparator.appendChild(opt)
  }
  for (const id of meta.accounts) {
    const opt = doc.createElement('option')
    opt.value = id
    opt.textContent = shortAddress(id)
    accountSelect.appendChild(opt)
  }

  function selectKind(kind: string): void {
    selectedKind = kind
    for (const btn of Array.from(kindButtons.querySelectorAll('.kind-btn'))) {
      btn.classList.toggle('selected', (btn as HTMLElement).dataset.kind === kind)
    }
    columnRow.hidden = kind === 'COUNT'
  }
  if (meta.query_kinds.length > 0) selectKind(meta.query_kinds[0])

  predicateToggle.addEventListener('change', () => {
    predicateFields.hidden = !predicateToggle.checked
  })

  async function connect(): Promise<void> {
    accountError.textContent = ''
    const id = accountSelect.value
    if (!id) return
    try {
      const view = await client.account(id)
      connectedAccount = view.account_id
      addressEl.textContent = view.account_id
      balanceEl.textContent = `${fmt(view.balance, 6)} credits`
      accountBar.hidden = false
    } catch (err) {
      connectedAccount = ''
      accountBar.hidden = true
      accountError.textContent = err instanceof ApiError ? err.message : String(err)
    }
  }
  accountSelect.addEventListener('change', connect)

  // Client-side mirror of the server's parameter rules; bad values never
  // leave the page.
  function validateParams(): { epsilon: number; delta: number } | null {
    const epsilon = Number(epsilonInput.value)
    const delta = Number(deltaInput.value)
    if (!Number.isFinite(epsilon) || epsilon <= 0) {
      paramError.textContent = 'epsilon must be a positive number'
      return null
    }
    if (!Number.isFinite(delta) || delta <= 0 || delta > 0.5) {
      paramError.textContent = 'delta must be in (0, 0.5]'
      return null
    }
    paramError.textContent = ''
    return { epsilon, delta }
  }

  async function submit(): Promise<void> {
    if (submitBtn.disabled) return // one in-flight submission at a time
    const params = validateParams()
    if (params === null) return
    if (!connectedAccount) {
      paramError.textContent = 'connect an account first'
      return
    }
    if (!selectedKind) {
      paramError.textContent = 'pick a query type'
      return
    }
    let predicate = null
    if (predicateToggle.checked) {
      const constant = Number(predicateConstant.value)
      if (!Number.isFinite(constant)) {
        paramError.textContent = 'predicate constant must be a number'
        return
      }
      predicate = {
        column: predicateColumn.value,
        comparator: predicateComparator.value,
        constant,
      }
    }
    submitBtn.disabled = true
    try {
      const card = await client.submit({
        account_id: connectedAccount,
        descriptor: {
          kind: selectedKind,
          column: selectedKind === 'COUNT' ? null : columnSelect.value,
          predicate,
        },
        epsilon: params.epsilon,
        delta: params.delta,
      })
      addCard(cards, renderCard(doc, card))
    } catch (err) {
      if (err instanceof ApiError) {
        showBanner(doc, banners, err.code, err.message)
      } else {
        showBanner(doc, banners, 'network', String(err))
      }
    } finally {
      submitBtn.disabled = false
    }
    await Promise.all([connect(), refresh()])
  }
  submitBtn.addEventListener('click', submit)

  async function refresh(): Promise<void> {
    const [budget, history, verify] = await Promise.all([
      client.budget(),
      client.history(),
      client.verify(),
    ])
    const used = budget.epsilon_budget > 0 ? budget.epsilon_spent / budget.epsilon_budget : 0
    meterFill.style.width = `${Math.min(100, used * 100)}%`
    meterFill.classList.toggle('meter-low', budget.epsilon_remaining < 0.1 * budget.epsilon_budget)
    budgetText.textContent =
      `ε spent ${fmt(budget.epsilon_spent)} of ${fmt(budget.epsilon_budget)}` +
      ` (remaining ${fmt(budget.epsilon_remaining)})`
    savingsText.textContent =
      `actual ε ${fmt(budget.actual_epsilon_total)} vs naive ${fmt(budget.naive_epsilon_total)}` +
      ` — savings ratio ${fmt(budget.savings_ratio, 4)} over ${budget.query_count} queries`

    historyBody.textContent = ''
    for (const rec of history) {
      const row = doc.createElement('tr')
      for (const cell of [
        String(rec.index),
        rec.query_id,
        rec.reuse_kind,
        fmt(rec.charged_epsilon),
        fmt(rec.sigma),
      ]) {
        const td = doc.createElement('td')
        td.textContent = cell
        row.appendChild(td)
      }
      historyBody.appendChild(row)
    }

    verifyBadge.classList.toggle('badge-ok', verify.ok)
    verifyBadge.classList.toggle('badge-broken', !verify.ok)
    verifyBadge.textContent = verify.ok
      ? 'ledger intact'
      : `ledger BROKEN at record ${verify.first_bad_index}`
  }

  await connect()
  await refresh()

  let timer: ReturnType<typeof setInterval> | null = null
  if (pollMs > 0) {
    timer = setInterval(() => {
      void refresh()
    }, pollMs)
  }

  return {
    refresh,
    dispose: () => {
      if (timer !== null) clearInterval(timer)
    },
  }
}
