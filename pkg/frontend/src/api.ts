// Typed client for the query-service API. The UI never computes privacy
// math: every number it shows originates from one of these responses.

export interface ColumnInfo {
  name: string
  lo: number
  hi: number
}

export interface Meta {
  schema: ColumnInfo[]
  query_kinds: string[]
  comparators: string[]
  fees: { base_fee: number; per_byte_fee: number }
  dataset: { rows: number }
  accounts: string[]
}

export interface AccountView {
  account_id: string
  balance: number
}

export interface PredicateBody {
  column: string
  comparator: string
  constant: number
}

export interface DescriptorBody {
  kind: string
  column: string | null
  predicate: PredicateBody | null
}

export interface QueryRequest {
  account_id: string
  descriptor: DescriptorBody
  epsilon: number
  delta: number
}

export interface Card {
  query_id: string
  query_type: string
  noisy_response: number
  sigma: number
  blockchain_price: number
  privacy_cost_epsilon: number
  remaining_budget_epsilon: number
  reuse_kind: string
  record_index: number
}

export interface Budget {
  epsilon_budget: number
  delta_budget: number
  epsilon_spent: number
  delta_spent: number
  epsilon_remaining: number
  delta_remaining: number
  naive_epsilon_total: number
  actual_epsilon_total: number
  savings_ratio: number
  query_count: number
}

export interface LedgerRecord {
  index: number
  query_id: string
  reuse_kind: string
  charged_epsilon: number
  sigma: number
  account_id: string
  descriptor: DescriptorBody
}

export interface VerifyStatus {
  ok: boolean
  first_bad_index: number | null
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message)
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  try {
    const body = (await resp.json()) as { code?: string; message?: string }
    return new ApiError(body.code ?? 'unknown', body.message ?? resp.statusText, resp.status)
  } catch {
    return new ApiError('unknown', resp.statusText, resp.status)
  }
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike,
    private readonly base = '',
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.base + path)
    if (!resp.ok) throw await parseError(resp)
    return (await resp.json()) as T
  }

  meta(): Promise<Meta> {
    return this.get('/api/meta')
  }

  account(id: string): Promise<AccountView> {
    return this.get(`/api/accounts/${id}`)
  }

  budget(): Promise<Budget> {
    return this.get('/api/budget')
  }

  async history(): Promise<LedgerRecord[]> {
    const body = await this.get<{ records: LedgerRecord[] }>('/api/history')
    return body.records
  }

  verify(): Promise<VerifyStatus> {
    return this.get('/api/ledger/verify')
  }

  async submit(request: QueryRequest): Promise<Card> {
    const resp = await this.fetchFn(this.base + '/api/queries', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(request),
    })
    if (!resp.ok) throw await parseError(resp)
    return (await resp.json()) as Card
  }
}
