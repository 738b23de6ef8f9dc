// Typed client for the treetalk HTTP+JSON API. Every shape here mirrors a
// service response; nothing in the UI recomputes environment or tree logic.

export type AgentName = 'engineer' | 'medic'
export type VictimMark = 'none' | 'visible' | 'hidden'
export type ConditionKind = 'br_path' | 'br_states' | 'no_br'

export type RoomView = {
  has_rubble: boolean
  victim: VictimMark
  explored: boolean
}

export type EpisodeState = {
  grid: { rows: number; cols: number }
  rooms: RoomView[]
  positions: Record<AgentName, [number, number]>
  rescued_count: number
  victims_total: number
  timestep: number
  whose_turn: AgentName
}

export type AppliedStep = { agent: AgentName; action: string }

export type EpisodeView = {
  episode_id: string
  policy: string
  state: EpisodeState
  terminal: boolean
  legal_actions: string[]
  applied?: AppliedStep | AppliedStep[]
}

export type ScenarioBody = {
  seed?: number
  n_victims?: number
  n_rubble?: number
  p_hidden?: number
}

export type ChatMessage = { role: 'system' | 'user' | 'assistant'; content: string }

export type PathPredicate = { feature: string; op: '<=' | '>'; threshold: number }

export type PathView = {
  agent: AgentName | null
  action: string
  confidence: number
  predicates: PathPredicate[]
}

export type ExplanationView = {
  session_id: string
  episode_id: string
  agent: AgentName
  timestep: number
  condition: { kind: ConditionKind; k: number; seed: number }
  action: string
  confidence: number
  behavior_text: string
  state_summary: string
  path: PathView
  prompt: string
  explanation: string
  history: ChatMessage[]
}

export type ChatReply = {
  session_id: string
  reply: string
  history: ChatMessage[]
  history_length: number
}

export type CounterfactualReply = ChatReply & {
  changed: boolean
  new_action: string
  new_path: PathView
  behavior_text: string
}

export type StudyReports = {
  summary: string
  rows_csv: string
  frequency_csv: string
  aggregates: Record<string, { n: number; mean_precision: number; flags: number; errors: number }>
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail)
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class Client {
  constructor(
    private base = '',
    private doFetch: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response
    try {
      resp = await this.doFetch(this.base + path, {
        method,
        headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
      })
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`)
    }
    if (!resp.ok) {
      let detail = `${method} ${path} -> ${resp.status}`
      try {
        const doc = (await resp.json()) as { detail?: unknown }
        if (doc.detail !== undefined) detail = JSON.stringify(doc.detail)
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(resp.status, detail)
    }
    return resp.json() as Promise<T>
  }

  createEpisode(policy: string, scenario?: ScenarioBody): Promise<EpisodeView> {
    return this.request('POST', '/episodes', { policy, scenario })
  }

  getEpisode(id: string): Promise<EpisodeView> {
    return this.request('GET', `/episodes/${id}`)
  }

  step(id: string, agent: AgentName, action: string): Promise<EpisodeView> {
    return this.request('POST', `/episodes/${id}/step`, { agent, action })
  }

  autostep(id: string, opts: { steps?: number; until_terminal?: boolean }): Promise<EpisodeView> {
    return this.request('POST', `/episodes/${id}/autostep`, opts)
  }

  explain(
    episodeId: string,
    agent: AgentName,
    condition?: { kind: ConditionKind; k?: number; seed?: number },
  ): Promise<ExplanationView> {
    return this.request('POST', '/explanations', { episode_id: episodeId, agent, condition })
  }

  chat(sessionId: string, message: string): Promise<ChatReply> {
    return this.request('POST', `/explanations/${sessionId}/chat`, { message })
  }

  counterfactual(
    sessionId: string,
    flips: Record<string, number>,
    message = '',
  ): Promise<CounterfactualReply> {
    return this.request('POST', `/explanations/${sessionId}/counterfactual`, { flips, message })
  }

  studyReports(): Promise<StudyReports> {
    return this.request('GET', '/study/reports')
  }
}
