// Explanation session panel: BR text next to the model's answer, a chat
// transcript mirroring the session history, and binary feature toggles that
// post structured counterfactuals.
//
// The panel never reorders or rewrites history entries; the transcript is
// a straight render of what the service returned.

import type { AgentName, ChatMessage, Client, ConditionKind, ExplanationView } from './api.js'
import { ApiError } from './api.js'

const TOGGLE_FEATURES = [
  'victim_in_room',
  'rubble_in_room',
  'unexplored_north',
  'unexplored_south',
  'unexplored_east',
  'unexplored_west',
  'all_rooms_explored',
]

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
}

export class ExplanationPanel {
  private view: ExplanationView | null = null
  private history: ChatMessage[] = []
  private busy = false

  constructor(
    private root: HTMLElement,
    private client: Client,
    private onError: (message: string) => void = () => {},
  ) {}

  get sessionId(): string | null {
    return this.view?.session_id ?? null
  }

  async open(episodeId: string, agent: AgentName, condition: ConditionKind): Promise<void> {
    this.view = await this.client.explain(episodeId, agent, { kind: condition })
    this.history = this.view.history
    this.render()
  }

  private render(): void {
    const v = this.view
    if (!v) {
      this.root.innerHTML = '<p class="hint">No session open. Pick an agent and press Explain.</p>'
      return
    }
    const toggles = TOGGLE_FEATURES.map(
      (f) => `
      <label class="toggle"><input type="checkbox" data-feature="${f}"> ${f}</label>`,
    ).join('')
    this.root.innerHTML = `
      <div class="session-head">
        <span>session ${v.session_id}</span>
        <span>${v.agent} @ t=${v.timestep}, ${v.condition.kind}</span>
        <span>action: <strong>${v.action}</strong> (${Math.round(v.confidence * 100)}%)</span>
      </div>
      <div class="evidence">
        <div class="card">
          <p class="label">Surrogate rule</p>
          <p class="br-text">${escapeHtml(v.behavior_text)}</p>
        </div>
        <div class="card">
          <p class="label">Model explanation</p>
          <p class="model-text">${escapeHtml(v.explanation)}</p>
        </div>
      </div>
      <div class="toggles">
        <p class="label">What if... (flips re-run the surrogate tree)</p>
        ${toggles}
      </div>
      <ol class="transcript"></ol>
      <form class="chat-form">
        <input name="message" placeholder="Ask a follow-up" autocomplete="off">
        <button type="submit">Send</button>
      </form>
    `
    this.renderTranscript()
    this.wire()
  }

  private renderTranscript(): void {
    const list = this.root.querySelector<HTMLOListElement>('.transcript')
    if (!list) return
    list.innerHTML = this.history
      .map(
        (m) =>
          `<li class="msg msg-${m.role}"><span class="who">${m.role}</span>` +
          `<span class="text">${escapeHtml(m.content)}</span></li>`,
      )
      .join('')
  }

  private appendErrorBubble(message: string): void {
    const list = this.root.querySelector<HTMLOListElement>('.transcript')
    if (!list) return
    const li = document.createElement('li')
    li.className = 'msg msg-error'
    li.textContent = `${message} (retry the last input)`
    list.appendChild(li)
  }

  private wire(): void {
    const form = this.root.querySelector<HTMLFormElement>('.chat-form')
    form?.addEventListener('submit', (ev) => {
      ev.preventDefault()
      const input = form.querySelector<HTMLInputElement>('input[name=message]')
      const text = input?.value.trim()
      if (!text || !input) return
      input.value = ''
      void this.sendChat(text)
    })
    for (const box of this.root.querySelectorAll<HTMLInputElement>('.toggle input')) {
      box.addEventListener('change', () => {
        const feature = box.dataset.feature
        if (feature) void this.sendFlip(feature, box.checked ? 1 : 0)
      })
    }
  }

  async sendChat(message: string): Promise<void> {
    const v = this.view
    if (!v || this.busy) return
    this.busy = true
    try {
      const reply = await this.client.chat(v.session_id, message)
      this.history = reply.history
      this.renderTranscript()
    } catch (err) {
      this.report(err)
    } finally {
      this.busy = false
    }
  }

  async sendFlip(feature: string, value: number): Promise<void> {
    const v = this.view
    if (!v || this.busy) return
    this.busy = true
    try {
      const reply = await this.client.counterfactual(v.session_id, { [feature]: value })
      this.history = reply.history
      this.renderTranscript()
      const note = document.createElement('p')
      note.className = 'cf-note'
      note.textContent = reply.changed
        ? `surrogate now predicts ${reply.new_action} (changed)`
        : `surrogate still predicts ${reply.new_action}`
      this.root.querySelector('.toggles')?.appendChild(note)
    } catch (err) {
      this.report(err)
    } finally {
      this.busy = false
    }
  }

  private report(err: unknown): void {
    const message = err instanceof ApiError ? err.message : String(err)
    this.appendErrorBubble(message)
    this.onError(message)
  }
}
