import { ApiError, Client } from './api.js'
import type { AgentName, ConditionKind, EpisodeView } from './api.js'
import { renderGrid, renderStatus } from './grid.js'
import { ExplanationPanel } from './panel.js'

function must<T>(value: T | null, label: string): T {
  if (value === null) throw new Error(`missing ${label}`)
  return value
}

const app = must(document.querySelector<HTMLDivElement>('#app'), '#app container')

app.innerHTML = `
  <main class="layout">
    <header class="bar">
      <h1>treetalk console</h1>
      <div class="controls">
        <label>policy
          <select id="policy">
            <option value="expert">expert</option>
            <option value="explore_first">explore_first</option>
            <option value="fixed_north">fixed_north</option>
          </select>
        </label>
        <label>seed <input id="seed" type="number" value="42" style="width:5em"></label>
        <button id="new-episode">New episode</button>
        <button id="step" disabled>Step</button>
        <button id="autostep" disabled>Run to end</button>
        <button id="reset" disabled>Reset</button>
      </div>
    </header>
    <div id="banner" class="banner" hidden></div>
    <section class="columns">
      <div>
        <div id="grid" class="grid"></div>
        <div id="status" class="status"></div>
        <div class="explain-controls">
          <label>agent
            <select id="agent">
              <option value="engineer">engineer</option>
              <option value="medic">medic</option>
            </select>
          </label>
          <label>evidence
            <select id="condition">
              <option value="br_path">br_path</option>
              <option value="br_states">br_states</option>
              <option value="no_br">no_br</option>
            </select>
          </label>
          <button id="explain" disabled>Explain</button>
        </div>
      </div>
      <div id="panel" class="panel"></div>
    </section>
  </main>
`

const client = new Client()
const banner = must(document.querySelector<HTMLDivElement>('#banner'), 'banner')
const gridEl = must(document.querySelector<HTMLDivElement>('#grid'), 'grid')
const statusEl = must(document.querySelector<HTMLDivElement>('#status'), 'status')
const panel = new ExplanationPanel(
  must(document.querySelector<HTMLDivElement>('#panel'), 'panel'),
  client,
  showBanner,
)

let episode: EpisodeView | null = null

function showBanner(message: string): void {
  banner.textContent = message
  banner.hidden = false
}

function clearBanner(): void {
  banner.hidden = true
}

function button(id: string): HTMLButtonElement {
  return must(document.querySelector<HTMLButtonElement>(`#${id}`), id)
}

function setEpisode(ep: EpisodeView): void {
  episode = ep
  renderGrid(gridEl, ep)
  renderStatus(statusEl, ep)
  for (const id of ['step', 'autostep', 'reset', 'explain']) button(id).disabled = false
  clearBanner()
}

async function guard(run: () => Promise<void>): Promise<void> {
  try {
    await run()
  } catch (err) {
    showBanner(err instanceof ApiError ? err.message : String(err))
  }
}

button('new-episode').addEventListener('click', () =>
  guard(async () => {
    const policy = must(document.querySelector<HTMLSelectElement>('#policy'), 'policy').value
    const seed = Number(must(document.querySelector<HTMLInputElement>('#seed'), 'seed').value)
    setEpisode(await client.createEpisode(policy, { seed }))
  }),
)

button('step').addEventListener('click', () =>
  guard(async () => {
    if (episode) setEpisode(await client.autostep(episode.episode_id, { steps: 1 }))
  }),
)

button('autostep').addEventListener('click', () =>
  guard(async () => {
    if (episode) setEpisode(await client.autostep(episode.episode_id, { until_terminal: true }))
  }),
)

button('reset').addEventListener('click', () =>
  guard(async () => {
    if (!episode) return
    const policy = episode.policy
    const seed = Number(must(document.querySelector<HTMLInputElement>('#seed'), 'seed').value)
    setEpisode(await client.createEpisode(policy, { seed }))
  }),
)

button('explain').addEventListener('click', () =>
  guard(async () => {
    if (!episode) return
    const agent = must(document.querySelector<HTMLSelectElement>('#agent'), 'agent')
      .value as AgentName
    const condition = must(document.querySelector<HTMLSelectElement>('#condition'), 'condition')
      .value as ConditionKind
    // the condition applies to newly created sessions; open a fresh one
    await panel.open(episode.episode_id, agent, condition)
    clearBanner()
  }),
)
