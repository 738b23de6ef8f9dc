// Episode grid renderer. Draws exactly what the service reported: hidden
// victims stay invisible until a step response marks them visible.

import type { AppliedStep, EpisodeView } from './api.js'

function roomCell(ep: EpisodeView, row: number, col: number): string {
  const { cols } = ep.state.grid
  const room = ep.state.rooms[row * cols + col]
  if (!room) throw new Error(`room (${row},${col}) missing from state`)
  const classes = ['room', room.explored ? 'explored' : 'unexplored']
  const marks: string[] = []
  if (room.has_rubble) marks.push('<span class="rubble" title="rubble">▲</span>')
  if (room.victim === 'visible') marks.push('<span class="victim" title="victim">♥</span>')
  for (const [agent, pos] of Object.entries(ep.state.positions)) {
    if (pos[0] === row && pos[1] === col) {
      marks.push(`<span class="agent agent-${agent}" title="${agent}">${agent[0]?.toUpperCase()}</span>`)
    }
  }
  return `<div class="${classes.join(' ')}" data-row="${row}" data-col="${col}">${marks.join('')}</div>`
}

export function renderGrid(root: HTMLElement, ep: EpisodeView): void {
  const { rows, cols } = ep.state.grid
  root.style.setProperty('--grid-cols', String(cols))
  const cells: string[] = []
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) cells.push(roomCell(ep, r, c))
  }
  root.innerHTML = cells.join('')
}

function appliedList(ep: EpisodeView): AppliedStep[] {
  if (!ep.applied) return []
  return Array.isArray(ep.applied) ? ep.applied : [ep.applied]
}

export function renderStatus(root: HTMLElement, ep: EpisodeView): void {
  const s = ep.state
  const lines = [
    `<span>episode ${ep.episode_id} (${ep.policy})</span>`,
    `<span>t=${s.timestep}, turn: ${s.whose_turn}</span>`,
    `<span>rescued ${s.rescued_count}/${s.victims_total}${ep.terminal ? ' — done' : ''}</span>`,
  ]
  // latest action label per agent, newest wins
  const last: Partial<Record<string, string>> = {}
  for (const step of appliedList(ep)) last[step.agent] = step.action
  for (const agent of ['engineer', 'medic'] as const) {
    if (last[agent]) lines.push(`<span class="last-action">${agent}: ${last[agent]}</span>`)
  }
  root.innerHTML = lines.join(' ')
}
