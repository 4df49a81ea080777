import { ApiClient, ApiError } from './api';
import type { AlertView, CandidateView, SessionView, TermRecordView } from './types';

type View = 'queue' | 'termdb' | 'alerts';

interface AppState {
  view: View;
  session: SessionView | null;
  candidates: CandidateView[];
  termdb: TermRecordView[];
  alerts: AlertView[];
  error: string | null;
  conflicts: Set<string>;
  inFlight: Set<string>;
  submitted: Set<string>; // "term:decision" pairs already sent this session
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function formatSimilarity(similarity: number): string {
  return `${(similarity * 100).toFixed(1)}%`;
}

export class ReviewApp {
  state: AppState = {
    view: 'queue',
    session: null,
    candidates: [],
    termdb: [],
    alerts: [],
    error: null,
    conflicts: new Set(),
    inFlight: new Set(),
    submitted: new Set(),
  };

  constructor(private root: HTMLElement, private api: ApiClient) {
    this.root.addEventListener('click', (event) => this.onClick(event));
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  private onClick(event: Event): void {
    const target = (event.target as HTMLElement).closest('[data-action]');
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset.action;
    if (action === 'approve' || action === 'reject') {
      const decision = action === 'approve' ? 'approved' : 'rejected';
      void this.decide(target.dataset.term!, decision);
    } else if (action === 'step') {
      void this.stepRun();
    } else if (action === 'retry') {
      void this.refresh();
    } else if (action === 'view') {
      this.state.view = target.dataset.view as View;
      void this.refresh();
    }
  }

  async refresh(): Promise<void> {
    try {
      const [session, candidates] = await Promise.all([
        this.api.getSession(),
        this.api.getCandidates('pending'),
      ]);
      this.state.session = session;
      this.state.candidates = candidates;
      if (this.state.view === 'termdb') {
        this.state.termdb = await this.api.getTermdb();
      } else if (this.state.view === 'alerts') {
        this.state.alerts = await this.api.getAlerts();
      }
      this.state.error = null;
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  async decide(term: string, decision: 'approved' | 'rejected'): Promise<void> {
    const key = `${term}:${decision}`;
    // Idempotent guard: one request per (term, decision) pair, and never
    // while a request for the term is already in flight.
    if (this.state.inFlight.has(term) || this.state.submitted.has(key)) return;
    this.state.inFlight.add(term);
    this.render();
    try {
      await this.api.postDecisions([{ term, decision }]);
      this.state.submitted.add(key);
      this.state.inFlight.delete(term);
      await this.refresh();
    } catch (err) {
      this.state.inFlight.delete(term);
      if (err instanceof ApiError && err.status === 409) {
        // Someone settled the term first: flag the row and resync.
        this.state.conflicts.add(term);
        await this.refresh();
      } else {
        // Network failure: the decision is NOT shown as applied.
        this.state.error = `decision for "${term}" failed: ${
          err instanceof Error ? err.message : String(err)
        }`;
        this.render();
      }
    }
  }

  async stepRun(): Promise<void> {
    const session = this.state.session;
    if (!session || session.stopped || session.pending_count > 0) return;
    try {
      await this.api.step();
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
      } else {
        this.state.error = err instanceof Error ? err.message : String(err);
        this.render();
      }
    }
  }

  render(): void {
    const { session, error, view } = this.state;
    const parts: string[] = [];

    if (error !== null) {
      parts.push(
        `<div class="banner error" data-testid="error-banner">` +
          `${escapeHtml(error)} <button data-action="retry">Retry</button></div>`,
      );
    }
    if (session?.stopped) {
      const reason =
        session.stop_reason === 'max_runs'
          ? `max runs (${session.max_runs})`
          : session.stop_reason ?? 'unknown';
      parts.push(
        `<div class="banner stopped" data-testid="stop-banner">stopped: ${escapeHtml(reason)}</div>`,
      );
    }

    parts.push(this.renderSessionBar(session));
    parts.push(
      `<nav>` +
        (['queue', 'termdb', 'alerts'] as View[])
          .map(
            (v) =>
              `<button data-action="view" data-view="${v}" class="${v === view ? 'active' : ''}">${v}</button>`,
          )
          .join('') +
        `</nav>`,
    );

    if (view === 'queue') parts.push(this.renderQueue());
    else if (view === 'termdb') parts.push(this.renderTermdb());
    else parts.push(this.renderAlerts());

    this.root.innerHTML = parts.join('\n');
  }

  private renderSessionBar(session: SessionView | null): string {
    if (!session) return `<header data-testid="session-bar">loading session...</header>`;
    const stepDisabled = session.stopped || session.pending_count > 0;
    const explanation = session.stopped
      ? 'session stopped'
      : session.pending_count > 0
        ? `${session.pending_count} candidate(s) still pending review`
        : 'start the next discovery run';
    return (
      `<header data-testid="session-bar">` +
      `run ${session.run_index}/${session.max_runs} &middot; ` +
      `terms ${session.termdb_size} &middot; pending ${session.pending_count} &middot; ` +
      `seeds: ${escapeHtml(session.seeds_current.join(', ') || 'none')}` +
      `<button data-action="step" data-testid="step-button" ${stepDisabled ? 'disabled' : ''} ` +
      `title="${escapeHtml(explanation)}">Next run</button>` +
      `</header>`
    );
  }

  private renderQueue(): string {
    const pending = this.state.candidates
      .filter((c) => c.status === 'pending')
      .sort((a, b) => b.similarity - a.similarity || a.term.localeCompare(b.term));
    if (pending.length === 0) {
      const status = this.state.session?.stopped
        ? `session stopped (${this.state.session.stop_reason})`
        : 'no candidates awaiting review';
      return `<section data-testid="queue"><p data-testid="empty-queue">${escapeHtml(status)}</p></section>`;
    }
    const rows = pending.map((c) => this.renderCandidateRow(c)).join('\n');
    return `<section data-testid="queue"><ul class="queue">${rows}</ul></section>`;
  }

  private renderCandidateRow(candidate: CandidateView): string {
    const busy = this.state.inFlight.has(candidate.term);
    const conflicted = this.state.conflicts.has(candidate.term);
    const samples = candidate.sample_headlines
      .map((h) => `<li>${escapeHtml(h)}</li>`)
      .join('');
    return (
      `<li class="candidate${conflicted ? ' conflict' : ''}" data-testid="candidate-row" ` +
      `data-term="${escapeHtml(candidate.term)}">` +
      `<span class="summary">${escapeHtml(candidate.term)} — ` +
      `${formatSimilarity(candidate.similarity)} — seed: ${escapeHtml(candidate.seed)}</span>` +
      (conflicted ? `<span class="flag" data-testid="conflict-flag">already settled</span>` : '') +
      `<ul class="samples">${samples}</ul>` +
      `<button data-action="approve" data-term="${escapeHtml(candidate.term)}" ${busy ? 'disabled' : ''}>Approve</button>` +
      `<button data-action="reject" data-term="${escapeHtml(candidate.term)}" ${busy ? 'disabled' : ''}>Reject</button>` +
      `</li>`
    );
  }

  private renderTermdb(): string {
    const rows = this.state.termdb
      .map(
        (r) =>
          `<tr data-testid="term-row" data-term="${escapeHtml(r.term)}">` +
          `<td>${escapeHtml(r.term)}</td><td>${r.origin}</td>` +
          `<td>${escapeHtml(r.ancestor ?? '')}</td><td>${r.run_index}</td></tr>`,
      )
      .join('\n');
    return (
      `<section data-testid="termdb"><table>` +
      `<thead><tr><th>term</th><th>origin</th><th>ancestor</th><th>run</th></tr></thead>` +
      `<tbody>${rows}</tbody></table></section>`
    );
  }

  private renderAlerts(): string {
    if (this.state.alerts.length === 0) {
      return `<section data-testid="alerts"><p>no alerts</p></section>`;
    }
    const rows = this.state.alerts
      .map((a) => {
        const entities = a.entities
          .map((e) => `${escapeHtml(e.name)} (${e.relevance.toFixed(2)})`)
          .join(', ');
        return (
          `<li data-testid="alert-row"><strong>${escapeHtml(a.category)}</strong> ` +
          `${escapeHtml(a.headline)}` +
          `<div class="meta">entities: ${entities || 'none'} &middot; ` +
          `signals: ${escapeHtml(a.signals.join(', ') || 'none')}</div></li>`
        );
      })
      .join('\n');
    return `<section data-testid="alerts"><ul>${rows}</ul></section>`;
  }
}
