import { ApiError, ServiceClient } from './api.js';
import { renderTree } from './tree.js';
import {
  describeOutcome,
  renderBanner,
  renderCompletionSummary,
  renderImagePane,
  renderOutcomeCard,
  renderProgress,
  renderQuestionCard,
} from './views.js';
import type { Answer, Assignment, Completion, HierarchyView, SessionView } from './types.js';

export type Phase = 'loading' | 'no-work' | 'annotating' | 'outcome' | 'done';

interface Banner {
  kind: 'info' | 'error';
  message: string;
  retry?: () => void;
}

/**
 * One task end to end: claim (or resume), walk each image's question
 * sequence, show the outcome between images, and finish on the completion
 * summary. The server is the source of truth; the controller keeps only the
 * session token's worth of state, so a page refresh resumes wherever the
 * server's pending question is.
 */
export class App {
  phase: Phase = 'loading';
  busy = false;
  assignment: Assignment | null = null;
  session: SessionView | null = null;
  completion: Completion | null = null;
  banner: Banner | null = null;
  results: { imageId: string; text: string }[] = [];

  private hierarchyView: HierarchyView | null = null;
  private pending: string[] = [];
  private readonly onKey = (event: KeyboardEvent) => this.handleKey(event);

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ServiceClient,
  ) {
    document.addEventListener('keydown', this.onKey);
  }

  destroy(): void {
    document.removeEventListener('keydown', this.onKey);
    this.root.replaceChildren();
  }

  async start(): Promise<void> {
    this.render();
    try {
      this.hierarchyView = await this.client.hierarchy();
      const current = await this.client.currentClaim();
      if (current) {
        this.banner = { kind: 'info', message: `Resuming task ${current.task_id}` };
      }
      this.assignment = current ?? (await this.client.claim());
    } catch (error) {
      this.fail(error, () => this.start());
      return;
    }
    if (!this.assignment) {
      this.phase = 'no-work';
      this.render();
      return;
    }
    this.pending = [...this.assignment.pending_image_ids];
    for (const imageId of this.assignment.image_ids) {
      if (!this.pending.includes(imageId)) {
        this.results.push({ imageId, text: 'answered earlier' });
      }
    }
    await this.nextImage();
  }

  private async nextImage(): Promise<void> {
    const imageId = this.pending[0];
    if (imageId === undefined) {
      this.phase = 'done';
      this.render();
      return;
    }
    try {
      this.session = await this.client.startSession(imageId);
    } catch (error) {
      this.fail(error, () => this.nextImage());
      return;
    }
    this.phase = this.session.finished ? 'outcome' : 'annotating';
    this.render();
  }

  /** One click, one POST. Re-entry while a submission is in flight is a no-op. */
  submit(answer: Answer): void {
    if (this.busy || !this.session || !this.session.question) return;
    const session = this.session;
    const sequenceNo = session.question!.sequence_no;
    this.busy = true;
    this.banner = null;
    this.render();
    this.client
      .answer(session.session_id, sequenceNo, answer)
      .then((updated) => {
        this.session = updated;
        if (updated.completion) this.completion = updated.completion;
        this.busy = false;
        this.phase = updated.finished ? 'outcome' : 'annotating';
        this.render();
      })
      .catch((error) => {
        this.busy = false;
        if (error instanceof ApiError) {
          // server-side validation: surface the message verbatim, no retry
          this.banner = { kind: 'error', message: error.message };
          this.render();
        } else {
          // network failure: the answer may or may not have landed; the
          // idempotent answer protocol makes resending the same body safe
          this.fail(error, () => this.submit(answer));
        }
      });
  }

  continueToNext(): void {
    if (this.phase !== 'outcome' || !this.session || !this.session.outcome) return;
    this.results.push({
      imageId: this.session.image_id,
      text: describeOutcome(this.session.outcome),
    });
    this.pending = this.pending.filter((id) => id !== this.session!.image_id);
    this.session = null;
    void this.nextImage();
  }

  abandon(): void {
    if (!this.assignment || this.busy) return;
    const taskId = this.assignment.task_id;
    this.client
      .abandon(taskId)
      .then(() => {
        this.assignment = null;
        this.session = null;
        this.pending = [];
        this.results = [];
        this.banner = { kind: 'info', message: `Task ${taskId} released` };
        this.phase = 'no-work';
        this.render();
      })
      .catch((error) => this.fail(error, () => this.abandon()));
  }

  private fail(error: unknown, retry: () => void): void {
    const message =
      error instanceof Error ? error.message : 'request failed';
    this.banner = { kind: 'error', message, retry };
    this.render();
  }

  private handleKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === 'INPUT' || target.tagName === 'TEXTAREA')) {
      if (target.getAttribute('type') !== 'radio') return;
    }
    // shortcuts click the real buttons, so they cannot diverge from the mouse path
    let id: string | null = null;
    if (event.key === 'y' || event.key === 'Y') id = 'btn-yes';
    else if (event.key === 'n' || event.key === 'N') id = 'btn-no';
    else if (event.key === 'Enter') {
      id = this.phase === 'outcome' ? 'btn-continue' : 'btn-submit-choice';
    }
    if (!id) return;
    const el = this.root.querySelector<HTMLButtonElement>(`#${id}`);
    if (el && !el.disabled) {
      event.preventDefault();
      el.click();
    }
  }

  private render(): void {
    this.root.replaceChildren();

    const header = document.createElement('div');
    header.className = 'app-header';
    const title = document.createElement('span');
    title.textContent = this.assignment ? `Task ${this.assignment.task_id}` : 'Annotation';
    header.appendChild(title);
    if (this.assignment && this.phase !== 'done') {
      const abandonBtn = document.createElement('button');
      abandonBtn.id = 'btn-abandon';
      abandonBtn.type = 'button';
      abandonBtn.textContent = 'Abandon task';
      abandonBtn.disabled = this.busy;
      abandonBtn.addEventListener('click', () => this.abandon());
      header.appendChild(abandonBtn);
    }
    this.root.appendChild(header);

    if (this.banner) {
      this.root.appendChild(renderBanner(this.banner.kind, this.banner.message, this.banner.retry));
    }

    if (this.phase === 'loading') {
      this.root.appendChild(renderBanner('info', 'Loading...'));
      return;
    }
    if (this.phase === 'no-work') {
      const claimBtn = document.createElement('button');
      claimBtn.id = 'btn-claim';
      claimBtn.type = 'button';
      claimBtn.textContent = 'Claim a task';
      claimBtn.addEventListener('click', () => void this.start());
      this.root.appendChild(renderBanner('info', 'No task claimed.'));
      this.root.appendChild(claimBtn);
      return;
    }
    if (this.phase === 'done') {
      if (this.completion) {
        this.root.appendChild(renderCompletionSummary(this.completion, this.results));
      } else {
        this.root.appendChild(renderBanner('info', 'All images answered.'));
      }
      return;
    }

    const session = this.session;
    if (!session || !this.assignment) return;

    const total = this.assignment.image_ids.length;
    const index = total - this.pending.length + 1;
    this.root.appendChild(
      renderProgress(index, total, session.question, session.question_upper_bound),
    );

    const main = document.createElement('div');
    main.className = 'app-main';
    main.appendChild(renderImagePane(session));
    if (this.phase === 'outcome' && session.outcome) {
      main.appendChild(renderOutcomeCard(session.outcome, () => this.continueToNext()));
    } else if (session.question) {
      main.appendChild(
        renderQuestionCard(session.question, this.busy, (answer) => this.submit(answer)),
      );
    }
    this.root.appendChild(main);

    if (this.hierarchyView) {
      const currentId =
        session.question && session.question.kind === 'differentia_yes_no'
          ? session.question.subject_node
          : this.phase === 'outcome'
            ? session.outcome?.label ?? null
            : null;
      this.root.appendChild(
        renderTree(this.hierarchyView.hierarchy.roots, this.hierarchyView.protocol, currentId),
      );
    }
  }
}
