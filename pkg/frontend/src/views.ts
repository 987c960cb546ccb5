import type { Answer, Completion, Outcome, Question, SessionView } from './types.js';

function button(id: string, text: string, onClick: () => void, disabled: boolean): HTMLButtonElement {
  const el = document.createElement('button');
  el.id = id;
  el.type = 'button';
  el.textContent = text;
  el.disabled = disabled;
  el.addEventListener('click', onClick);
  return el;
}

export function renderImagePane(session: SessionView): HTMLElement {
  const pane = document.createElement('div');
  pane.className = 'image-pane';
  const img = document.createElement('img');
  img.src = session.image_uri;
  img.alt = session.image_id;
  const caption = document.createElement('div');
  caption.className = 'image-caption';
  caption.textContent = session.image_id;
  pane.appendChild(img);
  pane.appendChild(caption);
  return pane;
}

export function renderProgress(
  imageIndex: number,
  imageTotal: number,
  question: Question | null,
  upperBound: number,
): HTMLElement {
  const box = document.createElement('div');
  box.className = 'progress-box';
  const bar = document.createElement('progress');
  bar.max = imageTotal;
  bar.value = imageIndex - 1;
  const text = document.createElement('span');
  text.className = 'progress-text';
  text.textContent = question
    ? `Image ${imageIndex} of ${imageTotal}, question ${question.sequence_no} of at most ${upperBound}`
    : `Image ${imageIndex} of ${imageTotal}`;
  box.appendChild(bar);
  box.appendChild(text);
  return box;
}

/**
 * The question card. Yes/no cards carry #btn-yes and #btn-no; flat-choice
 * cards carry one radio per choice plus #btn-submit-choice. All buttons are
 * disabled while ``busy`` so a submission in flight cannot be doubled.
 */
export function renderQuestionCard(
  question: Question,
  busy: boolean,
  submit: (answer: Answer) => void,
): HTMLElement {
  const card = document.createElement('div');
  card.className = 'question-card';
  const prompt = document.createElement('p');
  prompt.className = 'question-text';
  prompt.textContent = question.text;
  card.appendChild(prompt);

  if (question.kind === 'differentia_yes_no') {
    const row = document.createElement('div');
    row.className = 'answer-row';
    row.appendChild(button('btn-yes', 'Yes (Y)', () => submit({ kind: 'yes' }), busy));
    row.appendChild(button('btn-no', 'No (N)', () => submit({ kind: 'no' }), busy));
    card.appendChild(row);
    return card;
  }

  const list = document.createElement('div');
  list.className = 'choice-list';
  for (const [choiceId, name] of question.choices) {
    const item = document.createElement('label');
    const radio = document.createElement('input');
    radio.type = 'radio';
    radio.name = 'flat-choice';
    radio.value = choiceId;
    radio.disabled = busy;
    item.appendChild(radio);
    item.appendChild(document.createTextNode(' ' + name));
    list.appendChild(item);
  }
  card.appendChild(list);
  card.appendChild(
    button(
      'btn-submit-choice',
      'Submit (Enter)',
      () => {
        const picked = card.querySelector<HTMLInputElement>('input[name=flat-choice]:checked');
        if (!picked) return;
        if (picked.value === 'none_of_these') submit({ kind: 'none_of_these' });
        else submit({ kind: 'choice', choice: picked.value });
      },
      busy,
    ),
  );
  return card;
}

export function describeOutcome(outcome: Outcome): string {
  if (outcome.kind === 'discharged') return 'Not one of the listed categories';
  const name = outcome.label_path_texts.length
    ? outcome.label_path_texts[outcome.label_path_texts.length - 1][0]
    : outcome.label ?? '';
  if (outcome.kind === 'unrecognised_at') return `${name} (nothing finer recognised)`;
  return name;
}

export function renderOutcomeCard(outcome: Outcome, onContinue: () => void): HTMLElement {
  const card = document.createElement('div');
  card.className = 'question-card outcome-card';
  const heading = document.createElement('p');
  heading.className = 'outcome-text';
  heading.textContent = describeOutcome(outcome);
  card.appendChild(heading);
  const detail = document.createElement('p');
  detail.className = 'outcome-detail';
  detail.textContent = `${outcome.question_count} question(s)`;
  card.appendChild(detail);
  card.appendChild(button('btn-continue', 'Continue (Enter)', onContinue, false));
  return card;
}

export function renderCompletionSummary(
  completion: Completion,
  results: { imageId: string; text: string }[],
): HTMLElement {
  const box = document.createElement('div');
  box.className = 'completion-box';
  const heading = document.createElement('h2');
  heading.textContent = 'Task complete';
  box.appendChild(heading);
  const code = document.createElement('p');
  code.className = 'completion-code';
  code.textContent = `Completion code: ${completion.completion_code}`;
  box.appendChild(code);
  const list = document.createElement('ol');
  list.className = 'completion-outcomes';
  for (const result of results) {
    const item = document.createElement('li');
    item.textContent = `${result.imageId}: ${result.text}`;
    list.appendChild(item);
  }
  box.appendChild(list);
  return box;
}

export function renderBanner(
  kind: 'info' | 'error',
  message: string,
  retry?: () => void,
): HTMLElement {
  const banner = document.createElement('div');
  banner.className = `banner banner-${kind}`;
  const text = document.createElement('span');
  text.textContent = message;
  banner.appendChild(text);
  if (retry) banner.appendChild(button('btn-retry', 'Retry', retry, false));
  return banner;
}
