// Wire shapes of the annotation service API (see the service docs for field
// semantics). Field names match the JSON exactly.

export type Protocol = 'A' | 'B' | 'C';

export interface HierarchyNode {
  id: string;
  name: string;
  genus: string;
  differentia: string;
  provenance?: string;
  children: HierarchyNode[];
}

export interface HierarchyView {
  protocol: Protocol;
  question_upper_bound: number;
  hierarchy: { roots: HierarchyNode[] };
}

export interface Question {
  sequence_no: number;
  kind: 'differentia_yes_no' | 'flat_choice';
  subject_node: string | null;
  prompt_name: string;
  prompt_genus: string;
  prompt_differentia: string;
  choices: [string, string][];
  text: string;
}

export interface Outcome {
  kind: 'classified' | 'unrecognised_at' | 'discharged';
  label: string | null;
  label_path_texts: [string, string, string][];
  question_count: number;
}

export interface Completion {
  task_id: string;
  completion_code: string;
}

export interface SessionView {
  session_id: string;
  image_id: string;
  image_uri: string;
  protocol: Protocol;
  finished: boolean;
  question: Question | null;
  outcome: Outcome | null;
  question_count: number;
  question_upper_bound: number;
  completion?: Completion;
}

export interface Assignment {
  task_id: string;
  annotator_id: string;
  status: 'claimed' | 'completed' | 'expired';
  image_ids: string[];
  pending_image_ids: string[];
  completion_code: string;
}

export interface Registration {
  annotator_id: string;
  name: string;
  token: string;
}

export type AnswerKind = 'yes' | 'no' | 'choice' | 'none_of_these';

export interface Answer {
  kind: AnswerKind;
  choice?: string | null;
}
