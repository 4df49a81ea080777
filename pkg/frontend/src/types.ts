// API payload shapes, mirroring the review service's response models exactly.

export interface SessionView {
  threshold: number;
  max_runs: number;
  run_index: number;
  seeds_current: string[];
  stopped: boolean;
  stop_reason: string | null;
  termdb_size: number;
  pending_count: number;
  acceptance_rate: number | null;
}

export interface CandidateView {
  term: string;
  seed: string;
  similarity: number;
  run_index: number;
  status: 'pending' | 'approved' | 'rejected';
  sample_headlines: string[];
}

export interface TermRecordView {
  term: string;
  origin: 'seed' | 'discovered';
  ancestor: string | null;
  approved_at: string;
  run_index: number;
}

export interface AlertEntityView {
  name: string;
  relevance: number;
}

export interface AlertView {
  article_id: string;
  headline: string;
  entities: AlertEntityView[];
  signals: string[];
  category_code: number;
  category: string;
  distribution: number[];
  produced_at: string;
}

export interface DecisionItem {
  term: string;
  decision: 'approved' | 'rejected';
}

export interface DecisionsResponse {
  applied: number;
  session: SessionView;
}

export interface StepResponse {
  session: SessionView;
  candidates: CandidateView[];
}
