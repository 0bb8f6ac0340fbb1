/**
 * Scenario bookkeeping: a capped list of covariate configurations, their
 * last fetched curves, stale-response protection, and the comparison
 * table derived from service payloads.
 */

import type { CovariateValues, CurveResponse } from "./api.js";

export const SCENARIO_CAP = 5;

export interface Scenario {
  id: number;
  label: string;
  covariates: CovariateValues;
  curve: CurveResponse | null;
  /** sequence number of the newest request issued for this scenario */
  seq: number;
  /** sequence number of the request the current curve answers */
  answeredSeq: number;
  error: string | null;
  fieldErrors: Record<string, string>;
}

export class ScenarioStore {
  private scenarios: Scenario[] = [];
  private nextId = 1;
  private nextSeq = 1;

  list(): readonly Scenario[] {
    return this.scenarios;
  }

  get(id: number): Scenario | undefined {
    return this.scenarios.find((s) => s.id === id);
  }

  /** Returns null when the cap is reached. */
  add(covariates: CovariateValues, label?: string): Scenario | null {
    if (this.scenarios.length >= SCENARIO_CAP) return null;
    const scenario: Scenario = {
      id: this.nextId,
      label: label ?? `Scenario ${this.nextId}`,
      covariates: { ...covariates },
      curve: null,
      seq: 0,
      answeredSeq: 0,
      error: null,
      fieldErrors: {},
    };
    this.nextId += 1;
    this.scenarios.push(scenario);
    return scenario;
  }

  remove(id: number): void {
    this.scenarios = this.scenarios.filter((s) => s.id !== id);
  }

  setCovariates(id: number, covariates: CovariateValues): void {
    const scenario = this.get(id);
    if (scenario) scenario.covariates = { ...covariates };
  }

  /** Mark a request in flight; the returned token identifies it. */
  beginRequest(id: number): number {
    const scenario = this.get(id);
    if (!scenario) return -1;
    scenario.seq = this.nextSeq;
    this.nextSeq += 1;
    return scenario.seq;
  }

  /** Apply a response unless a newer request has been issued since. */
  applyCurve(id: number, token: number, curve: CurveResponse): boolean {
    const scenario = this.get(id);
    if (!scenario || token !== scenario.seq) return false;
    scenario.curve = curve;
    scenario.answeredSeq = token;
    scenario.error = null;
    scenario.fieldErrors = {};
    return true;
  }

  applyError(
    id: number,
    token: number,
    message: string,
    fieldErrors: Record<string, string> = {},
  ): boolean {
    const scenario = this.get(id);
    if (!scenario || token !== scenario.seq) return false;
    scenario.error = message;
    scenario.fieldErrors = fieldErrors;
    return true;
  }

  hasPending(id: number): boolean {
    const scenario = this.get(id);
    return !!scenario && scenario.seq > scenario.answeredSeq && !scenario.error;
  }
}

export interface ComparisonRow {
  label: string;
  sAtHorizon: number | null;
  error: string | null;
}

export interface ComparisonDelta {
  a: string;
  b: string;
  delta: number;
}

export interface ComparisonTable {
  rows: ComparisonRow[];
  deltas: ComparisonDelta[];
}

/**
 * Survival-at-horizon table plus pairwise differences, straight from the
 * curve payloads. With a shared request seed, a zero delta means the
 * covariates agree, not that the noise cancelled.
 */
export function comparisonTable(scenarios: readonly Scenario[]): ComparisonTable {
  const rows: ComparisonRow[] = scenarios.map((s) => ({
    label: s.label,
    sAtHorizon: s.curve ? s.curve.s_at_horizon : null,
    error: s.error,
  }));
  const deltas: ComparisonDelta[] = [];
  for (let i = 0; i < rows.length; i += 1) {
    for (let j = i + 1; j < rows.length; j += 1) {
      const a = rows[i]!;
      const b = rows[j]!;
      if (a.sAtHorizon !== null && b.sAtHorizon !== null) {
        deltas.push({ a: a.label, b: b.label, delta: a.sAtHorizon - b.sAtHorizon });
      }
    }
  }
  return { rows, deltas };
}

export function formatDelta(delta: number): string {
  return delta.toFixed(3);
}
