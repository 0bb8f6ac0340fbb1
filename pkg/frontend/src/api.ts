/**
 * Typed client for the survival prediction service.
 *
 * Every number the UI displays comes out of these response payloads;
 * the client never computes survival quantities itself.
 */

export interface ContinuousCovariate {
  name: string;
  kind: "continuous";
  mean: number;
}

export interface CategoricalCovariate {
  name: string;
  kind: "categorical";
  cardinality: number;
  values: string[];
  truncated: boolean;
}

export type CovariateDescriptor = ContinuousCovariate | CategoricalCovariate;

export interface SchemaResponse {
  covariates: CovariateDescriptor[];
  duration_column: string;
  censor_column: string;
  default_horizon_days: number;
}

export type CovariateValues = Record<string, string | number>;

export interface PredictRequest {
  covariates: CovariateValues;
  grid?: number[];
  n_mcmc?: number;
  realisations?: number;
  seed?: number;
}

export interface CurveResponse {
  t: number[];
  s_hat: number[];
  lo: number[];
  hi: number[];
  n_mcmc: number;
  realisations: number;
  warnings: string[];
  horizon_days: number;
  s_at_horizon: number | null;
  seed: number;
}

export interface FieldErrors {
  status: number;
  errors: Record<string, string>;
}

export type BatchItem =
  | CurveResponse
  | { error: { status: number; errors: Record<string, string> } };

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly fieldErrors: Record<string, string> = {},
  ) {
    super(message);
  }
}

/** Service base URL: `?api=` query parameter wins, else same origin. */
export function resolveBaseUrl(search: string, origin: string): string {
  const fromQuery = new URLSearchParams(search).get("api");
  const base = fromQuery && fromQuery.length > 0 ? fromQuery : origin;
  return base.replace(/\/+$/, "");
}

async function parseJson(response: Response): Promise<unknown> {
  try {
    return await response.json();
  } catch {
    throw new ApiError(
      `service returned ${response.status} with a non-JSON body`,
      response.status,
    );
  }
}

function throwForErrors(status: number, body: unknown): never {
  const errors =
    body && typeof body === "object" && "errors" in body
      ? ((body as { errors: Record<string, string> }).errors ?? {})
      : {};
  const detail =
    body && typeof body === "object" && "detail" in body
      ? String((body as { detail: unknown }).detail)
      : `request failed with status ${status}`;
  throw new ApiError(detail, status, errors);
}

export async function getSchema(base: string): Promise<SchemaResponse> {
  const response = await fetch(`${base}/schema`);
  const body = await parseJson(response);
  if (!response.ok) throwForErrors(response.status, body);
  return body as SchemaResponse;
}

export async function predict(
  base: string,
  request: PredictRequest,
): Promise<CurveResponse> {
  const response = await fetch(`${base}/predict`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(request),
  });
  const body = await parseJson(response);
  if (!response.ok) throwForErrors(response.status, body);
  return body as CurveResponse;
}

export async function predictBatch(
  base: string,
  requests: PredictRequest[],
): Promise<BatchItem[]> {
  const response = await fetch(`${base}/predict-batch`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(requests),
  });
  const body = await parseJson(response);
  if (!response.ok) throwForErrors(response.status, body);
  return body as BatchItem[];
}
