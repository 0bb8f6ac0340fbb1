/**
 * Schema-driven form model: one control descriptor per covariate, plus
 * input validation that runs before any request leaves the browser.
 */

import type { CovariateDescriptor, CovariateValues, SchemaResponse } from "./api.js";

export interface NumberField {
  name: string;
  control: "number";
  defaultValue: number;
}

export interface SelectField {
  name: string;
  control: "select";
  options: string[];
  defaultValue: string;
}

/** High-cardinality covariates get a searchable text input instead of a
 * plain select; the option list is the (possibly truncated) sample. */
export interface TypeaheadField {
  name: string;
  control: "typeahead";
  options: string[];
  defaultValue: string;
}

export type FormField = NumberField | SelectField | TypeaheadField;

export function buildFormModel(schema: SchemaResponse): FormField[] {
  return schema.covariates.map((cov: CovariateDescriptor): FormField => {
    if (cov.kind === "continuous") {
      return { name: cov.name, control: "number", defaultValue: cov.mean };
    }
    const defaultValue = cov.values[0] ?? "";
    if (cov.truncated) {
      return {
        name: cov.name,
        control: "typeahead",
        options: cov.values,
        defaultValue,
      };
    }
    return {
      name: cov.name,
      control: "select",
      options: cov.values,
      defaultValue,
    };
  });
}

export interface ValidationResult {
  values: CovariateValues;
  errors: Record<string, string>;
  ok: boolean;
}

/**
 * Parse raw input strings against the form model. Numeric fields must
 * hold finite numbers; categorical fields pass through as text (the
 * service maps unknown values to its out-of-vocabulary slot and warns).
 */
export function validateInputs(
  fields: FormField[],
  raw: Record<string, string>,
): ValidationResult {
  const values: CovariateValues = {};
  const errors: Record<string, string> = {};
  for (const field of fields) {
    const text = (raw[field.name] ?? "").trim();
    if (field.control === "number") {
      if (text === "") {
        errors[field.name] = "required";
        continue;
      }
      const parsed = Number(text);
      if (!Number.isFinite(parsed)) {
        errors[field.name] = "must be a finite number";
        continue;
      }
      values[field.name] = parsed;
    } else {
      if (text === "") {
        errors[field.name] = "required";
        continue;
      }
      values[field.name] = text;
    }
  }
  return { values, errors, ok: Object.keys(errors).length === 0 };
}

export function defaultInputs(fields: FormField[]): Record<string, string> {
  const raw: Record<string, string> = {};
  for (const field of fields) {
    raw[field.name] = String(field.defaultValue);
  }
  return raw;
}
