import { buildColorScale, renderLegend } from "./colors.js";
import type {
  CasesResponse,
  ExplainResponse,
  FeatureSpec,
  FeatureValues,
  ModelDoc,
  PredictResponse,
  SubscaleScore,
} from "./types.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number, digits = 3): string {
  return value.toFixed(digits);
}

export function isMissing(spec: FeatureSpec, value: number | null): boolean {
  return value === null || spec.missing_codes.includes(value);
}

/** Index of the scoring-table row a raw value falls into (bins are ascending). */
export function activeIntervalIndex(spec: FeatureSpec, value: number): number {
  let index = 0;
  for (const t of spec.thresholds) {
    if (value >= t) {
      index += 1;
    }
  }
  return index;
}

/**
 * Two-layer network view: one clickable node per subscale feeding the final
 * probability node. Node color tracks the subscale's weighted score relative
 * to the other subscales.
 */
export function renderNetworkGraph(prediction: PredictResponse): string {
  const scale = buildColorScale(prediction.subscales.map((s) => s.weighted_score));
  const nodes = prediction.subscales
    .map((s) => {
      const color = scale.colorFor(s.weighted_score);
      return (
        `<button class="subscale-node" data-subscale="${escapeHtml(s.name)}"` +
        ` style="background:${color}">` +
        `<span class="node-name">${escapeHtml(s.name)}</span>` +
        `<span class="node-risk">${fmt(s.risk)}</span></button>`
      );
    })
    .join("");
  return (
    `<div class="network-graph">` +
    `<div class="subscale-layer">${nodes}</div>` +
    `<div class="output-node" data-probability="${prediction.probability}">` +
    `risk ${fmt(prediction.probability)}</div>` +
    renderLegend() +
    `</div>`
  );
}

function findSubscale(
  prediction: PredictResponse,
  name: string
): SubscaleScore | undefined {
  return prediction.subscales.find((s) => s.name === name);
}

/**
 * Detail popup for one subscale: the breakdown numbers from the prediction
 * plus the per-feature scoring tables with the currently-active row marked.
 */
export function renderSubscalePopup(
  model: ModelDoc,
  prediction: PredictResponse,
  subscaleName: string,
  features: FeatureValues
): string {
  const score = findSubscale(prediction, subscaleName);
  const tables = model.scoring_tables.find((t) => t.subscale === subscaleName);
  if (!score || !tables) {
    return `<div class="popup popup-error">unknown subscale: ${escapeHtml(subscaleName)}</div>`;
  }
  const header =
    `<dl class="subscale-breakdown">` +
    `<dt>points</dt><dd data-points="${score.points}">${fmt(score.points)}</dd>` +
    `<dt>risk</dt><dd data-risk="${score.risk}">${fmt(score.risk)}</dd>` +
    `<dt>weight</dt><dd data-weight="${score.weight}">${fmt(score.weight)}</dd>` +
    `<dt>weighted score</dt>` +
    `<dd data-weighted-score="${score.weighted_score}">${fmt(score.weighted_score)}</dd>` +
    `</dl>`;
  const tableHtml = tables.tables
    .map((table) => {
      const spec = model.features.find((f) => f.name === table.feature);
      const value = features[table.feature] ?? null;
      const missing = spec ? isMissing(spec, value) : true;
      const activeRow =
        spec && !missing ? activeIntervalIndex(spec, value as number) : -1;
      const rows = table.rows
        .map((row, i) => {
          const cls = i === activeRow ? ` class="active-interval"` : "";
          return (
            `<tr${cls}><td>${escapeHtml(row.interval)}</td>` +
            `<td>${fmt(row.points)}</td></tr>`
          );
        })
        .join("");
      const note = missing
        ? `<p class="missing-note">${escapeHtml(table.feature)} is missing; no interval applies</p>`
        : "";
      return (
        `<table class="scoring-table" data-feature="${escapeHtml(table.feature)}">` +
        `<thead><tr><th>interval</th><th>points</th></tr></thead>` +
        `<tbody>${rows}</tbody></table>${note}`
      );
    })
    .join("");
  return (
    `<div class="popup" data-subscale="${escapeHtml(subscaleName)}">` +
    `<h3>${escapeHtml(subscaleName)}</h3>${header}${tableHtml}</div>`
  );
}

export function renderExplanation(explanation: ExplainResponse): string {
  const conditions = explanation.rule.features
    .map((f) => `<li>${escapeHtml(f.name)}</li>`)
    .join("");
  return (
    `<div class="explanation">` +
    `<p class="rule-text">${escapeHtml(explanation.rule.text)}</p>` +
    `<ul class="rule-conditions">${conditions}</ul>` +
    `<p class="rule-meta">support ${explanation.rule.support} · ` +
    `${explanation.rule.sparsity} conditions · step ${escapeHtml(explanation.step)}</p>` +
    `</div>`
  );
}

/**
 * Similar-case table. The query observation is always the first row so the
 * supporting cases can be read against it column by column.
 */
export function renderCases(
  result: CasesResponse,
  query: FeatureValues,
  featureOrder: string[]
): string {
  const head = featureOrder
    .map((name) => `<th>${escapeHtml(name)}</th>`)
    .join("");
  const queryCells = featureOrder
    .map((name) => `<td>${query[name] === null ? "missing" : query[name]}</td>`)
    .join("");
  const caseRows = result.cases
    .map((c) => {
      const cells = featureOrder
        .map((name) => `<td>${c.raw_values[name]}</td>`)
        .join("");
      return (
        `<tr class="case-row" data-row-index="${c.row_index}">` +
        `<td>case ${c.row_index}</td>${cells}</tr>`
      );
    })
    .join("");
  return (
    `<div class="cases">` +
    `<p class="cases-rule">${escapeHtml(result.rule_text)}</p>` +
    `<table class="case-table">` +
    `<thead><tr><th></th>${head}</tr></thead>` +
    `<tbody><tr class="query-row"><td>you</td>${queryCells}</tr>${caseRows}</tbody>` +
    `</table></div>`
  );
}

export function renderValidation(problems: string[]): string {
  if (problems.length === 0) {
    return "";
  }
  const items = problems.map((p) => `<li>${escapeHtml(p)}</li>`).join("");
  return `<ul class="validation-errors">${items}</ul>`;
}

export function renderApiFailure(message: string): string {
  return `<div class="api-failure" role="alert">${escapeHtml(message)}</div>`;
}
