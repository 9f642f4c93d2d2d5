import { describe, expect, it } from "vitest";
import {
  renderApiFailure,
  renderCases,
  renderExplanation,
  renderNetworkGraph,
  renderSubscalePopup,
  renderValidation,
} from "../src/render.js";
import type {
  CasesResponse,
  ExplainResponse,
  FeatureValues,
  ModelDoc,
  PredictResponse,
} from "../src/types.js";
import modelFixture from "./fixtures/model.json";
import predictFixture from "./fixtures/predict.json";
import explainFixture from "./fixtures/explain.json";
import casesFixture from "./fixtures/cases.json";
import queryFixture from "./fixtures/explain_features.json";

const model = modelFixture as unknown as ModelDoc;
const prediction = predictFixture as unknown as PredictResponse;
const explanation = explainFixture as unknown as ExplainResponse;
const cases = casesFixture as unknown as CasesResponse;
const query = queryFixture as unknown as FeatureValues;
const featureOrder = model.features.map((f) => f.name);

describe("rendering from fixed service responses", () => {
  it("network graph is stable", () => {
    expect(renderNetworkGraph(prediction)).toMatchSnapshot();
  });

  it("subscale popup is stable", () => {
    expect(
      renderSubscalePopup(model, prediction, "ExternalRiskEstimate", query)
    ).toMatchSnapshot();
  });

  it("explanation panel is stable", () => {
    expect(renderExplanation(explanation)).toMatchSnapshot();
  });

  it("case table is stable", () => {
    expect(renderCases(cases, query, featureOrder)).toMatchSnapshot();
  });

  it("validation and failure messages are stable", () => {
    expect(renderValidation(["NumTotalTrades must be a number"])).toMatchSnapshot();
    expect(renderApiFailure("service unavailable")).toMatchSnapshot();
  });

  it("explanation panel quotes the rule text verbatim", () => {
    const html = renderExplanation(explanation);
    for (const feature of explanation.rule.features) {
      expect(html).toContain(feature.name.replace(/≥/g, "≥"));
    }
    expect(html).toContain(`support ${explanation.rule.support}`);
  });

  it("case table puts the query observation first", () => {
    const html = renderCases(cases, query, featureOrder);
    const queryPos = html.indexOf("query-row");
    const firstCasePos = html.indexOf("case-row");
    expect(queryPos).toBeGreaterThan(-1);
    expect(firstCasePos).toBeGreaterThan(queryPos);
    expect(cases.cases.length).toBeLessThanOrEqual(5);
  });
});
