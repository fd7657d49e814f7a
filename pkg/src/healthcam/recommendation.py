"""Maps predicted pollutant levels plus declared symptoms to a verdict.

The verdict is the maximum severity over every triggered rule: a
general-population rule keyed on the AQI class always applies, and each
declared symptom contributes its own pollutant thresholds from the rule
table. Raising any pollutant value or adding any symptom can therefore
never lower the verdict.

The shipped threshold table is configurable screening policy, not
medical guidance.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .dataset import (
    DEFAULT_BREAKPOINTS,
    POLLUTANT_NAMES,
    AqiClass,
    PollutantVector,
    classify_aqi,
)

SYMPTOM_VOCABULARY = (
    "asthma",
    "copd",
    "heart-condition",
    "pregnancy",
    "child",
    "elderly",
    "eye-irritation",
    "allergy",
    "none",
)


class RecommendationError(ValueError):
    pass


class Severity(enum.IntEnum):
    SUITABLE = 0
    CAUTION = 1
    UNSUITABLE = 2

    @property
    def token(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class SymptomProfile:
    symptoms: frozenset

    def __post_init__(self):
        unknown = sorted(set(self.symptoms) - set(SYMPTOM_VOCABULARY))
        if unknown:
            raise RecommendationError(f"unknown symptom {unknown[0]!r}")

    @classmethod
    def parse(cls, text: str) -> "SymptomProfile":
        """Comma-separated vocabulary items; blank input means 'none'."""
        tokens = [t.strip() for t in (text or "").split(",") if t.strip()]
        if not tokens:
            tokens = ["none"]
        return cls(symptoms=frozenset(tokens))

    def active(self) -> list:
        """Symptoms that carry rules, in vocabulary order ('none' carries none)."""
        return [s for s in SYMPTOM_VOCABULARY if s in self.symptoms and s != "none"]


@dataclass(frozen=True)
class Rule:
    symptom: str
    pollutant: str
    caution: float
    unsuitable: float

    def __post_init__(self):
        if self.pollutant not in POLLUTANT_NAMES:
            raise RecommendationError(
                f"rule for {self.symptom!r}: unknown pollutant {self.pollutant!r}"
            )
        if not self.caution < self.unsuitable:
            raise RecommendationError(
                f"rule for {self.symptom!r}/{self.pollutant}: caution threshold "
                f"({self.caution}) must be below unsuitable threshold ({self.unsuitable})"
            )


class RuleTable:
    """Validated per-symptom thresholds plus the general AQI-class policy."""

    def __init__(self, by_symptom: dict, general_caution: AqiClass, general_unsuitable: AqiClass):
        if not general_caution < general_unsuitable:
            raise RecommendationError(
                "general policy: caution class must be below unsuitable class"
            )
        self.by_symptom = by_symptom
        self.general_caution = general_caution
        self.general_unsuitable = general_unsuitable

    @classmethod
    def from_json(cls, doc: dict) -> "RuleTable":
        try:
            jsonschema.validate(doc, _RULES_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise RecommendationError(f"rules document invalid at {where}: {exc.message}") from exc
        by_symptom = {
            symptom: [Rule(symptom=symptom, **entry) for entry in entries]
            for symptom, entries in doc["symptoms"].items()
        }
        return cls(
            by_symptom=by_symptom,
            general_caution=AqiClass.from_token(doc["general"]["caution_at_class"]),
            general_unsuitable=AqiClass.from_token(doc["general"]["unsuitable_at_class"]),
        )

    def rules_for(self, symptom: str) -> list:
        return self.by_symptom.get(symptom, [])


_RULES_SCHEMA = json.loads(
    resources.files("healthcam.data").joinpath("rules.schema.json").read_text()
)


def load_rules(path=None) -> RuleTable:
    """Load and validate a rules document; defaults to the shipped table."""
    if path is None:
        raw = resources.files("healthcam.data").joinpath("default_rules.json").read_text()
        source = "<default>"
    else:
        source = str(path)
        try:
            raw = Path(path).read_text()
        except OSError as exc:
            raise RecommendationError(f"cannot read rules file {source}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RecommendationError(f"rules file {source} is not valid JSON: {exc}") from exc
    return RuleTable.from_json(doc)


@dataclass(frozen=True)
class TriggeredRule:
    symptom: str  # "general" for the AQI-class policy
    pollutant: str
    value: float
    threshold: float
    severity: Severity

    def to_json(self) -> dict:
        return {
            "symptom": self.symptom,
            "pollutant": self.pollutant,
            "value": self.value,
            "threshold": self.threshold,
            "severity": self.severity.token,
        }


@dataclass(frozen=True)
class Recommendation:
    verdict: Severity
    triggered: tuple
    aqi_class: AqiClass
    advisory_key: str

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.token,
            "advisory_key": self.advisory_key,
            "aqi_class": self.aqi_class.token,
            "triggered": [t.to_json() for t in self.triggered],
        }


def _general_trigger(prediction: PollutantVector, rules: RuleTable, aqi_class: AqiClass):
    if aqi_class >= rules.general_unsuitable:
        severity, at_class = Severity.UNSUITABLE, rules.general_unsuitable
    elif aqi_class >= rules.general_caution:
        severity, at_class = Severity.CAUTION, rules.general_caution
    else:
        return None
    # the class band's lower PM2.5 bound makes the trigger explainable
    lower = DEFAULT_BREAKPOINTS.maxima[at_class - 1] if at_class > 0 else 0.0
    return TriggeredRule(
        symptom="general",
        pollutant="pm25",
        value=prediction.pm25,
        threshold=float(lower),
        severity=severity,
    )


def recommend(
    prediction: PollutantVector, profile: SymptomProfile, rules: RuleTable
) -> Recommendation:
    """Deterministic verdict: max severity over all triggered rules.

    With no declared symptoms only the general-population AQI-class rule
    applies (caution / unsuitable at the configured class bands).
    """
    aqi_class = classify_aqi(prediction.pm25)
    triggered = []

    general = _general_trigger(prediction, rules, aqi_class)
    if general is not None:
        triggered.append(general)

    for symptom in profile.active():
        for rule in rules.rules_for(symptom):
            value = float(getattr(prediction, rule.pollutant))
            if value >= rule.unsuitable:
                triggered.append(
                    TriggeredRule(symptom, rule.pollutant, value, rule.unsuitable, Severity.UNSUITABLE)
                )
            elif value >= rule.caution:
                triggered.append(
                    TriggeredRule(symptom, rule.pollutant, value, rule.caution, Severity.CAUTION)
                )

    verdict = max((t.severity for t in triggered), default=Severity.SUITABLE)
    return Recommendation(
        verdict=verdict,
        triggered=tuple(triggered),
        aqi_class=aqi_class,
        advisory_key=f"verdict.{verdict.token}",
    )
